#include <catch2/catch_amalgamated.hpp>

#include <string>

#include <hondge/corpus.hpp>

#include "helpers.hpp"

using namespace hondge;
using testutil::write_temp;

TEST_CASE("load_corpus assigns dense first-appearance ids") {
    auto p = write_temp("c_basic.txt", "A C D\nB C E\n");
    auto c = load_corpus(p);
    CHECK(c.n_entities() == 5);
    REQUIRE(c.paths.size() == 2);
    CHECK(c.id_of("A") == 0);
    CHECK(c.id_of("C") == 1);
    CHECK(c.id_of("D") == 2);
    CHECK(c.id_of("B") == 3);
    CHECK(c.id_of("E") == 4);
    CHECK(c.paths[0] == std::vector<EntityId>{0, 1, 2});
    CHECK(c.total_transitions() == 4);
}

TEST_CASE("load_corpus strips a leading line id when asked") {
    auto p = write_temp("c_lineid.txt", "1 A C D\n");
    auto c = load_corpus(p, true);
    REQUIRE(c.paths.size() == 1);
    CHECK(c.n_entities() == 3);
    CHECK(c.paths[0] == std::vector<EntityId>{0, 1, 2});
    CHECK_FALSE(c.ids.count("1"));
}

TEST_CASE("load_corpus skips comments and blank lines") {
    auto p = write_temp("c_comments.txt", "# header\n\n  \nA B\n#tail\n");
    auto c = load_corpus(p);
    CHECK(c.paths.size() == 1);
    CHECK(c.rejected_lines == 0);
}

TEST_CASE("load_corpus rejects reserved characters naming the line") {
    auto p = write_temp("c_reserved.txt", "C|A D\n");
    CHECK_THROWS_WITH(load_corpus(p), Catch::Matchers::ContainsSubstring("line 1"));
    auto q = write_temp("c_reserved2.txt", "A B\nx,y z\n");
    CHECK_THROWS_WITH(load_corpus(q), Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("load_corpus tolerates up to 10% short lines") {
    std::string ok10;
    for (int i = 0; i < 9; ++i) ok10 += "A B\n";
    ok10 += "X\n";  // 1 of 10 rejected: allowed
    auto c = load_corpus(write_temp("c_ok10.txt", ok10));
    CHECK(c.paths.size() == 9);
    CHECK(c.rejected_lines == 1);

    std::string bad;
    for (int i = 0; i < 9; ++i) bad += "A B\n";
    bad += "X\nY\n";  // 2 of 11 rejected: fails
    CHECK_THROWS_AS(load_corpus(write_temp("c_bad.txt", bad)), Error);
}

TEST_CASE("a wrong has_line_id flag on 2-token paths fails loudly") {
    std::string text;
    for (int i = 0; i < 20; ++i) text += "A B\n";
    CHECK_THROWS_AS(load_corpus(write_temp("c_flag.txt", text), true), Error);
}

TEST_CASE("corpus round-trips with identical ids") {
    auto p = write_temp("c_rt1.txt", "A C D\nB C E\nA C E\n");
    auto c1 = load_corpus(p);
    auto q = testutil::temp_path("c_rt2.txt");
    save_corpus(c1, q);
    auto c2 = load_corpus(q);
    CHECK(c1.paths == c2.paths);
    CHECK(c1.tokens == c2.tokens);
}

TEST_CASE("entity index is a bijection") {
    auto c = load_corpus(write_temp("c_bij.txt", "A C D\nB C E\n"));
    for (EntityId e = 0; e < c.n_entities(); ++e) CHECK(c.id_of(c.tokens[e]) == e);
    CHECK_THROWS_AS(c.id_of("nope"), Error);
}

TEST_CASE("load_labels builds dense class ids over corpus entities") {
    auto c = load_corpus(write_temp("l_corpus.txt", "A B\nC D\n"));
    auto labels = load_labels(write_temp("l_basic.tsv", "A\tred\nB\tred\nC\tblue\n"), c);
    CHECK(labels.n_classes() == 2);
    CHECK(labels.label_of.size() == 3);
    CHECK(labels.at(c.id_of("A")) == labels.at(c.id_of("B")));
    CHECK(labels.at(c.id_of("A")) != labels.at(c.id_of("C")));
    CHECK(labels.class_names[0] == "red");
    CHECK(labels.class_names[1] == "blue");
    CHECK_FALSE(labels.has(c.id_of("D")));
    CHECK_THROWS_AS(labels.at(c.id_of("D")), Error);
}

TEST_CASE("labels for unknown entities are skipped and counted") {
    auto c = load_corpus(write_temp("l_corpus2.txt", "A B\n"));
    auto labels = load_labels(write_temp("l_unknown.tsv", "A\tred\nZ\tgreen\n"), c);
    CHECK(labels.skipped_unknown == 1);
    CHECK(labels.n_classes() == 1);
}

TEST_CASE("conflicting duplicate labels are a hard error") {
    auto c = load_corpus(write_temp("l_corpus3.txt", "A B\n"));
    CHECK_THROWS_AS(load_labels(write_temp("l_conflict.tsv", "A\tred\nA\tblue\n"), c), Error);
    auto ok = load_labels(write_temp("l_dup.tsv", "A\tred\nA\tred\n"), c);
    CHECK(ok.n_classes() == 1);
}

TEST_CASE("empty label file yields zero classes") {
    auto c = load_corpus(write_temp("l_corpus4.txt", "A B\n"));
    auto labels = load_labels(write_temp("l_empty.tsv", ""), c);
    CHECK(labels.n_classes() == 0);
    CHECK(labels.label_of.empty());
}

TEST_CASE("malformed label lines raise errors") {
    auto c = load_corpus(write_temp("l_corpus5.txt", "A B\n"));
    CHECK_THROWS_AS(load_labels(write_temp("l_notab.tsv", "A red\n"), c), Error);
    CHECK_THROWS_AS(load_labels(write_temp("l_3col.tsv", "A\tred\textra\n"), c), Error);
}

TEST_CASE("CRLF input loads cleanly") {
    auto c = load_corpus(write_temp("c_crlf.txt", "A C D\r\nB C E\r\n"));
    CHECK(c.paths.size() == 2);
    CHECK(c.n_entities() == 5);
    auto labels = load_labels(write_temp("l_crlf.tsv", "A\tred\r\n"), c);
    CHECK(labels.n_classes() == 1);
}
