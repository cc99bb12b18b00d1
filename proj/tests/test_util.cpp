#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

#include <hondge/util.hpp>

#include "helpers.hpp"

using namespace hondge;

TEST_CASE("split_ws handles spaces, tabs, and CR") {
    auto t = split_ws("  a\tbb  ccc\r");
    REQUIRE(t.size() == 3);
    CHECK(t[0] == "a");
    CHECK(t[1] == "bb");
    CHECK(t[2] == "ccc");
    CHECK(split_ws("").empty());
    CHECK(split_ws("   \t ").empty());
    CHECK(split_ws("x").size() == 1);
}

TEST_CASE("split_char keeps empty fields") {
    auto t = split_char("a\t\tb", '\t');
    REQUIRE(t.size() == 3);
    CHECK(t[0] == "a");
    CHECK(t[1] == "");
    CHECK(t[2] == "b");
    CHECK(split_char("", ',').size() == 1);
    auto u = split_char("x,", ',');
    REQUIRE(u.size() == 2);
    CHECK(u[1] == "");
}

TEST_CASE("strip_cr removes a single trailing CR") {
    CHECK(strip_cr("abc\r") == "abc");
    CHECK(strip_cr("abc") == "abc");
    CHECK(strip_cr("") == "");
    CHECK(strip_cr("\r") == "");
}

TEST_CASE("join concatenates with separator") {
    std::vector<std::string> v{"a", "b", "c"};
    CHECK(join(v.begin(), v.end(), ",") == "a,b,c");
    CHECK(join(v.begin(), v.begin(), ",") == "");
    CHECK(join(v.begin(), v.begin() + 1, ",") == "a");
}

TEST_CASE("render_double round-trips exactly") {
    const double cases[] = {0.0,      1.0,       -1.0,     0.1,    1.0 / 3.0,
                            2.5,      1e300,     1e-300,   -0.0,   3.141592653589793,
                            42.0,     16.0,      1.0 / 7.0};
    for (double v : cases) {
        std::string s = render_double(v);
        double back = parse_double(s, "test");
        CHECK(std::memcmp(&v, &back, sizeof v) == 0);
    }
    CHECK(render_double(2.5) == "2.5");
    CHECK(render_double(16.0) == "16");
}

TEST_CASE("parse_double rejects junk and partial parses") {
    CHECK(parse_double("1.5", "x") == 1.5);
    CHECK_THROWS_AS(parse_double("1.5x", "x"), Error);
    CHECK_THROWS_AS(parse_double("", "x"), Error);
    CHECK_THROWS_AS(parse_double("abc", "x"), Error);
    CHECK_THROWS_WITH(parse_double("zz", "weight"), Catch::Matchers::ContainsSubstring("weight"));
}

TEST_CASE("parse_long rejects junk") {
    CHECK(parse_long("42", "x") == 42);
    CHECK(parse_long("-7", "x") == -7);
    CHECK_THROWS_AS(parse_long("4.2", "x"), Error);
    CHECK_THROWS_AS(parse_long("", "x"), Error);
}

TEST_CASE("file helpers round-trip and report failures") {
    auto p = testutil::temp_path("util_io.txt");
    write_file(p, "line1\nline2\n");
    auto lines = read_lines(p);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "line1");
    CHECK(read_file(p) == "line1\nline2\n");

    CHECK_THROWS_AS(read_lines("/nonexistent/really/not/here.txt"), Error);
    try {
        read_lines("/nonexistent/really/not/here.txt");
    } catch (const Error& e) {
        CHECK(e.kind == Error::Kind::runtime);
    }
}

TEST_CASE("error kinds distinguish validation from runtime") {
    CHECK(validation_error("x").kind == Error::Kind::validation);
    CHECK(runtime_error("x").kind == Error::Kind::runtime);
    CHECK(std::string(validation_error("boom").what()) == "boom");
}
