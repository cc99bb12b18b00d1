#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <hondge/evaluation.hpp>
#include <hondge/hon.hpp>
#include <hondge/synth.hpp>

#include "helpers.hpp"

using namespace hondge;

namespace {

PlantedChainSpec base_spec() {
    PlantedChainSpec s;
    s.n_entities = 24;
    s.order = 2;
    s.n_paths = 50;
    s.path_len = 10;
    s.memory_strength = 0.7;
    s.n_classes = 3;
    s.seed = 5;
    return s;
}

// Pearson χ² over observed successor counts given expected probabilities.
double chi_square(const std::map<std::pair<EntityId, EntityId>, long>& counts,
                  const std::map<EntityId, long>& source_totals,
                  const std::vector<std::vector<double>>& expected) {
    double chi = 0;
    for (const auto& [q, total] : source_totals)
        for (EntityId w = 0; w < expected[q].size(); ++w) {
            double e = static_cast<double>(total) * expected[q][w];
            auto it = counts.find({q, w});
            double o = it == counts.end() ? 0.0 : static_cast<double>(it->second);
            chi += (o - e) * (o - e) / e;
        }
    return chi;
}

}  // namespace

TEST_CASE("chain specs are validated") {
    CHECK_NOTHROW(base_spec().validate());
    auto bad = base_spec();
    bad.order = 3;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = base_spec();
    bad.memory_strength = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = base_spec();
    bad.memory_strength = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = base_spec();
    bad.n_entities = 5;  // < 2 * n_classes
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = base_spec();
    bad.n_paths = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = base_spec();
    bad.path_len = 2;  // order 2 needs length ≥ 3
    CHECK_THROWS_AS(bad.validate(), Error);
    bad.order = 1;
    CHECK_NOTHROW(bad.validate());
    bad = base_spec();
    bad.n_classes = 1;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("generated corpora have the declared shape and are reproducible") {
    auto spec = base_spec();
    auto data = generate(spec);
    CHECK(data.corpus.n_entities() == 24);
    CHECK(data.corpus.paths.size() == 50);
    for (const auto& p : data.corpus.paths) {
        CHECK(p.size() == 10);
        for (EntityId e : p) CHECK(e < 24);
    }
    CHECK(data.corpus.tokens[0] == "e0");
    CHECK(data.corpus.tokens[23] == "e23");

    // Labels: every entity, contiguous blocks, sizes within one of each other.
    CHECK(data.labels.label_of.size() == 24);
    CHECK(data.labels.class_names == std::vector<std::string>{"c0", "c1", "c2"});
    std::vector<std::size_t> sizes(3, 0);
    for (EntityId e = 0; e < 24; ++e) {
        ++sizes[data.labels.at(e)];
        if (e > 0) CHECK(data.labels.at(e) >= data.labels.at(e - 1));
    }
    CHECK(*std::max_element(sizes.begin(), sizes.end()) -
              *std::min_element(sizes.begin(), sizes.end()) <=
          1);

    auto again = generate(spec);
    CHECK(again.corpus.paths == data.corpus.paths);
    auto other = spec;
    other.seed = 6;
    CHECK(generate(other).corpus.paths != data.corpus.paths);
}

TEST_CASE("planted subsets live inside their blocks") {
    auto spec = base_spec();
    for (EntityId e = 0; e < spec.n_entities; ++e) {
        auto s = planted_subset(spec, e);
        CHECK(s.size() == 8);  // blocks of 8 with n=24, c=3 → min(8, 8)
        std::set<EntityId> distinct(s.begin(), s.end());
        CHECK(distinct.size() == s.size());
        for (EntityId v : s)
            CHECK(planted_class(v, spec.n_entities, spec.n_classes) ==
                  planted_class(e, spec.n_entities, spec.n_classes));
        CHECK(planted_subset(spec, e) == s);
    }
    // Small blocks clamp the subset size.
    PlantedChainSpec tiny = base_spec();
    tiny.n_entities = 8;
    tiny.n_classes = 2;
    CHECK(planted_subset(tiny, 0).size() == 4);
}

TEST_CASE("full memory strength confines steps to the planted subsets") {
    auto spec = base_spec();
    spec.memory_strength = 1.0;
    spec.n_paths = 200;
    auto data = generate(spec);
    std::map<EntityId, std::set<EntityId>> lag2_successors;
    for (const auto& p : data.corpus.paths)
        for (std::size_t t = 2; t < p.size(); ++t) {
            auto s = planted_subset(spec, p[t - 2]);
            CHECK(std::find(s.begin(), s.end(), p[t]) != s.end());
            CHECK(planted_class(p[t], spec.n_entities, spec.n_classes) ==
                  planted_class(p[t - 2], spec.n_entities, spec.n_classes));
            lag2_successors[p[t - 2]].insert(p[t]);
        }
    for (const auto& [e, succs] : lag2_successors) CHECK(succs.size() <= kPlantedSubsetSize);
}

TEST_CASE("zero memory strength is an i.i.d. uniform token stream") {
    PlantedChainSpec spec;
    spec.n_entities = 30;
    spec.order = 1;
    spec.n_paths = 4000;
    spec.path_len = 11;
    spec.memory_strength = 0.0;
    spec.n_classes = 3;
    spec.seed = 11;
    auto data = generate(spec);

    std::map<std::pair<EntityId, EntityId>, long> counts;
    std::map<EntityId, long> totals;
    for (const auto& p : data.corpus.paths)
        for (std::size_t t = 1; t < p.size(); ++t) {
            ++counts[{p[t - 1], p[t]}];
            ++totals[p[t - 1]];
        }
    std::vector<std::vector<double>> expected(30, std::vector<double>(30, 1.0 / 30.0));
    // χ² with 30·29 = 870 degrees of freedom: mean 870, sd ≈ 41.7.
    CHECK(chi_square(counts, totals, expected) < 1100.0);
}

TEST_CASE("first-order chains follow the planted marginal law") {
    PlantedChainSpec spec;
    spec.n_entities = 20;
    spec.order = 1;
    spec.n_paths = 4000;
    spec.path_len = 11;
    spec.memory_strength = 0.6;
    spec.n_classes = 2;
    spec.seed = 13;
    auto data = generate(spec);

    std::vector<std::vector<double>> expected(20, std::vector<double>(20, 0.4 / 20.0));
    for (EntityId e = 0; e < 20; ++e)
        for (EntityId v : planted_subset(spec, e)) expected[e][v] += 0.6 / 8.0;

    std::map<std::pair<EntityId, EntityId>, long> counts;
    std::map<EntityId, long> totals;
    for (const auto& p : data.corpus.paths)
        for (std::size_t t = 1; t < p.size(); ++t) {
            ++counts[{p[t - 1], p[t]}];
            ++totals[p[t - 1]];
        }
    // 20·19 = 380 degrees of freedom: mean 380, sd ≈ 27.6.
    CHECK(chi_square(counts, totals, expected) < 520.0);
}

TEST_CASE("second-order chains follow the planted conditional law") {
    PlantedChainSpec spec;
    spec.n_entities = 20;
    spec.order = 2;
    spec.n_paths = 4000;
    spec.path_len = 11;
    spec.memory_strength = 0.6;
    spec.n_classes = 2;
    spec.seed = 17;
    auto data = generate(spec);

    std::vector<std::vector<double>> expected(20, std::vector<double>(20, 0.4 / 20.0));
    for (EntityId e = 0; e < 20; ++e)
        for (EntityId v : planted_subset(spec, e)) expected[e][v] += 0.6 / 8.0;

    // Condition on the token two steps back — the planted dependency.
    std::map<std::pair<EntityId, EntityId>, long> counts;
    std::map<EntityId, long> totals;
    for (const auto& p : data.corpus.paths)
        for (std::size_t t = 2; t < p.size(); ++t) {
            ++counts[{p[t - 2], p[t]}];
            ++totals[p[t - 2]];
        }
    CHECK(chi_square(counts, totals, expected) < 520.0);
}

TEST_CASE("memoryless corpora admit no conditional nodes") {
    PlantedChainSpec spec;
    spec.n_entities = 30;
    spec.order = 2;
    spec.n_paths = 50000;
    spec.path_len = 13;
    spec.memory_strength = 0.0;
    spec.n_classes = 3;
    spec.seed = 23;
    auto data = generate(spec);
    auto g = build_hon(data.corpus, HonConfig{2, 1.0, 1});
    // Dense uniform statistics: every context's law matches the marginal, so
    // the divergence test rejects everything.
    CHECK(g.n_nodes() == g.n_entities());
}

TEST_CASE("planted contexts are admitted exactly when the oracle says so") {
    PlantedChainSpec spec;
    spec.n_entities = 20;
    spec.order = 2;
    spec.n_paths = 3000;
    spec.path_len = 11;
    spec.memory_strength = 1.0;
    spec.n_classes = 2;
    spec.seed = 29;
    auto data = generate(spec);
    const long min_support = 20;
    auto g = build_hon(data.corpus, HonConfig{2, 1.0, static_cast<std::size_t>(min_support)});

    auto bc = testutil::brute_count(data.corpus, 2);
    std::set<std::pair<std::string, std::string>> in_graph;  // (context token, base token)
    for (NodeId n = 0; n < g.n_nodes(); ++n)
        if (g.nodes[n].order() == 2)
            in_graph.insert({g.entity_tokens[g.nodes[n].context[0]],
                             g.entity_tokens[g.nodes[n].base]});

    std::size_t admitted = 0;
    for (const auto& [key, succs] : bc.succ) {
        if (key.size() != 2) continue;
        long freq = bc.total(key);
        if (freq < min_support) {
            CHECK_FALSE(in_graph.count({key[0], key[1]}));
            continue;
        }
        auto kl = testutil::brute_kl(bc.dist({key[1]}), bc.dist(key));
        bool admit = kl > testutil::brute_threshold(1.0L, 2, freq);
        if (admit) ++admitted;
        INFO(key[0] << "," << key[1] << " kl=" << static_cast<double>(kl));
        CHECK(in_graph.count({key[0], key[1]}) == (admit ? 1u : 0u));
    }
    CHECK(admitted > 0);
    CHECK(in_graph.size() == admitted);
}

TEST_CASE("labels round-trip through the TSV format") {
    PlantedChainSpec spec;
    spec.n_entities = 9;
    spec.order = 1;
    spec.n_paths = 10;
    spec.path_len = 4;
    spec.memory_strength = 0.5;
    spec.n_classes = 3;
    spec.seed = 31;
    auto data = generate(spec);
    auto tsv = labels_tsv(data.labels, data.corpus);
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 9);
    auto path = testutil::write_temp("synth_labels.tsv", tsv);
    auto back = load_labels(path, data.corpus);
    CHECK(back.class_names == data.labels.class_names);
    CHECK(back.label_of == data.labels.label_of);
    CHECK(back.skipped_unknown == 0);
}

TEST_CASE("planted order-2 structure rewards the higher-order ensemble") {
    TrainConfig cfg;
    cfg.hidden = 32;
    cfg.fanouts = {8, 1};
    cfg.dropout = 0.4;
    cfg.lr = 0.02;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.patience = 5;
    cfg.holdout_frac = 0.1;

    auto run = [&](double strength) {
        PlantedChainSpec spec;
        spec.n_entities = 60;
        spec.order = 2;
        spec.n_paths = 4000;
        spec.path_len = 8;
        spec.memory_strength = strength;
        spec.n_classes = 3;
        spec.seed = 37;
        auto data = generate(spec);
        auto g1 = build_fon(data.corpus);
        auto g2 = build_hon(data.corpus, HonConfig{2, 1.0, 1});
        auto folds = make_folds(data.labels, 5, spec.seed);
        double dge = run_node_fold(g2, data.labels, folds, 0, VariantTag::bag, 4, cfg, spec.seed);
        double single =
            run_node_fold(g1, data.labels, folds, 0, VariantTag::bag, 1, cfg, spec.seed);
        return std::make_pair(dge, single);
    };

    auto [dge_strong, single_strong] = run(1.0);
    INFO("strength 1.0: ensemble " << dge_strong << " vs single " << single_strong);
    CHECK(dge_strong - single_strong > 0.1);
    CHECK(dge_strong > 0.55);

    auto [dge_null, single_null] = run(0.0);
    INFO("strength 0.0: ensemble " << dge_null << " vs single " << single_null);
    CHECK(std::abs(dge_null - single_null) <= 0.25);
}
