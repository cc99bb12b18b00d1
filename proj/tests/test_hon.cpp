#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <hondge/hon.hpp>

#include "helpers.hpp"

using namespace hondge;
using testutil::brute_count;
using testutil::brute_kl;
using testutil::brute_threshold;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Oracle constants (40-digit independent arithmetic).
constexpr double kDiv16 = 0.59632253897119794628;
constexpr double kThr16 = 0.48930108423645206078;  // 2/log2(17)
constexpr double kDiv8 = 0.20751874963942190927;
constexpr double kThr8 = 0.86135311614678610134;  // 2/log2(5)
constexpr double kDivK3m2 = 0.3219280948873623;
constexpr double kThrK3m2 = 0.3003809664473759;   // 2/log2(101)
constexpr double kDivK3m3 = 1.0874628412503394;
constexpr double kThrK3m3 = 0.4911169663356469;   // 3/log2(69)

const CandidateRule* find_rule(const std::vector<CandidateRule>& rules, const HonNode& n) {
    for (const auto& r : rules)
        if (r.node == n) return &r;
    return nullptr;
}

// Random corpora for property tests, generated with std::mt19937 so the
// stream is independent of the library's generator.
PathCorpus random_corpus(unsigned seed, int n_tokens = 6, int n_paths = 60) {
    std::mt19937 gen(seed);
    std::uniform_int_distribution<int> len(2, 8), tok(0, n_tokens - 1);
    PathCorpus c;
    for (int t = 0; t < n_tokens; ++t) c.intern("t" + std::to_string(t));
    for (int p = 0; p < n_paths; ++p) {
        std::vector<EntityId> path;
        int L = len(gen);
        for (int i = 0; i < L; ++i) path.push_back(static_cast<EntityId>(tok(gen)));
        c.paths.push_back(std::move(path));
    }
    return c;
}

void check_conservation(const PathCorpus& corpus, const HonGraph& gk, const HonGraph& g1) {
    CHECK(gk.total_edge_weight() == static_cast<double>(corpus.total_transitions()));
    CHECK(g1.total_edge_weight() == static_cast<double>(corpus.total_transitions()));
    for (EntityId u = 0; u < gk.n_entities(); ++u) {
        double fam_out = 0;
        for (NodeId n : family(gk, u)) fam_out += out_degree_weighted(gk, n);
        CHECK(fam_out == out_degree_weighted(g1, u));
    }
}

// Per-family walker flow: relatives' walker probabilities, weighted by
// relative out-degree share and aggregated by target base entity, must
// reproduce the first-order law exactly.
void check_flow(const HonGraph& gk, const HonGraph& g1) {
    for (EntityId u = 0; u < gk.n_entities(); ++u) {
        double total = 0;
        for (NodeId n : family(gk, u)) total += out_degree_weighted(gk, n);
        if (total <= 0) continue;
        std::map<EntityId, double> agg;
        for (NodeId n : family(gk, u)) {
            double share = out_degree_weighted(gk, n) / total;
            if (share <= 0) continue;
            for (const auto& [v, p] : entity_out_dist(gk, n)) agg[v] += share * p;
        }
        for (const auto& [v, p] : entity_out_dist(g1, u))
            CHECK(std::abs(agg[v] - p) < 1e-9);
    }
}

} // namespace

TEST_CASE("kl_divergence matches hand values and handles edge cases") {
    EntityDist half{{0, 0.5}, {1, 0.5}};
    EntityDist skew{{0, 0.75}, {1, 0.25}};
    EntityDist onehot{{0, 1.0}};
    CHECK(kl_divergence(half, half) == 0.0);
    CHECK(std::abs(kl_divergence(skew, half) - kDiv8) < 1e-12);
    CHECK(kl_divergence(onehot, half) == kInf);
    CHECK_THROWS_AS(kl_divergence(half, EntityDist{}), Error);
}

TEST_CASE("kl_divergence agrees with a long-double oracle on random distributions") {
    std::mt19937 gen(99);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        EntityDist first, cand;
        testutil::TokenDist bf, bc;
        double s1 = 0, s2 = 0;
        std::vector<double> w1(5), w2(5);
        for (int v = 0; v < 5; ++v) { w1[v] = u(gen); s1 += w1[v]; }
        for (int v = 0; v < 5; ++v) { w2[v] = u(gen); s2 += w2[v]; }
        for (int v = 0; v < 5; ++v) {
            first.emplace_back(v, w1[v] / s1);
            cand.emplace_back(v, w2[v] / s2);
            std::string tok = std::to_string(v);
            bf[tok] = w1[v] / s1;
            bc[tok] = w2[v] / s2;
        }
        double lib = kl_divergence(cand, first);
        double oracle = static_cast<double>(brute_kl(bf, bc));
        CHECK(std::abs(lib - oracle) < 1e-12);
        CHECK(lib >= 0.0);  // Gibbs
    }
}

TEST_CASE("walker_prob divides edge weight by weighted out-degree") {
    GraphBuilder b(1);
    b.intern_entity("u");
    b.intern_entity("v");
    b.intern_entity("w");
    b.add_node({0, {}});
    b.add_node({1, {}});
    b.add_node({2, {}});
    b.add_edge_weight(0, 1, 2);
    b.add_edge_weight(0, 2, 3);
    b.add_edge_weight(1, 2, 1);
    auto g = b.finish();
    CHECK(walker_prob(g, 0, 1) == 0.4);
    CHECK(walker_prob(g, 1, 2) == 1.0);
    CHECK(walker_prob(g, 0, 0) == 0.0);          // absent edge
    CHECK_THROWS_WITH(walker_prob(g, 2, 0), Catch::Matchers::ContainsSubstring("sink"));
}

TEST_CASE("build_fon counts adjacent occurrences") {
    auto c = testutil::make_corpus({{{"A", "C"}, 2}});
    auto g = build_fon(c);
    CHECK(g.edge_weight(c.id_of("A"), c.id_of("C")) == 2.0);

    auto c2 = testutil::make_corpus({{{"A", "C", "D"}, 1}});
    auto g2 = build_fon(c2);
    CHECK(g2.edge_weight(c2.id_of("A"), c2.id_of("C")) == 1.0);
    CHECK(g2.edge_weight(c2.id_of("C"), c2.id_of("D")) == 1.0);
    CHECK(g2.edge_weight(c2.id_of("A"), c2.id_of("D")) == 0.0);

    auto c3 = testutil::make_corpus({{{"A", "A"}, 1}});
    auto g3 = build_fon(c3);
    CHECK(g3.edge_weight(0, 0) == 1.0);  // self-loop allowed
}

TEST_CASE("enumerate_candidates on the mild corpus rejects the rule") {
    auto c = testutil::corpus8();
    auto rules = enumerate_candidates(c, HonConfig{2, 1.0, 1});
    REQUIRE(rules.size() == 2);  // (C|A) and (C|B); path-final contexts excluded
    const auto* ca = find_rule(rules, {c.id_of("C"), {c.id_of("A")}});
    REQUIRE(ca != nullptr);
    CHECK(ca->freq == 4);
    REQUIRE(ca->next_dist.size() == 2);
    CHECK(ca->next_dist[0] == std::pair<EntityId, double>{c.id_of("D"), 0.75});
    CHECK(ca->next_dist[1] == std::pair<EntityId, double>{c.id_of("E"), 0.25});
    CHECK(std::abs(ca->divergence - kDiv8) < 1e-9);
    CHECK(std::abs(ca->threshold - kThr8) < 1e-9);
    CHECK_FALSE(ca->admitted);
}

TEST_CASE("enumerate_candidates respects min_support and successor requirement") {
    auto c = testutil::make_corpus({{{"A", "B"}, 1}, {{"C", "D"}, 1}});
    CHECK(enumerate_candidates(c, HonConfig{2, 1.0, 2}).empty());
    // (B|A) has no successor (path end) → no candidate at all
    CHECK(enumerate_candidates(c, HonConfig{2, 1.0, 1}).empty());
    CHECK_THROWS_AS(enumerate_candidates(c, HonConfig{1, 1.0, 1}), Error);
}

TEST_CASE("admission arithmetic on the 16-path corpus matches the oracle") {
    auto c = testutil::corpus16();
    auto rules = enumerate_candidates(c, HonConfig{2, 1.0, 1});
    const auto* ca = find_rule(rules, {c.id_of("C"), {c.id_of("A")}});
    const auto* cb = find_rule(rules, {c.id_of("C"), {c.id_of("B")}});
    REQUIRE(ca != nullptr);
    REQUIRE(cb != nullptr);
    CHECK(ca->freq == 16);
    CHECK(std::abs(ca->divergence - kDiv16) < 1e-12);
    CHECK(std::abs(ca->threshold - kThr16) < 1e-12);
    CHECK(ca->admitted);
    CHECK(cb->admitted);

    // Independent confirmation from the brute-force counter.
    auto bc = brute_count(c, 2);
    auto div = brute_kl(bc.dist({"C"}), bc.dist({"A", "C"}));
    auto thr = brute_threshold(1.0L, 2, bc.total({"A", "C"}));
    CHECK(std::abs(ca->divergence - static_cast<double>(div)) < 1e-12);
    CHECK(std::abs(ca->threshold - static_cast<double>(thr)) < 1e-12);
}

TEST_CASE("build_hon on the 16-path corpus admits both conditional nodes") {
    auto c = testutil::corpus16();
    auto g = build_hon(c, HonConfig{2, 1.0, 1});
    CHECK(g.n_entities() == 5);
    CHECK(g.n_nodes() == 7);  // five order-1 + C|A + C|B
    auto famC = family(g, c.id_of("C"));
    REQUIRE(famC.size() == 3);
    CHECK(g.node_token(famC[0]) == "C");
    CHECK(g.node_token(famC[1]) == "C|A");
    CHECK(g.node_token(famC[2]) == "C|B");
    NodeId nCA = famC[1], nCB = famC[2];
    CHECK(g.edge_weight(c.id_of("A"), nCA) == 16.0);
    CHECK(g.edge_weight(nCA, c.id_of("D")) == 14.0);
    CHECK(g.edge_weight(nCA, c.id_of("E")) == 2.0);
    CHECK(g.edge_weight(c.id_of("B"), nCB) == 16.0);
    CHECK(g.edge_weight(nCB, c.id_of("E")) == 14.0);
    CHECK(g.edge_weight(nCB, c.id_of("D")) == 2.0);
    // the order-1 C node is bypassed entirely by the re-walk
    CHECK(out_degree_weighted(g, famC[0]) == 0.0);
    CHECK(in_degree_weighted(g, famC[0]) == 0.0);
    check_conservation(c, g, build_fon(c));
    check_flow(g, build_fon(c));
}

TEST_CASE("mild corpus yields no conditional nodes at tau=1") {
    auto c = testutil::corpus8();
    auto g = build_hon(c, HonConfig{2, 1.0, 1});
    CHECK(graphs_equal(g, build_fon(c)));
}

TEST_CASE("zero-mass successors force admission via infinite divergence") {
    auto c = testutil::two_branch_corpus();
    auto rules = enumerate_candidates(c, HonConfig{2, 1.0, 1});
    const auto* ca = find_rule(rules, {c.id_of("C"), {c.id_of("A")}});
    REQUIRE(ca != nullptr);
    CHECK(ca->divergence == kInf);
    CHECK(ca->admitted);

    auto g = build_hon(c, HonConfig{2, 1.0, 1});
    auto famC = family(g, c.id_of("C"));
    REQUIRE(famC.size() == 3);
    NodeId nCA = famC[1], nCB = famC[2];
    // C|A reaches only D; C|B reaches only E
    REQUIRE(g.out_adj[nCA].size() == 1);
    CHECK(g.node_token(g.out_adj[nCA][0].target) == "D");
    REQUIRE(g.out_adj[nCB].size() == 1);
    CHECK(g.node_token(g.out_adj[nCB][0].target) == "E");
    CHECK(g.edge_weight(nCA, c.id_of("E")) == 0.0);
}

TEST_CASE("k=1 build reduces exactly to the first-order graph") {
    auto c = testutil::corpus16();
    CHECK(graphs_equal(build_hon(c, HonConfig{1, 1.0, 1}), build_fon(c)));
}

TEST_CASE("tau=inf degenerates to the first-order graph") {
    auto c = testutil::corpus16();
    auto g = build_hon(c, HonConfig{2, kInf, 1});
    CHECK(graphs_equal(g, build_fon(c)));
}

TEST_CASE("raising tau never adds admitted nodes") {
    auto c16 = testutil::corpus16();
    auto ck3 = testutil::k3_corpus();
    for (const auto* c : {&c16, &ck3}) {
        std::size_t prev = SIZE_MAX;
        for (double tau : {0.25, 0.5, 1.0, 2.0, 4.0}) {
            auto rules = enumerate_candidates(*c, HonConfig{3, tau, 1});
            std::size_t admitted = 0;
            for (const auto& r : rules) admitted += r.admitted ? 1 : 0;
            CHECK(admitted <= prev);
            prev = admitted;
        }
    }
}

TEST_CASE("order-3 rules extend admitted order-2 rules") {
    auto c = testutil::k3_corpus();
    auto rules = enumerate_candidates(c, HonConfig{3, 1.0, 1});
    EntityId A = c.id_of("A"), B = c.id_of("B"), C = c.id_of("C");
    EntityId X = c.id_of("X"), Y = c.id_of("Y");

    const auto* ca = find_rule(rules, {C, {A}});
    REQUIRE(ca != nullptr);
    CHECK(ca->freq == 100);
    CHECK(std::abs(ca->divergence - kDivK3m2) < 1e-12);
    CHECK(std::abs(ca->threshold - kThrK3m2) < 1e-12);
    CHECK(ca->admitted);
    const auto* cb = find_rule(rules, {C, {B}});
    REQUIRE(cb != nullptr);
    CHECK(cb->admitted);

    const auto* cxa = find_rule(rules, {C, {X, A}});
    REQUIRE(cxa != nullptr);
    CHECK(cxa->freq == 68);
    CHECK(std::abs(cxa->divergence - kDivK3m3) < 1e-12);
    CHECK(std::abs(cxa->threshold - kThrK3m3) < 1e-12);
    CHECK(cxa->admitted);

    const auto* cya = find_rule(rules, {C, {Y, A}});
    REQUIRE(cya != nullptr);
    CHECK(cya->divergence == 0.0);
    CHECK_FALSE(cya->admitted);
}

TEST_CASE("the suffix gate blocks extensions of rejected rules") {
    auto c = testutil::k3_corpus();
    // τ=1.2 pushes the order-2 rules below threshold; the order-3 rule
    // still clears its own threshold but must be rejected by the gate.
    auto rules = enumerate_candidates(c, HonConfig{3, 1.2, 1});
    const auto* ca = find_rule(rules, {c.id_of("C"), {c.id_of("A")}});
    const auto* cxa = find_rule(rules, {c.id_of("C"), {c.id_of("X"), c.id_of("A")}});
    REQUIRE(ca != nullptr);
    REQUIRE(cxa != nullptr);
    CHECK_FALSE(ca->admitted);
    CHECK(cxa->divergence > cxa->threshold);
    CHECK_FALSE(cxa->admitted);
    CHECK(graphs_equal(build_hon(c, HonConfig{3, 1.2, 1}), build_fon(c)));
}

TEST_CASE("re-walk resolves the highest-order admitted context") {
    auto c = testutil::k3_corpus();
    auto g = build_hon(c, HonConfig{3, 1.0, 1});
    EntityId A = c.id_of("A"), B = c.id_of("B"), C = c.id_of("C");
    EntityId D = c.id_of("D"), E = c.id_of("E");
    EntityId X = c.id_of("X"), Y = c.id_of("Y");

    auto famC = family(g, C);
    REQUIRE(famC.size() == 4);
    CHECK(g.node_token(famC[0]) == "C");
    CHECK(g.node_token(famC[1]) == "C|A");
    CHECK(g.node_token(famC[2]) == "C|B");
    CHECK(g.node_token(famC[3]) == "C|X,A");
    NodeId nCA = famC[1], nCB = famC[2], nCXA = famC[3];

    CHECK(g.edge_weight(A, nCXA) == 68.0);  // X A C …, highest order wins
    CHECK(g.edge_weight(A, nCA) == 32.0);   // Y A C …, falls back one order
    CHECK(g.edge_weight(nCXA, D) == 64.0);
    CHECK(g.edge_weight(nCXA, E) == 4.0);
    CHECK(g.edge_weight(nCA, D) == 16.0);
    CHECK(g.edge_weight(nCA, E) == 16.0);
    CHECK(g.edge_weight(nCB, E) == 80.0);
    CHECK(g.edge_weight(nCB, D) == 20.0);
    CHECK(g.edge_weight(X, A) == 68.0);
    CHECK(g.edge_weight(Y, A) == 32.0);
    CHECK(g.edge_weight(B, nCB) == 100.0);

    check_conservation(c, g, build_fon(c));
    check_flow(g, build_fon(c));
}

TEST_CASE("candidates match the brute-force oracle on random corpora") {
    for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
        auto c = random_corpus(seed);
        for (int k : {2, 3}) {
            auto bc = brute_count(c, k);
            auto rules = enumerate_candidates(c, HonConfig{k, 1.0, 1});

            // every rule's counts and arithmetic reproduce the oracle's
            std::set<testutil::TokenSeq> seen;
            for (const auto& r : rules) {
                testutil::TokenSeq key;
                for (auto e : r.node.context) key.push_back(c.tokens[e]);
                key.push_back(c.tokens[r.node.base]);
                seen.insert(key);
                REQUIRE(bc.total(key) == static_cast<long>(r.freq));
                auto od = bc.dist(key);
                REQUIRE(od.size() == r.next_dist.size());
                for (const auto& [e, p] : r.next_dist)
                    CHECK(std::abs(static_cast<double>(od.at(c.tokens[e])) - p) < 1e-12);
                auto div = brute_kl(bc.dist({c.tokens[r.node.base]}), od);
                if (std::isinf(static_cast<double>(div)))
                    CHECK(std::isinf(r.divergence));
                else
                    CHECK(std::abs(r.divergence - static_cast<double>(div)) < 1e-10);
                CHECK(std::abs(r.threshold -
                               static_cast<double>(brute_threshold(1.0L, r.node.order(),
                                                                   bc.total(key)))) < 1e-10);
                double sum = 0;
                for (const auto& [e, p] : r.next_dist) sum += p;
                CHECK(std::abs(sum - 1.0) < 1e-9);
            }
            // and the oracle finds no context the library missed
            for (const auto& [key, succ] : bc.succ)
                if (key.size() >= 2 && key.size() <= static_cast<std::size_t>(k))
                    CHECK(seen.count(key) == 1);

            auto gk = build_hon(c, HonConfig{k, 1.0, 1});
            auto g1 = build_fon(c);
            check_conservation(c, gk, g1);
            check_flow(gk, g1);
            CHECK(graphs_equal(deserialize(serialize(gk), "mem"), gk));
        }
    }
}

TEST_CASE("config validation rejects bad parameters") {
    CHECK_THROWS_AS((HonConfig{0, 1.0, 1}.validate()), Error);
    CHECK_THROWS_AS((HonConfig{2, 0.0, 1}.validate()), Error);
    CHECK_THROWS_AS((HonConfig{2, -1.0, 1}.validate()), Error);
    CHECK_THROWS_AS((HonConfig{2, 1.0, 0}.validate()), Error);
    CHECK_THROWS_AS(build_fon(PathCorpus{}), Error);
}

TEST_CASE("entity_out_dist aggregates walker mass by base entity") {
    auto c = testutil::corpus16();
    auto g = build_hon(c, HonConfig{2, 1.0, 1});
    auto famC = family(g, c.id_of("C"));
    auto dist = entity_out_dist(g, famC[1]);  // C|A
    REQUIRE(dist.size() == 2);
    CHECK(dist[0].first == c.id_of("D"));
    CHECK(dist[0].second == 0.875);
    CHECK(dist[1].second == 0.125);
    CHECK_THROWS_AS(entity_out_dist(g, famC[0]), Error);  // isolated order-1 C
}
