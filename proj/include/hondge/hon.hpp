#pragma once

// First- and higher-order network construction from a path corpus.
//
// A conditional node a_m|a_1,…,a_{m−1} is admitted when the KL divergence
// between its empirical successor distribution and the base entity's
// first-order successor distribution exceeds τ·m/log2(1+freq). Divergence
// of +∞ (the candidate assigns zero mass to a first-order successor)
// admits against any finite threshold; τ = +∞ makes the threshold +∞ and
// rejects everything — IEEE comparison semantics give both behaviours
// without special cases, so τ → ∞ degenerates to the first-order graph.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "graph.hpp"
#include "util.hpp"

namespace hondge {

struct HonConfig {
    int k = 2;                 // maximum order, ≥ 1
    double tau = 1.0;          // threshold multiplier, > 0
    std::uint32_t min_support = 1;  // minimum candidate frequency

    void validate() const {
        if (k < 1) throw validation_error("HonConfig: k must be ≥ 1");
        if (!(tau > 0)) throw validation_error("HonConfig: tau must be > 0");
        if (min_support < 1) throw validation_error("HonConfig: min_support must be ≥ 1");
    }
};

// A probability distribution over entities, sorted by entity id.
using EntityDist = std::vector<std::pair<EntityId, double>>;

struct CandidateRule {
    HonNode node;            // order ≥ 2
    std::uint32_t freq = 0;  // occurrences followed by a successor
    EntityDist next_dist;    // empirical successor distribution
    double divergence = 0;   // vs the base entity's first-order distribution
    double threshold = 0;    // τ·m/log2(1+freq)
    bool admitted = false;
};

// D_KL(first-order ∥ candidate) = Σ_v π₁(v)·log2(π₁(v)/π_cand(v)), summed
// over the first-order successor support. Any v with π₁ > 0 and
// π_cand = 0 yields +∞.
inline double kl_divergence(const EntityDist& cand_dist, const EntityDist& first_order_dist) {
    if (first_order_dist.empty())
        throw validation_error("kl_divergence: empty first-order distribution");
    double sum = 0;
    std::size_t j = 0;
    for (const auto& [v, p1] : first_order_dist) {
        if (p1 <= 0) continue;
        while (j < cand_dist.size() && cand_dist[j].first < v) ++j;
        double pk = (j < cand_dist.size() && cand_dist[j].first == v) ? cand_dist[j].second : 0.0;
        if (pk <= 0) return std::numeric_limits<double>::infinity();
        sum += p1 * std::log2(p1 / pk);
    }
    return sum;
}

// Probability that a random walker at u steps to v: w(u,v)/outdeg(u).
inline double walker_prob(const HonGraph& g, NodeId u, NodeId v) {
    if (g.out_deg[u] <= 0)
        throw validation_error("walker_prob: sink node '" + g.node_token(u) + "'");
    return g.edge_weight(u, v) / g.out_deg[u];
}

// Walker probabilities from `u` aggregated by target *base entity* —
// the distribution a mean aggregator over one-hot base features sees.
inline EntityDist entity_out_dist(const HonGraph& g, NodeId u) {
    if (g.out_deg[u] <= 0)
        throw validation_error("entity_out_dist: sink node '" + g.node_token(u) + "'");
    std::unordered_map<EntityId, double> acc;
    for (const auto& e : g.out_adj[u]) acc[g.nodes[e.target].base] += e.weight;
    EntityDist dist(acc.begin(), acc.end());
    std::sort(dist.begin(), dist.end());
    for (auto& [ent, w] : dist) w /= g.out_deg[u];
    return dist;
}

// ─── Counting pass shared by enumerate_candidates and build_hon ──

namespace detail {

// Context sequences ⟨a_1,…,a_m⟩ (predecessors then base) are keyed by
// their little-endian id bytes; short keys stay within std::string SSO.
inline void append_id(std::string& key, EntityId id) {
    key.push_back(static_cast<char>(id & 0xFF));
    key.push_back(static_cast<char>((id >> 8) & 0xFF));
    key.push_back(static_cast<char>((id >> 16) & 0xFF));
    key.push_back(static_cast<char>((id >> 24) & 0xFF));
}

inline EntityId decode_id(const std::string& key, std::size_t pos) {
    return static_cast<EntityId>(static_cast<unsigned char>(key[pos])) |
           (static_cast<EntityId>(static_cast<unsigned char>(key[pos + 1])) << 8) |
           (static_cast<EntityId>(static_cast<unsigned char>(key[pos + 2])) << 16) |
           (static_cast<EntityId>(static_cast<unsigned char>(key[pos + 3])) << 24);
}

inline std::string seq_key(const std::vector<EntityId>& path, std::size_t first, std::size_t last) {
    std::string key;
    key.reserve((last - first + 1) * 4);
    for (std::size_t i = first; i <= last; ++i) append_id(key, path[i]);
    return key;
}

struct SuccCounts {
    std::vector<std::pair<EntityId, std::uint32_t>> counts;  // unsorted during build
    std::uint32_t total = 0;

    void add(EntityId succ) {
        ++total;
        for (auto& [e, c] : counts)
            if (e == succ) { ++c; return; }
        counts.emplace_back(succ, 1u);
    }

    EntityDist dist() const {
        EntityDist d;
        d.reserve(counts.size());
        for (const auto& [e, c] : counts)
            d.emplace_back(e, static_cast<double>(c) / total);
        std::sort(d.begin(), d.end());
        return d;
    }
};

struct CorpusStats {
    std::vector<SuccCounts> first_order;                    // per entity
    std::unordered_map<std::string, SuccCounts> contexts;   // order-m sequences, 2 ≤ m ≤ k
    std::vector<EntityDist> first_dists;                    // cached per entity

    const EntityDist& first_dist(EntityId e) {
        if (first_dists[e].empty() && first_order[e].total > 0)
            first_dists[e] = first_order[e].dist();
        return first_dists[e];
    }
};

inline CorpusStats count_transitions(const PathCorpus& corpus, int k) {
    CorpusStats stats;
    stats.first_order.resize(corpus.n_entities());
    stats.first_dists.resize(corpus.n_entities());
    for (const auto& path : corpus.paths) {
        const std::size_t len = path.size();
        for (std::size_t t = 0; t + 1 < len; ++t) {
            stats.first_order[path[t]].add(path[t + 1]);
            // contexts ending at position t with a successor at t+1
            for (int m = 2; m <= k; ++m) {
                if (t + 1 < static_cast<std::size_t>(m)) break;
                stats.contexts[seq_key(path, t + 1 - m, t)].add(path[t + 1]);
            }
        }
    }
    return stats;
}

inline double admission_threshold(double tau, int order, std::uint32_t freq) {
    return tau * order / std::log2(1.0 + freq);
}

} // namespace detail

// Order-1 graph: one node per entity (node id == entity id), one directed
// edge per adjacent pair of path elements, weighted by occurrence count.
inline HonGraph build_fon(const PathCorpus& corpus) {
    if (corpus.paths.empty()) throw validation_error("build_fon: corpus is empty");
    GraphBuilder builder(1);
    builder.adopt_entities(corpus);
    for (EntityId e = 0; e < corpus.n_entities(); ++e) builder.add_node(HonNode{e, {}});
    for (const auto& path : corpus.paths)
        for (std::size_t t = 0; t + 1 < path.size(); ++t)
            builder.add_edge_weight(path[t], path[t + 1], 1.0);
    return builder.finish();
}

// Every contiguous context ⟨a_1,…,a_m⟩ (2 ≤ m ≤ k) that is followed by at
// least one successor and meets min_support, scored against the base
// entity's first-order distribution. `admitted` additionally applies the
// incremental-extension gate (an order-m rule needs its order-(m−1)
// suffix admitted) exactly as build_hon does.
inline std::vector<CandidateRule> enumerate_candidates(const PathCorpus& corpus,
                                                       const HonConfig& config) {
    config.validate();
    if (config.k < 2) throw validation_error("enumerate_candidates: k must be ≥ 2");
    auto stats = detail::count_transitions(corpus, config.k);

    // Deterministic order: ascending (order, key bytes).
    std::vector<const std::string*> keys;
    keys.reserve(stats.contexts.size());
    for (const auto& [key, sc] : stats.contexts) {
        if (sc.total >= config.min_support) keys.push_back(&key);
    }
    std::sort(keys.begin(), keys.end(), [](const std::string* a, const std::string* b) {
        if (a->size() != b->size()) return a->size() < b->size();
        return *a < *b;
    });

    std::unordered_map<std::string, bool> admitted;
    std::vector<CandidateRule> rules;
    rules.reserve(keys.size());
    for (const std::string* keyp : keys) {
        const auto& key = *keyp;
        const auto& sc = stats.contexts.at(key);
        const int m = static_cast<int>(key.size() / 4);
        CandidateRule rule;
        rule.node.base = detail::decode_id(key, key.size() - 4);
        rule.node.context.reserve(m - 1);
        for (int i = 0; i < m - 1; ++i)
            rule.node.context.push_back(detail::decode_id(key, i * 4));
        rule.freq = sc.total;
        rule.next_dist = sc.dist();
        rule.divergence = kl_divergence(rule.next_dist, stats.first_dist(rule.node.base));
        rule.threshold = detail::admission_threshold(config.tau, m, rule.freq);
        bool gate = m == 2 || admitted[key.substr(4)];
        rule.admitted = gate && rule.divergence > rule.threshold;
        admitted[key] = rule.admitted;
        rules.push_back(std::move(rule));
    }
    return rules;
}

// Build G_k: admit rules, then re-walk every path. At each position the
// emitting node is the highest-order admitted rule matching the current
// entity and its preceding context (falling back to the order-1 node);
// context resets at path boundaries. Every corpus entity keeps an
// order-1 node even if the re-walk leaves it isolated. An admitted rule
// that the re-walk never emits (shadowed at every occurrence by a
// higher-order extension) carries no walker mass and is dropped — the
// edge-list interchange format could not represent it anyway.
inline HonGraph build_hon(const PathCorpus& corpus, const HonConfig& config) {
    config.validate();
    if (corpus.paths.empty()) throw validation_error("build_hon: corpus is empty");
    if (config.k == 1) return build_fon(corpus);

    auto rules = enumerate_candidates(corpus, config);

    // Provisional ids: entities 0..n−1, then admitted rules in rule order.
    const NodeId n_ent = corpus.n_entities();
    std::vector<const CandidateRule*> admitted_rules;
    std::unordered_map<std::string, NodeId> admitted;  // sequence key → provisional id
    for (const auto& rule : rules) {
        if (!rule.admitted) continue;
        std::string key;
        key.reserve(rule.node.context.size() * 4 + 4);
        for (EntityId c : rule.node.context) detail::append_id(key, c);
        detail::append_id(key, rule.node.base);
        admitted.emplace(std::move(key), n_ent + static_cast<NodeId>(admitted_rules.size()));
        admitted_rules.push_back(&rule);
    }

    std::string key;
    auto resolve = [&](const std::vector<EntityId>& path, std::size_t t) -> NodeId {
        int max_m = static_cast<int>(std::min<std::size_t>(config.k, t + 1));
        for (int m = max_m; m >= 2; --m) {
            key.clear();
            for (std::size_t i = t + 1 - m; i <= t; ++i) detail::append_id(key, path[i]);
            auto it = admitted.find(key);
            if (it != admitted.end()) return it->second;
        }
        return path[t];  // order-1 node id == entity id
    };

    std::unordered_map<std::uint64_t, double> edges;  // provisional (src,dst) → weight
    for (const auto& path : corpus.paths) {
        NodeId prev = resolve(path, 0);
        for (std::size_t t = 1; t < path.size(); ++t) {
            NodeId cur = resolve(path, t);
            edges[(static_cast<std::uint64_t>(prev) << 32) | cur] += 1.0;
            prev = cur;
        }
    }

    std::vector<bool> used(admitted_rules.size(), false);
    for (const auto& [ek, w] : edges) {
        auto src = static_cast<NodeId>(ek >> 32);
        auto dst = static_cast<NodeId>(ek & 0xFFFFFFFFu);
        if (src >= n_ent) used[src - n_ent] = true;
        if (dst >= n_ent) used[dst - n_ent] = true;
    }

    GraphBuilder builder(config.k);
    builder.adopt_entities(corpus);
    for (EntityId e = 0; e < n_ent; ++e) builder.add_node(HonNode{e, {}});
    std::vector<NodeId> remap(admitted_rules.size(), kNoNode);
    for (std::size_t i = 0; i < admitted_rules.size(); ++i)
        if (used[i]) remap[i] = builder.add_node(admitted_rules[i]->node);
    for (const auto& [ek, w] : edges) {
        auto src = static_cast<NodeId>(ek >> 32);
        auto dst = static_cast<NodeId>(ek & 0xFFFFFFFFu);
        if (src >= n_ent) src = remap[src - n_ent];
        if (dst >= n_ent) dst = remap[dst - n_ent];
        builder.add_edge_weight(src, dst, w);
    }
    return builder.finish();
}

} // namespace hondge
