#pragma once

// All stochastic selection: relative sampling over higher-order families
// (nodes and node pairs), bootstrap generation under the one-relative
// constraint, and weighted neighbor sampling for GNN aggregation.
//
// Stream discipline: draws from a family with exactly one possible
// outcome (singleton family, unrealized pair fallback) are deterministic
// and consume no generator state; this keeps streams aligned between
// first-order graphs (all families singleton) and higher-order graphs,
// which is what the ℓ=1 ensemble-collapse guarantee relies on.

#include <cstdint>
#include <string>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "util.hpp"

namespace hondge {

enum class Direction { out, in, both };

inline Direction parse_direction(const std::string& s) {
    if (s == "out") return Direction::out;
    if (s == "in") return Direction::in;
    if (s == "both") return Direction::both;
    throw validation_error("unknown neighbor direction: '" + s + "'");
}

// A distribution over node ids (family members or neighbors).
struct NodeDist {
    std::vector<std::pair<NodeId, double>> probs;
    bool uniform_fallback = false;  // whole family was sinks
};

// Eq.-style relative sampling: P(u′) ∝ weighted out-degree of u′ within
// Ω_u. A family of sinks falls back to uniform (flagged).
inline NodeDist relative_dist(const HonGraph& g, EntityId u) {
    const auto& fam = family(g, u);
    if (fam.empty()) throw validation_error("relative_dist: entity has no nodes");
    NodeDist dist;
    double total = 0;
    for (NodeId n : fam) total += g.out_deg[n];
    if (total <= 0) {
        dist.uniform_fallback = true;
        const double p = 1.0 / static_cast<double>(fam.size());
        for (NodeId n : fam) dist.probs.emplace_back(n, p);
        return dist;
    }
    for (NodeId n : fam)
        if (g.out_deg[n] > 0) dist.probs.emplace_back(n, g.out_deg[n] / total);
    return dist;
}

// Draw one element; singleton support short-circuits without touching
// the generator.
inline NodeId draw_from(const NodeDist& dist, Rng& rng) {
    if (dist.probs.size() == 1) return dist.probs[0].first;
    double x = rng.u01();
    double acc = 0;
    for (const auto& [n, p] : dist.probs) {
        acc += p;
        if (x < acc) return n;
    }
    return dist.probs.back().first;
}

// Pair distribution over Ω_u × Ω_v weighted by realized edge weight.
struct PairDist {
    std::vector<std::pair<std::pair<NodeId, NodeId>, double>> probs;
};

inline PairDist edge_relative_dist(const HonGraph& g, EntityId u, EntityId v) {
    const auto& fam_u = family(g, u);
    PairDist dist;
    double total = 0;
    for (NodeId a : fam_u)
        for (const auto& e : g.out_adj[a])
            if (g.nodes[e.target].base == v) {
                dist.probs.push_back({{a, e.target}, e.weight});
                total += e.weight;
            }
    if (dist.probs.empty())
        throw validation_error("edge has no higher-order realization: " +
                               g.entity_tokens[u] + " -> " + g.entity_tokens[v]);
    for (auto& [pair, w] : dist.probs) w /= total;
    return dist;
}

// Caller convention for negative (non-edge) pairs: the order-1 pair with
// probability 1 — deterministic, no generator state consumed.
inline std::pair<NodeId, NodeId> draw_edge_relatives(const HonGraph& g, EntityId u, EntityId v,
                                                     Rng& rng) {
    const auto& fam_u = family(g, u);
    const auto& fam_v = family(g, v);
    std::vector<std::pair<std::pair<NodeId, NodeId>, double>> support;
    double total = 0;
    for (NodeId a : fam_u)
        for (const auto& e : g.out_adj[a])
            if (g.nodes[e.target].base == v) {
                support.push_back({{a, e.target}, e.weight});
                total += e.weight;
            }
    if (support.empty()) return {fam_u[0], fam_v[0]};  // order-1 fallback
    if (support.size() == 1) return support[0].first;
    double x = rng.u01() * total;
    double acc = 0;
    for (const auto& [pair, w] : support) {
        acc += w;
        if (x < acc) return pair;
    }
    return support.back().first;
}

// ─── Bootstraps ──────────────────────────────────────────────────

struct BootstrapSet {
    enum class Kind { node, edge };
    Kind kind = Kind::node;
    int ell = 0;
    std::uint64_t seed = 0;

    std::vector<EntityId> units;                                 // node task
    std::vector<std::pair<EntityId, EntityId>> pair_units;       // edge task

    // assignments[i][j] = relative (or relative pair) for unit j in D^(i)
    std::vector<std::vector<NodeId>> node_assign;
    std::vector<std::vector<std::pair<NodeId, NodeId>>> pair_assign;
};

// ℓ independent assignments, one relative per unit per bootstrap, drawn
// with replacement across bootstraps from relative_dist.
inline BootstrapSet make_bootstraps(const HonGraph& g, const std::vector<EntityId>& units,
                                    int ell, std::uint64_t seed) {
    if (ell < 1) throw validation_error("make_bootstraps: ell must be ≥ 1");
    BootstrapSet bs;
    bs.kind = BootstrapSet::Kind::node;
    bs.ell = ell;
    bs.seed = seed;
    bs.units = units;
    std::vector<NodeDist> dists;
    dists.reserve(units.size());
    for (EntityId u : units) dists.push_back(relative_dist(g, u));
    bs.node_assign.resize(ell);
    for (int i = 0; i < ell; ++i) {
        Rng rng = fork(seed, "bootstrap", static_cast<std::uint64_t>(i));
        auto& assign = bs.node_assign[i];
        assign.reserve(units.size());
        for (const auto& dist : dists) assign.push_back(draw_from(dist, rng));
    }
    return bs;
}

inline BootstrapSet make_edge_bootstraps(const HonGraph& g,
                                         const std::vector<std::pair<EntityId, EntityId>>& pairs,
                                         int ell, std::uint64_t seed) {
    if (ell < 1) throw validation_error("make_edge_bootstraps: ell must be ≥ 1");
    BootstrapSet bs;
    bs.kind = BootstrapSet::Kind::edge;
    bs.ell = ell;
    bs.seed = seed;
    bs.pair_units = pairs;
    bs.pair_assign.resize(ell);
    for (int i = 0; i < ell; ++i) {
        Rng rng = fork(seed, "bootstrap", static_cast<std::uint64_t>(i));
        auto& assign = bs.pair_assign[i];
        assign.reserve(pairs.size());
        for (const auto& [u, v] : pairs) assign.push_back(draw_edge_relatives(g, u, v, rng));
    }
    return bs;
}

// One fresh assignment (the per-batch redraw used by the batch-shared
// training variant); consumes the caller's stream in unit order.
inline std::vector<NodeId> resample_batch_relatives(const HonGraph& g,
                                                    const std::vector<EntityId>& units,
                                                    Rng& rng) {
    std::vector<NodeId> assign;
    assign.reserve(units.size());
    for (EntityId u : units) assign.push_back(draw_from(relative_dist(g, u), rng));
    return assign;
}

inline std::vector<std::pair<NodeId, NodeId>> resample_batch_pair_relatives(
    const HonGraph& g, const std::vector<std::pair<EntityId, EntityId>>& pairs, Rng& rng) {
    std::vector<std::pair<NodeId, NodeId>> assign;
    assign.reserve(pairs.size());
    for (const auto& [u, v] : pairs) assign.push_back(draw_edge_relatives(g, u, v, rng));
    return assign;
}

// Audit export: `unit<TAB>bootstrap-index<TAB>relative`. Edge units and
// relatives are rendered as comma-joined token pairs (tokens cannot
// contain commas).
inline std::string bootstraps_tsv(const HonGraph& g, const BootstrapSet& bs) {
    std::string out = "unit\tbootstrap-index\trelative\n";
    for (int i = 0; i < bs.ell; ++i) {
        if (bs.kind == BootstrapSet::Kind::node) {
            for (std::size_t j = 0; j < bs.units.size(); ++j) {
                out += g.entity_tokens[bs.units[j]];
                out += '\t';
                out += std::to_string(i);
                out += '\t';
                out += g.node_token(bs.node_assign[i][j]);
                out += '\n';
            }
        } else {
            for (std::size_t j = 0; j < bs.pair_units.size(); ++j) {
                out += g.entity_tokens[bs.pair_units[j].first];
                out += ',';
                out += g.entity_tokens[bs.pair_units[j].second];
                out += '\t';
                out += std::to_string(i);
                out += '\t';
                out += g.node_token(bs.pair_assign[i][j].first);
                out += ',';
                out += g.node_token(bs.pair_assign[i][j].second);
                out += '\n';
            }
        }
    }
    return out;
}

// ─── Neighbor sampling ───────────────────────────────────────────

// Alias tables per node for a fixed direction; O(1) weighted draws with
// replacement. A sink yields the zero-feature sentinel (kNoNode) without
// consuming generator state.
class NeighborSampler {
public:
    NeighborSampler(const HonGraph& g, Direction dir) : g_(&g), dir_(dir) {
        tables_.resize(g.n_nodes());
        targets_.resize(g.n_nodes());
        for (NodeId n = 0; n < g.n_nodes(); ++n) {
            std::vector<double> w;
            auto& tgt = targets_[n];
            if (dir != Direction::in)
                for (const auto& e : g.out_adj[n]) { tgt.push_back(e.target); w.push_back(e.weight); }
            if (dir != Direction::out)
                for (const auto& e : g.in_adj[n]) { tgt.push_back(e.target); w.push_back(e.weight); }
            if (!tgt.empty()) tables_[n] = AliasTable(w);
        }
    }

    Direction direction() const { return dir_; }
    const HonGraph& graph() const { return *g_; }

    // Appends `fanout` draws (or sentinels) to `out`.
    void sample_into(NodeId node, int fanout, Rng& rng, std::vector<NodeId>& out) const {
        if (node == kNoNode || targets_[node].empty()) {
            out.insert(out.end(), fanout, kNoNode);
            return;
        }
        const auto& tgt = targets_[node];
        if (tgt.size() == 1) {  // single neighbor: deterministic, no draws
            out.insert(out.end(), fanout, tgt[0]);
            return;
        }
        const AliasTable& tab = tables_[node];
        for (int i = 0; i < fanout; ++i) out.push_back(tgt[tab.draw(rng)]);
    }

private:
    const HonGraph* g_;
    Direction dir_;
    std::vector<AliasTable> tables_;
    std::vector<std::vector<NodeId>> targets_;
};

// Standalone form matching the module interface; builds the node's table
// on the fly (fine for audits and Monte-Carlo checks).
inline std::vector<NodeId> sample_neighbors(const HonGraph& g, NodeId node, int fanout,
                                            Direction dir, Rng& rng) {
    if (fanout < 1) throw validation_error("sample_neighbors: fanout must be ≥ 1");
    std::vector<NodeId> tgt;
    std::vector<double> w;
    if (dir != Direction::in)
        for (const auto& e : g.out_adj[node]) { tgt.push_back(e.target); w.push_back(e.weight); }
    if (dir != Direction::out)
        for (const auto& e : g.in_adj[node]) { tgt.push_back(e.target); w.push_back(e.weight); }
    std::vector<NodeId> out;
    out.reserve(fanout);
    if (tgt.empty()) {
        out.assign(fanout, kNoNode);
        return out;
    }
    if (tgt.size() == 1) {
        out.assign(fanout, tgt[0]);
        return out;
    }
    AliasTable tab(w);
    for (int i = 0; i < fanout; ++i) out.push_back(tgt[tab.draw(rng)]);
    return out;
}

} // namespace hondge
