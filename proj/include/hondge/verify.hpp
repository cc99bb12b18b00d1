#pragma once
// Executable checks of the structural claims behind conditional-node
// admission, run at desk scale:
//
//  • check_law_shift — every admitted conditional node must actually change the
//    walker's law: some first-order successor's probability differs between
//    the base entity and the conditional node by more than 1e-12.
//
//  • check_sampling_bias — a mean aggregator over one-hot base features is biased
//    when neighborhoods are sampled from the first-order graph instead of
//    the conditional node's: Monte-Carlo single-neighbor draws from both
//    graphs must (a) converge to the exact walker laws (binomial-style
//    tolerance, 0.01 at 10^6 samples) and (b) stay separated by more than
//    0.02 in ∞-norm whenever the two laws diverge by more than 0.05 bits.
//
// Both checks are deterministic: Monte-Carlo draws come from the "bias"
// streams (index 0 for the higher-order graph, 1 for the first-order one).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hondge/graph.hpp"
#include "hondge/hon.hpp"
#include "hondge/rng.hpp"
#include "hondge/sampler.hpp"
#include "hondge/util.hpp"

namespace hondge {

namespace detail {

inline void require_same_entities(const HonGraph& graph_k, const HonGraph& graph_1,
                                  const char* what) {
    if (graph_1.n_nodes() != graph_1.n_entities())
        throw validation_error(std::string(what) + " needs a first-order reference graph");
    if (graph_k.n_entities() != graph_1.n_entities() ||
        graph_k.entity_tokens != graph_1.entity_tokens)
        throw validation_error(std::string(what) + ": graphs disagree on their entity sets");
}

}  // namespace detail

// ─── Conditional nodes change the walker's law ───────────────────────────────

struct LawShiftReport {
    std::size_t conditional_checked = 0;
    std::size_t sinks_skipped = 0;
    std::vector<std::string> violations;  // conditional nodes that duplicate their base law
    bool pass = true;
};

inline LawShiftReport check_law_shift(const HonGraph& graph_k, const HonGraph& graph_1) {
    detail::require_same_entities(graph_k, graph_1, "law-shift check");
    LawShiftReport report;
    for (NodeId n = 0; n < graph_k.n_nodes(); ++n) {
        if (graph_k.nodes[n].order() <= 1) continue;
        if (graph_k.out_deg[n] <= 0) {
            ++report.sinks_skipped;
            continue;
        }
        ++report.conditional_checked;
        NodeId base_node = family(graph_1, graph_k.nodes[n].base)[0];
        EntityDist first = entity_out_dist(graph_1, base_node);
        EntityDist cond = entity_out_dist(graph_k, n);
        bool differs = false;
        std::size_t j = 0;
        for (const auto& [v, p1] : first) {
            while (j < cond.size() && cond[j].first < v) ++j;
            double pk = (j < cond.size() && cond[j].first == v) ? cond[j].second : 0.0;
            if (std::abs(p1 - pk) > 1e-12) {
                differs = true;
                break;
            }
        }
        if (!differs) {
            report.violations.push_back(graph_k.node_token(n));
            report.pass = false;
        }
    }
    return report;
}

// ─── Sampling from the wrong graph biases the aggregate ──────────────────────

struct SamplingBiasReport {
    std::vector<double> hon_empirical, fon_empirical;  // per entity, each sums to 1
    std::vector<double> hon_exact, fon_exact;          // the two walker laws
    double hon_dev = 0.0, fon_dev = 0.0;  // ∞-norm, empirical vs exact
    double separation = 0.0;              // ∞-norm between the two empirical means
    double kl_bits = 0.0;                 // exact divergence first-order ∥ conditional
    double tolerance = 0.0;
    double hon_sum = 0.0, fon_sum = 0.0;
    bool converged = false;
    bool separated_ok = true;  // only binding when kl_bits > 0.05
    bool pass = false;
};

/// Monte-Carlo check for one node: draw n_samples single neighbors of
/// u_prime in graph_k and of its base entity in graph_1, average the one-hot
/// base features, and compare against the exact laws. Pass require_conditional
/// = false to run the (vacuous) self-comparison on an order-1 node.
inline SamplingBiasReport check_sampling_bias(const HonGraph& graph_k, const HonGraph& graph_1,
                                     const HonNode& u_prime, std::size_t n_samples,
                                     std::uint64_t seed, bool require_conditional = true) {
    detail::require_same_entities(graph_k, graph_1, "aggregate check");
    if (n_samples == 0) throw validation_error("need at least one sample");
    if (require_conditional && u_prime.order() <= 1)
        throw validation_error("aggregate check needs a conditional (order ≥ 2) node");
    if (u_prime.base >= graph_k.n_entities())
        throw validation_error("entity id " + std::to_string(u_prime.base) + " not in graph");

    NodeId node = kNoNode;
    for (NodeId cand : family(graph_k, u_prime.base))
        if (graph_k.nodes[cand].context == u_prime.context) node = cand;
    if (node == kNoNode)
        throw validation_error("no node of entity '" +
                               graph_k.entity_tokens[u_prime.base] +
                               "' with the requested context");
    NodeId base_node = family(graph_1, u_prime.base)[0];
    if (graph_k.out_deg[node] <= 0)
        throw validation_error("aggregate check: sink node '" + graph_k.node_token(node) + "'");
    if (graph_1.out_deg[base_node] <= 0)
        throw validation_error("aggregate check: sink entity '" +
                               graph_1.entity_tokens[u_prime.base] + "'");

    SamplingBiasReport report;
    const std::size_t n = graph_k.n_entities();
    report.hon_exact.assign(n, 0.0);
    report.fon_exact.assign(n, 0.0);
    for (const auto& [v, p] : entity_out_dist(graph_k, node)) report.hon_exact[v] = p;
    for (const auto& [v, p] : entity_out_dist(graph_1, base_node)) report.fon_exact[v] = p;
    report.kl_bits = kl_divergence(entity_out_dist(graph_k, node),
                                   entity_out_dist(graph_1, base_node));

    auto draw_mean = [n_samples, n](const HonGraph& g, NodeId root, Rng rng) {
        NeighborSampler sampler(g, Direction::out);
        std::vector<std::uint64_t> counts(n, 0);
        std::vector<NodeId> buf;
        for (std::size_t s = 0; s < n_samples; ++s) {
            buf.clear();
            sampler.sample_into(root, 1, rng, buf);
            ++counts[g.nodes[buf[0]].base];
        }
        std::vector<double> mean(n);
        for (std::size_t v = 0; v < n; ++v)
            mean[v] = static_cast<double>(counts[v]) / static_cast<double>(n_samples);
        return mean;
    };
    report.hon_empirical = draw_mean(graph_k, node, fork(seed, "bias", 0));
    report.fon_empirical = draw_mean(graph_1, base_node, fork(seed, "bias", 1));

    report.tolerance = 0.01 * std::sqrt(1e6 / static_cast<double>(n_samples));
    for (std::size_t v = 0; v < n; ++v) {
        report.hon_dev = std::max(report.hon_dev,
                                  std::abs(report.hon_empirical[v] - report.hon_exact[v]));
        report.fon_dev = std::max(report.fon_dev,
                                  std::abs(report.fon_empirical[v] - report.fon_exact[v]));
        report.separation = std::max(report.separation,
                                     std::abs(report.hon_empirical[v] - report.fon_empirical[v]));
        report.hon_sum += report.hon_empirical[v];
        report.fon_sum += report.fon_empirical[v];
    }
    report.converged = report.hon_dev <= report.tolerance && report.fon_dev <= report.tolerance;
    if (report.kl_bits > 0.05) report.separated_ok = report.separation > 0.02;
    report.pass = report.converged && report.separated_ok;
    return report;
}

}  // namespace hondge
