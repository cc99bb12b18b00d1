#pragma once
// Experiment protocol and metrics: stratified k-fold plans for node
// classification, link-prediction splits that hide every realization of a
// held-out base pair (both directions, across whole families), and the
// metric suite — micro-F1, rank-based average precision, Cohen's kappa,
// per-node homophily, and the per-learner-pair diversity table.
//
// Every split is a pure function of (inputs, seed); metrics are pure
// functions of their arguments. Argmax ties break toward the lowest class
// index everywhere, so per-learner and ensemble argmaxes stay comparable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hondge/corpus.hpp"
#include "hondge/ensemble.hpp"
#include "hondge/graph.hpp"
#include "hondge/rng.hpp"
#include "hondge/util.hpp"

namespace hondge {

// ─── Shared argmax convention ────────────────────────────────────────────────

/// Per-row argmax of a probability (or logit) matrix; ties break toward the
/// lowest class index.
inline std::vector<std::uint32_t> argmax_classes(const Mat& probs) {
    std::vector<std::uint32_t> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, best)) best = c;
        out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
    }
    return out;
}

// ─── Stratified folds ────────────────────────────────────────────────────────

/// Assignment of every labeled entity to one of n_folds folds, stratified so
/// per-class fold sizes differ by at most one.
struct FoldPlan {
    int n_folds = 5;
    std::unordered_map<EntityId, int> fold_of;

    std::vector<EntityId> test_entities(int fold) const { return select(fold, true); }
    std::vector<EntityId> train_entities(int fold) const { return select(fold, false); }

private:
    std::vector<EntityId> select(int fold, bool match) const {
        if (fold < 0 || fold >= n_folds)
            throw validation_error("fold index " + std::to_string(fold) + " out of range (" +
                                   std::to_string(n_folds) + " folds)");
        std::vector<EntityId> out;
        for (const auto& [e, f] : fold_of)
            if ((f == fold) == match) out.push_back(e);
        std::sort(out.begin(), out.end());
        return out;
    }
};

/// Shuffle each class independently (fork(seed, "fold", class)) and deal its
/// members round-robin across folds. Errors when a class has fewer members
/// than folds, naming the class.
inline FoldPlan make_folds(const LabelMap& labels, int n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw validation_error("need at least 2 folds");
    std::vector<std::vector<EntityId>> by_class(labels.n_classes());
    for (const auto& [e, c] : labels.label_of) by_class[c].push_back(e);
    FoldPlan plan;
    plan.n_folds = n_folds;
    for (std::uint32_t c = 0; c < labels.n_classes(); ++c) {
        auto& members = by_class[c];
        if (members.size() < static_cast<std::size_t>(n_folds))
            throw validation_error("class '" + labels.class_names[c] + "' has only " +
                                   std::to_string(members.size()) + " members for " +
                                   std::to_string(n_folds) + " folds");
        std::sort(members.begin(), members.end());
        Rng rng = fork(seed, "fold", c);
        detail::fisher_yates(members, rng);
        for (std::size_t i = 0; i < members.size(); ++i)
            plan.fold_of[members[i]] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
    }
    return plan;
}

// ─── Link-prediction split ───────────────────────────────────────────────────

/// A link-prediction experiment: test positives drawn from the base pair set,
/// matched negatives, and a training graph from which every realization of a
/// test pair — either direction, any context — has been removed. `isolated`
/// counts entities whose whole family lost all incident edges (the split
/// proceeds; callers may warn).
struct LinkSplit {
    HonGraph train_graph;
    std::vector<std::pair<EntityId, EntityId>> test_pos;
    std::vector<std::pair<EntityId, EntityId>> test_neg;
    std::vector<std::pair<EntityId, EntityId>> train_pos;
    std::vector<std::pair<EntityId, EntityId>> train_neg;
    std::size_t isolated = 0;
};

namespace detail {

inline std::uint64_t pair_key(EntityId u, EntityId v) { return stream_key(u, v); }

// Draw `need` ordered pairs uniformly over [0,n)², rejecting self-loops,
// anything in `forbidden`, and duplicates; accepted pairs are added to
// `forbidden` as they are drawn.
inline std::vector<std::pair<EntityId, EntityId>> sample_non_edges(
    EntityId n, std::size_t need, std::unordered_set<std::uint64_t>& forbidden, Rng& rng) {
    std::vector<std::pair<EntityId, EntityId>> out;
    out.reserve(need);
    std::size_t attempts = 0;
    const std::size_t max_attempts = 1000 * need + 10000;
    while (out.size() < need) {
        if (++attempts > max_attempts)
            throw runtime_error("could not sample " + std::to_string(need) +
                                " negative pairs (graph too dense?)");
        auto u = static_cast<EntityId>(rng.bounded(n));
        auto v = static_cast<EntityId>(rng.bounded(n));
        if (u == v) continue;
        std::uint64_t key = pair_key(u, v);
        if (!forbidden.insert(key).second) continue;
        out.emplace_back(u, v);
    }
    return out;
}

}  // namespace detail

/// Build a link split from a higher-order graph and its first-order
/// counterpart (same corpus). A `fraction` share of the base pairs becomes
/// test positives; hiding one removes every graph_k edge whose endpoints'
/// bases match the pair in either direction. Negatives (test and train) are
/// uniform ordered non-adjacent pairs. fraction = 0 leaves the graph intact.
inline LinkSplit make_link_split(const HonGraph& graph_k, const HonGraph& graph_1,
                                 double fraction = 0.10, std::uint64_t seed = 0) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw validation_error("link split fraction must be in [0, 1]");
    if (graph_1.n_nodes() != graph_1.n_entities())
        throw validation_error("link split needs a first-order graph as reference");
    if (graph_k.n_entities() != graph_1.n_entities() ||
        graph_k.entity_tokens != graph_1.entity_tokens)
        throw validation_error("link split graphs disagree on their entity sets");

    // Base pair set E1, in first-order adjacency order.
    std::vector<std::pair<EntityId, EntityId>> e1;
    std::unordered_set<std::uint64_t> e1_keys;
    for (NodeId u = 0; u < graph_1.n_nodes(); ++u)
        for (const auto& e : graph_1.out_adj[u]) {
            EntityId bu = graph_1.nodes[u].base;
            EntityId bv = graph_1.nodes[e.target].base;
            e1.emplace_back(bu, bv);
            e1_keys.insert(detail::pair_key(bu, bv));
        }
    for (NodeId s = 0; s < graph_k.n_nodes(); ++s)
        for (const auto& e : graph_k.out_adj[s])
            if (!e1_keys.count(
                    detail::pair_key(graph_k.nodes[s].base, graph_k.nodes[e.target].base)))
                throw validation_error(
                    "higher-order graph realizes a base pair absent from the first-order graph "
                    "(different corpora?)");

    LinkSplit split;
    const auto n_test = static_cast<std::size_t>(fraction * static_cast<double>(e1.size()));

    // Test positives: partial Fisher–Yates prefix of E1.
    std::vector<std::size_t> idx(e1.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng pos_rng = fork(seed, "linkpos", 0);
    std::vector<bool> chosen(e1.size(), false);
    for (std::size_t i = 0; i < n_test; ++i) {
        std::size_t j = i + pos_rng.bounded(idx.size() - i);
        std::swap(idx[i], idx[j]);
        chosen[idx[i]] = true;
        split.test_pos.push_back(e1[idx[i]]);
    }
    for (std::size_t i = 0; i < e1.size(); ++i)
        if (!chosen[i]) split.train_pos.push_back(e1[i]);

    // Hide every realization of a test pair, both directions.
    std::unordered_set<std::uint64_t> hidden;
    for (const auto& [u, v] : split.test_pos) {
        hidden.insert(detail::pair_key(u, v));
        hidden.insert(detail::pair_key(v, u));
    }
    GraphBuilder builder(graph_k.k);
    for (const auto& tok : graph_k.entity_tokens) builder.intern_entity(tok);
    for (NodeId s = 0; s < graph_k.n_nodes(); ++s) builder.add_node(graph_k.nodes[s]);
    for (NodeId s = 0; s < graph_k.n_nodes(); ++s)
        for (const auto& e : graph_k.out_adj[s])
            if (!hidden.count(
                    detail::pair_key(graph_k.nodes[s].base, graph_k.nodes[e.target].base)))
                builder.add_edge_weight(s, e.target, e.weight);
    split.train_graph = builder.finish();
    split.train_graph.dense_features = graph_k.dense_features;

    for (EntityId e = 0; e < split.train_graph.n_entities(); ++e) {
        bool any = false;
        for (NodeId m : family(split.train_graph, e))
            if (split.train_graph.out_deg[m] > 0 || split.train_graph.in_deg[m] > 0) any = true;
        if (!any) ++split.isolated;
    }

    // Negatives: test first, then training, with no overlap anywhere.
    std::unordered_set<std::uint64_t> forbidden = e1_keys;
    Rng neg_rng = fork(seed, "linkneg", 0);
    split.test_neg = detail::sample_non_edges(graph_k.n_entities(), n_test, forbidden, neg_rng);
    Rng train_rng = fork(seed, "trainneg", 0);
    split.train_neg =
        detail::sample_non_edges(graph_k.n_entities(), split.train_pos.size(), forbidden,
                                 train_rng);
    return split;
}

// ─── Metrics ─────────────────────────────────────────────────────────────────

/// Micro-averaged F1 over single-label predictions — equal to plain accuracy.
inline double micro_f1(const std::vector<std::uint32_t>& pred,
                       const std::vector<std::uint32_t>& truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw validation_error("micro-F1 needs equal-length non-empty prediction and truth");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Convenience overload: truth looked up per entity in a label map.
inline double micro_f1(const std::vector<EntityId>& entities,
                       const std::vector<std::uint32_t>& pred, const LabelMap& truth) {
    if (entities.size() != pred.size())
        throw validation_error("micro-F1 needs one prediction per entity");
    std::vector<std::uint32_t> t;
    t.reserve(entities.size());
    for (EntityId e : entities) t.push_back(truth.at(e));
    return micro_f1(pred, t);
}

/// Rank-based average precision: sort by score descending (ties keep input
/// order), AP = mean over positives of precision at their rank.
inline double auprc(const std::vector<double>& scores, const std::vector<std::uint32_t>& truth) {
    if (scores.empty() || scores.size() != truth.size())
        throw validation_error("average precision needs equal-length non-empty scores and truth");
    std::size_t n_pos = 0;
    for (std::uint32_t t : truth) {
        if (t > 1) throw validation_error("truth labels must be 0 or 1");
        n_pos += t;
    }
    if (n_pos == 0 || n_pos == truth.size())
        throw validation_error("average precision needs at least one positive and one negative");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0;
    std::size_t seen_pos = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        if (truth[order[rank]] == 1) {
            ++seen_pos;
            ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
        }
    return ap / static_cast<double>(n_pos);
}

/// Chance-corrected agreement κ = (p_o − p_e)/(1 − p_e), with expected
/// agreement p_e from the two predictors' marginal class frequencies. When
/// p_e = 1 both predictors are constant on the same class, so κ = 1.
inline double cohens_kappa(const std::vector<std::uint32_t>& a,
                           const std::vector<std::uint32_t>& b) {
    if (a.size() != b.size()) throw validation_error("kappa needs equal-length predictions");
    if (a.size() < 2) throw validation_error("kappa needs at least 2 predictions");
    std::uint32_t n_classes = 0;
    for (std::uint32_t v : a) n_classes = std::max(n_classes, v + 1);
    for (std::uint32_t v : b) n_classes = std::max(n_classes, v + 1);
    std::vector<double> fa(n_classes, 0.0), fb(n_classes, 0.0);
    double agree = 0;
    const auto n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        fa[a[i]] += 1.0;
        fb[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    double p_o = agree / n;
    double p_e = 0;
    for (std::uint32_t c = 0; c < n_classes; ++c) p_e += (fa[c] / n) * (fb[c] / n);
    if (p_e == 1.0) return 1.0;
    return (p_o - p_e) / (1.0 - p_e);
}

// ─── Homophily ───────────────────────────────────────────────────────────────

/// Per-node fraction of labeled neighbors (undirected union, deduplicated,
/// self excluded) sharing the node's class; labels are inherited from base
/// entities, so higher-order graphs work unchanged. Nodes with no labeled
/// neighbor are excluded from the mean and counted instead.
struct HomophilyReport {
    std::vector<std::pair<NodeId, double>> per_node;  // ascending node id
    double mean = 0.0;
    std::size_t excluded = 0;
};

inline HomophilyReport homophily(const HonGraph& g, const LabelMap& labels) {
    HomophilyReport report;
    double total = 0;
    for (NodeId u = 0; u < g.n_nodes(); ++u) {
        if (!labels.has(g.nodes[u].base)) continue;
        std::uint32_t own = labels.at(g.nodes[u].base);
        std::vector<NodeId> nbrs;
        for (const auto& e : g.out_adj[u]) nbrs.push_back(e.target);
        for (const auto& e : g.in_adj[u]) nbrs.push_back(e.target);
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
        std::size_t labeled = 0, same = 0;
        for (NodeId v : nbrs) {
            if (v == u || !labels.has(g.nodes[v].base)) continue;
            ++labeled;
            if (labels.at(g.nodes[v].base) == own) ++same;
        }
        if (labeled == 0) {
            ++report.excluded;
            continue;
        }
        double frac = static_cast<double>(same) / static_cast<double>(labeled);
        report.per_node.emplace_back(u, frac);
        total += frac;
    }
    if (!report.per_node.empty()) report.mean = total / static_cast<double>(report.per_node.size());
    return report;
}

// ─── Ensemble diversity ──────────────────────────────────────────────────────

/// One learner pair: agreement of their argmax predictions and the mean of
/// their individual cross-entropy losses on the same test entities.
struct DiversityRow {
    int learner_a = 0;
    int learner_b = 0;
    double kappa = 0.0;
    double mean_xent = 0.0;
};

/// All ℓ(ℓ−1)/2 learner pairs of a bag-family model, evaluated on `entities`
/// with per-entity true classes. `seed` drives the query-time sampling
/// streams (insertion-order invariant, as in prediction).
inline std::vector<DiversityRow> diversity_report(const EnsembleModel& m, const HonGraph& g,
                                                  const std::vector<EntityId>& entities,
                                                  const std::vector<std::uint32_t>& truth,
                                                  std::uint64_t seed, int threads = 1) {
    if (entities.size() != truth.size())
        throw validation_error("diversity needs one true class per entity");
    if (entities.size() < 2) throw validation_error("diversity needs at least 2 test entities");
    for (std::uint32_t t : truth)
        if (t >= m.n_classes)
            throw validation_error("true class " + std::to_string(t) + " out of range");
    auto per = per_learner_predictions(m, g, entities, threads, seed);
    std::vector<std::vector<std::uint32_t>> argmaxes;
    std::vector<double> losses;
    for (const auto& probs : per) {
        argmaxes.push_back(argmax_classes(probs));
        double xent = 0;
        for (Eigen::Index r = 0; r < probs.rows(); ++r)
            xent -= std::log(probs(r, static_cast<Eigen::Index>(truth[static_cast<std::size_t>(r)])));
        losses.push_back(xent / static_cast<double>(probs.rows()));
    }
    std::vector<DiversityRow> rows;
    for (int a = 0; a < m.ell; ++a)
        for (int b = a + 1; b < m.ell; ++b)
            rows.push_back({a, b,
                            cohens_kappa(argmaxes[static_cast<std::size_t>(a)],
                                         argmaxes[static_cast<std::size_t>(b)]),
                            0.5 * (losses[static_cast<std::size_t>(a)] +
                                   losses[static_cast<std::size_t>(b)])});
    return rows;
}

/// Scatter-ready TSV: learner_a, learner_b, kappa, mean_xent.
inline std::string diversity_tsv(const std::vector<DiversityRow>& rows) {
    std::string out = "learner_a\tlearner_b\tkappa\tmean_xent\n";
    for (const auto& r : rows) {
        out += std::to_string(r.learner_a);
        out += '\t';
        out += std::to_string(r.learner_b);
        out += '\t';
        out += render_double(r.kappa);
        out += '\t';
        out += render_double(r.mean_xent);
        out += '\n';
    }
    return out;
}

// ─── Experiment runners ──────────────────────────────────────────────────────

/// Train on a fold's training entities and score micro-F1 on its test
/// entities. The seed covers bootstraps, training, and prediction streams.
inline double run_node_fold(const HonGraph& g, const LabelMap& labels, const FoldPlan& folds,
                            int fold, VariantTag variant, int ell, const TrainConfig& cfg,
                            std::uint64_t seed, int threads = 1) {
    auto train_units = folds.train_entities(fold);
    auto test_units = folds.test_entities(fold);
    if (train_units.empty() || test_units.empty())
        throw validation_error("fold " + std::to_string(fold) + " has an empty split");
    std::vector<std::uint32_t> train_labels;
    train_labels.reserve(train_units.size());
    for (EntityId e : train_units) train_labels.push_back(labels.at(e));
    auto bootstraps = make_bootstraps(g, train_units, ell, seed);
    auto model = train(g, bootstraps, train_labels, labels.n_classes(), variant, cfg, seed);
    auto pred = argmax_classes(predict_nodes(model, g, test_units, threads, seed));
    return micro_f1(test_units, pred, labels);
}

/// Train an edge model on a link split's training pairs and score average
/// precision on its test pairs.
inline double run_link_eval(const LinkSplit& split, VariantTag variant, int ell,
                            const TrainConfig& cfg, std::uint64_t seed, int threads = 1) {
    if (split.test_pos.empty())
        throw validation_error("link split has no test positives (fraction too small?)");
    std::vector<std::pair<EntityId, EntityId>> train_pairs = split.train_pos;
    train_pairs.insert(train_pairs.end(), split.train_neg.begin(), split.train_neg.end());
    std::vector<std::uint32_t> train_labels(split.train_pos.size(), 1);
    train_labels.resize(train_pairs.size(), 0);
    auto bootstraps = make_edge_bootstraps(split.train_graph, train_pairs, ell, seed);
    auto model =
        train(split.train_graph, bootstraps, train_labels, 0, variant, cfg, seed);
    std::vector<std::pair<EntityId, EntityId>> test_pairs = split.test_pos;
    test_pairs.insert(test_pairs.end(), split.test_neg.begin(), split.test_neg.end());
    std::vector<std::uint32_t> test_labels(split.test_pos.size(), 1);
    test_labels.resize(test_pairs.size(), 0);
    auto scores = predict_edges(model, split.train_graph, test_pairs, threads, seed);
    return auprc(scores, test_labels);
}

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_stddev(const std::vector<double>& xs) {
    if (xs.empty()) throw validation_error("mean of an empty sample");
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace hondge
