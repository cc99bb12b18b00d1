#pragma once
// Deep graph ensembles: ℓ neighborhood-sampling learners trained over
// bootstrap-resampled relatives of higher-order families, combined by one of
// three schemes —
//   bag     mean of per-learner class probabilities, per-learner heads
//   pool    mean of per-learner hidden vectors through one head
//   concat  stacked hidden vectors through one tall head
// Each scheme has a shared-parameter (*) form driving one physical network:
// bag* trains it through the ℓ bootstraps sequentially (optimizer state
// carries across stages), pool*/concat* run the pooled computation graph with
// tied weights, and batch* redraws relatives for every batch and predicts
// bag-style. Heads are bias-free linear maps.
//
// Determinism contract: every stochastic choice comes from a named fork of
// the training seed. Stage streams ("shuffle", "nbr", "drop", "val") are
// keyed stream_key(stage_base + learner, epoch), where stage_base is the
// stage index for sequential variants and 0 for joint ones — so at ℓ = 1
// every variant consumes byte-identical streams and, because single-learner
// stages run through the same code path as a one-learner pool, all seven
// variants produce bit-identical models from the same seed. Prediction
// streams are keyed by query content (entity id, or packed pair key), never
// by position, so prediction outputs are insertion-order invariant.
//
// Early stopping: 10% of the training units (fork(seed, "holdout")) are held
// out; after each epoch the stage evaluates its loss on them, and once
// `patience` consecutive epochs fail to improve, the stage stops and restores
// the best snapshot (also restored when the epoch budget runs out).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hondge/graph.hpp"
#include "hondge/nn.hpp"
#include "hondge/rng.hpp"
#include "hondge/sampler.hpp"
#include "hondge/util.hpp"

namespace hondge {

// ─── Variants, tasks, configuration ─────────────────────────────────────────

enum class VariantTag { bag, pool, concat, bag_star, pool_star, concat_star, batch_star };

inline std::string variant_name(VariantTag t) {
    switch (t) {
        case VariantTag::bag: return "bag";
        case VariantTag::pool: return "pool";
        case VariantTag::concat: return "concat";
        case VariantTag::bag_star: return "bag*";
        case VariantTag::pool_star: return "pool*";
        case VariantTag::concat_star: return "concat*";
        case VariantTag::batch_star: return "batch*";
    }
    return "?";
}

inline VariantTag parse_variant(const std::string& s) {
    if (s == "bag") return VariantTag::bag;
    if (s == "pool") return VariantTag::pool;
    if (s == "concat") return VariantTag::concat;
    if (s == "bag*") return VariantTag::bag_star;
    if (s == "pool*") return VariantTag::pool_star;
    if (s == "concat*") return VariantTag::concat_star;
    if (s == "batch*") return VariantTag::batch_star;
    throw validation_error("unknown ensemble variant: '" + s + "'");
}

/// Shared-parameter variants drive a single physical network.
inline bool variant_shared(VariantTag t) {
    return t == VariantTag::bag_star || t == VariantTag::pool_star ||
           t == VariantTag::concat_star || t == VariantTag::batch_star;
}

enum class Combine { mean_prob, mean_hidden, stacked };

/// How predictions are combined across the ℓ learners.
inline Combine variant_combine(VariantTag t) {
    switch (t) {
        case VariantTag::pool:
        case VariantTag::pool_star: return Combine::mean_hidden;
        case VariantTag::concat:
        case VariantTag::concat_star: return Combine::stacked;
        default: return Combine::mean_prob;
    }
}

enum class Task { node, edge };

inline std::string task_name(Task t) { return t == Task::node ? "node" : "edge"; }

inline Task parse_task(const std::string& s) {
    if (s == "node") return Task::node;
    if (s == "edge") return Task::edge;
    throw validation_error("unknown task: '" + s + "'");
}

struct TrainConfig {
    std::size_t hidden = 128;
    std::vector<int> fanouts{64, 1};  // one entry per layer
    double dropout = 0.4;
    double lr = 0.01;
    int epochs = 50;
    int batch_size = 32;
    int patience = 10;
    double holdout_frac = 0.10;
    Direction direction = Direction::out;

    void validate() const {
        if (fanouts.empty()) throw validation_error("at least one layer/fanout required");
        for (int f : fanouts)
            if (f < 1) throw validation_error("fanouts must be >= 1");
        if (hidden == 0) throw validation_error("hidden width must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw validation_error("dropout must lie in [0, 1)");
        if (lr <= 0.0) throw validation_error("learning rate must be positive");
        if (epochs < 1) throw validation_error("epoch budget must be >= 1");
        if (batch_size < 1) throw validation_error("batch size must be >= 1");
        if (patience < 0) throw validation_error("patience must be >= 0");
        if (holdout_frac < 0.0 || holdout_frac > 0.5)
            throw validation_error("holdout fraction must lie in [0, 0.5]");
    }
};

struct EnsembleModel {
    VariantTag variant = VariantTag::bag;
    int ell = 1;
    Task task = Task::node;
    std::uint64_t seed = 0;
    std::size_t n_classes = 0;
    TrainConfig config;
    std::vector<GnnNet> nets;      // ℓ networks, or 1 for shared variants
    std::vector<Mat> heads;        // node task: bag → ℓ of d×c; concat → 1 of dℓ×c; else 1 of d×c
    std::vector<Vec> edge_heads;   // edge task analogues

    const GnnNet& learner_net(int i) const { return nets[nets.size() == 1 ? 0 : i]; }
    const Mat& learner_head(int i) const { return heads[heads.size() == 1 ? 0 : i]; }
    const Vec& learner_edge_head(int i) const {
        return edge_heads[edge_heads.size() == 1 ? 0 : i];
    }
};

// ─── Training ────────────────────────────────────────────────────────────────

namespace detail {

template <typename T>
inline void fisher_yates(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.bounded(i)]);
}

struct NetAdam {
    std::vector<AdamState> w_self, w_neigh;
    std::vector<AdamStateVec> bias;
    explicit NetAdam(std::size_t depth) : w_self(depth), w_neigh(depth), bias(depth) {}
};

inline void adam_net_step(GnnNet& net, const GnnGrads& g, NetAdam& st, double lr) {
    for (std::size_t t = 0; t < net.depth(); ++t) {
        std::string where = "layer " + std::to_string(t + 1) + " ";
        adam_step(net.layers[t].W_self, g.w_self[t], st.w_self[t], lr, 0.9, 0.999, 1e-8,
                  where + "W_self");
        adam_step(net.layers[t].W_neigh, g.w_neigh[t], st.w_neigh[t], lr, 0.9, 0.999, 1e-8,
                  where + "W_neigh");
        adam_step(net.layers[t].bias, g.bias[t], st.bias[t], lr, 0.9, 0.999, 1e-8, where + "bias");
    }
}

// One training stage: which logical learners run, which physical net and
// bootstrap assignment each uses (assign −1 ⇒ redraw per batch), which head
// is trained, and the base offset for stream keys.
struct StagePlan {
    int stage_base = 0;
    int head = 0;
    std::vector<int> learner_net;
    std::vector<int> learner_assign;
};

class Trainer {
public:
    Trainer(const HonGraph& g, const BootstrapSet& bs, const std::vector<std::uint32_t>& labels,
            std::size_t n_classes, VariantTag variant, const TrainConfig& cfg, std::uint64_t seed)
        : g_(g), bs_(bs), labels_(labels), cfg_(cfg), seed_(seed),
          sampler_(g, cfg.direction) {
        cfg.validate();
        if (bs.ell < 1) throw validation_error("bootstrap set is empty");
        task_ = bs.kind == BootstrapSet::Kind::node ? Task::node : Task::edge;
        std::size_t n_units = task_ == Task::node ? bs.units.size() : bs.pair_units.size();
        if (n_units == 0) throw validation_error("no training units");
        if (labels.size() != n_units)
            throw validation_error("labels do not align with training units");
        if (task_ == Task::node) {
            if (n_classes < 2) throw validation_error("node task needs at least 2 classes");
            for (auto y : labels)
                if (y >= n_classes)
                    throw validation_error("label " + std::to_string(y) + " out of range");
        } else {
            for (auto y : labels)
                if (y > 1) throw validation_error("edge labels must be 0 or 1");
        }

        model_.variant = variant;
        model_.ell = bs.ell;
        model_.task = task_;
        model_.seed = seed;
        model_.n_classes = task_ == Task::node ? n_classes : 2;
        model_.config = cfg;

        std::size_t in_dim = g.feature_dim();
        int phys = variant_shared(variant) ? 1 : bs.ell;
        for (int p = 0; p < phys; ++p) {
            Rng r = fork(seed, "init", static_cast<std::uint64_t>(p));
            model_.nets.push_back(make_gnn(in_dim, cfg.hidden, cfg.fanouts, cfg.dropout, r));
            net_adam_.emplace_back(cfg.fanouts.size());
        }

        auto d = static_cast<Eigen::Index>(cfg.hidden);
        if (task_ == Task::node) {
            auto c = static_cast<Eigen::Index>(model_.n_classes);
            auto block = [&](int i) {
                Rng r = fork(seed, "head", static_cast<std::uint64_t>(i));
                return glorot(cfg.hidden, model_.n_classes, r);
            };
            if (variant == VariantTag::bag) {
                for (int i = 0; i < bs.ell; ++i) model_.heads.push_back(block(i));
            } else if (variant == VariantTag::concat || variant == VariantTag::concat_star) {
                Mat w(d * bs.ell, c);
                for (int i = 0; i < bs.ell; ++i) w.middleRows(i * d, d) = block(i);
                model_.heads.push_back(std::move(w));
            } else {
                model_.heads.push_back(block(0));
            }
            head_adam_.resize(model_.heads.size());
        } else {
            auto block = [&](int i) {
                Rng r = fork(seed, "edgehead", static_cast<std::uint64_t>(i));
                return Vec(glorot(cfg.hidden, 1, r).col(0));
            };
            if (variant == VariantTag::bag) {
                for (int i = 0; i < bs.ell; ++i) model_.edge_heads.push_back(block(i));
            } else if (variant == VariantTag::concat || variant == VariantTag::concat_star) {
                Vec w(d * bs.ell);
                for (int i = 0; i < bs.ell; ++i) w.segment(i * d, d) = block(i);
                model_.edge_heads.push_back(std::move(w));
            } else {
                model_.edge_heads.push_back(block(0));
            }
            edge_head_adam_.resize(model_.edge_heads.size());
        }

        stage_combine_ = variant == VariantTag::concat || variant == VariantTag::concat_star
                             ? Combine::stacked
                             : Combine::mean_hidden;

        // Holdout split: one shuffle of unit indices, shared by every stage.
        std::vector<std::size_t> order(n_units);
        for (std::size_t i = 0; i < n_units; ++i) order[i] = i;
        Rng hr = fork(seed, "holdout", 0);
        fisher_yates(order, hr);
        auto n_hold = static_cast<std::size_t>(cfg.holdout_frac * static_cast<double>(n_units));
        holdout_idx_.assign(order.begin(), order.begin() + static_cast<long>(n_hold));
        train_idx_.assign(order.begin() + static_cast<long>(n_hold), order.end());
        std::sort(holdout_idx_.begin(), holdout_idx_.end());
        std::sort(train_idx_.begin(), train_idx_.end());
        if (train_idx_.empty()) throw validation_error("holdout split leaves no training units");
    }

    EnsembleModel run() {
        int ell = model_.ell;
        auto iota = [&](int n) {
            std::vector<int> v(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
            return v;
        };
        switch (model_.variant) {
            case VariantTag::bag:
                for (int i = 0; i < ell; ++i) run_stage({i, i, {i}, {i}});
                break;
            case VariantTag::bag_star:
                for (int i = 0; i < ell; ++i) run_stage({i, 0, {0}, {i}});
                break;
            case VariantTag::pool:
            case VariantTag::concat:
                run_stage({0, 0, iota(ell), iota(ell)});
                break;
            case VariantTag::pool_star:
            case VariantTag::concat_star:
                run_stage({0, 0, std::vector<int>(static_cast<std::size_t>(ell), 0), iota(ell)});
                break;
            case VariantTag::batch_star:
                run_stage({0, 0, {0}, {-1}});
                break;
        }
        return std::move(model_);
    }

private:
    struct Snapshot {
        std::vector<std::pair<int, GnnNet>> nets;
        Mat head;
        Vec edge_head;
    };

    Snapshot snapshot(const StagePlan& plan) const {
        Snapshot s;
        for (int p : unique_nets(plan)) s.nets.emplace_back(p, model_.nets[static_cast<std::size_t>(p)]);
        if (task_ == Task::node) s.head = model_.heads[static_cast<std::size_t>(plan.head)];
        else s.edge_head = model_.edge_heads[static_cast<std::size_t>(plan.head)];
        return s;
    }

    void restore(const Snapshot& s, const StagePlan& plan) {
        for (const auto& [p, net] : s.nets) model_.nets[static_cast<std::size_t>(p)] = net;
        if (task_ == Task::node) model_.heads[static_cast<std::size_t>(plan.head)] = s.head;
        else model_.edge_heads[static_cast<std::size_t>(plan.head)] = s.edge_head;
    }

    std::vector<int> unique_nets(const StagePlan& plan) const {
        std::vector<int> u = plan.learner_net;
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        return u;
    }

    void run_stage(const StagePlan& plan) {
        double best = std::numeric_limits<double>::infinity();
        int bad = 0;
        Snapshot best_snap = snapshot(plan);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            auto order = train_idx_;
            Rng sh = fork(seed_, "shuffle", stream_key(static_cast<std::uint32_t>(plan.stage_base),
                                                       static_cast<std::uint32_t>(epoch)));
            fisher_yates(order, sh);
            auto streams = stage_streams(plan, epoch, "nbr");
            auto drops = stage_streams(plan, epoch, "drop");
            Rng resample = fork(seed_, "resample", static_cast<std::uint64_t>(epoch));
            for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg_.batch_size)) {
                std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg_.batch_size));
                std::vector<std::size_t> batch(order.begin() + static_cast<long>(lo),
                                               order.begin() + static_cast<long>(hi));
                process_batch(plan, batch, streams, &drops, &resample, true);
            }
            if (holdout_idx_.empty()) continue;
            double vloss = holdout_loss(plan, epoch);
            if (vloss < best) {
                best = vloss;
                best_snap = snapshot(plan);
                bad = 0;
            } else if (++bad > cfg_.patience) {
                restore(best_snap, plan);
                return;
            }
        }
        if (!holdout_idx_.empty()) restore(best_snap, plan);
    }

    std::vector<Rng> stage_streams(const StagePlan& plan, int epoch, const char* tag) const {
        std::vector<Rng> out;
        out.reserve(plan.learner_net.size());
        for (std::size_t i = 0; i < plan.learner_net.size(); ++i)
            out.push_back(fork(seed_, tag,
                               stream_key(static_cast<std::uint32_t>(plan.stage_base +
                                                                     static_cast<int>(i)),
                                          static_cast<std::uint32_t>(epoch))));
        return out;
    }

    double holdout_loss(const StagePlan& plan, int epoch) {
        auto streams = stage_streams(plan, epoch, "val");
        double total = 0;
        for (std::size_t lo = 0; lo < holdout_idx_.size();
             lo += static_cast<std::size_t>(cfg_.batch_size)) {
            std::size_t hi =
                std::min(holdout_idx_.size(), lo + static_cast<std::size_t>(cfg_.batch_size));
            std::vector<std::size_t> batch(holdout_idx_.begin() + static_cast<long>(lo),
                                           holdout_idx_.begin() + static_cast<long>(hi));
            total += process_batch(plan, batch, streams, nullptr, nullptr, false);
        }
        return total / static_cast<double>(holdout_idx_.size());
    }

    GnnNet& net_of(const StagePlan& plan, std::size_t i) {
        return model_.nets[static_cast<std::size_t>(plan.learner_net[i])];
    }

    // Runs one batch through all logical learners; returns the summed loss.
    // In training mode also backpropagates and applies one Adam update per
    // physical tensor. Holdout batches reuse the same math without dropout;
    // their relative redraws (batch* only) come from the passed streams.
    double process_batch(const StagePlan& plan, const std::vector<std::size_t>& batch,
                         std::vector<Rng>& nbr, std::vector<Rng>* drop, Rng* resample,
                         bool train_mode) {
        const auto L = plan.learner_net.size();
        const std::size_t b = batch.size();
        const std::size_t roots_per_unit = task_ == Task::node ? 1 : 2;
        std::vector<SamplePlan> plans;
        std::vector<SageBatch> batches;
        plans.reserve(L);
        batches.reserve(L);
        std::vector<Mat> h(L);
        for (std::size_t i = 0; i < L; ++i) {
            std::vector<NodeId> roots(b * roots_per_unit);
            if (plan.learner_assign[i] < 0) {
                Rng& rs = train_mode ? *resample : nbr[i];
                if (task_ == Task::node) {
                    std::vector<EntityId> us(b);
                    for (std::size_t j = 0; j < b; ++j) us[j] = bs_.units[batch[j]];
                    roots = resample_batch_relatives(g_, us, rs);
                } else {
                    std::vector<std::pair<EntityId, EntityId>> ps(b);
                    for (std::size_t j = 0; j < b; ++j) ps[j] = bs_.pair_units[batch[j]];
                    auto pairs = resample_batch_pair_relatives(g_, ps, rs);
                    for (std::size_t j = 0; j < b; ++j) {
                        roots[2 * j] = pairs[j].first;
                        roots[2 * j + 1] = pairs[j].second;
                    }
                }
            } else {
                auto a = static_cast<std::size_t>(plan.learner_assign[i]);
                if (task_ == Task::node) {
                    for (std::size_t j = 0; j < b; ++j) roots[j] = bs_.node_assign[a][batch[j]];
                } else {
                    for (std::size_t j = 0; j < b; ++j) {
                        roots[2 * j] = bs_.pair_assign[a][batch[j]].first;
                        roots[2 * j + 1] = bs_.pair_assign[a][batch[j]].second;
                    }
                }
            }
            plans.push_back(build_plan(sampler_, roots, cfg_.fanouts, nbr[i]));
            batches.emplace_back(net_of(plan, i), g_, plans[i], train_mode,
                                 train_mode ? &(*drop)[i] : nullptr);
            h[i] = batches[i].output();
        }
        return task_ == Task::node ? node_batch_loss(plan, batch, h, batches, train_mode)
                                   : edge_batch_loss(plan, batch, h, batches, train_mode);
    }

    double node_batch_loss(const StagePlan& plan, const std::vector<std::size_t>& batch,
                           const std::vector<Mat>& h, std::vector<SageBatch>& batches,
                           bool train_mode) {
        const auto L = h.size();
        const auto b = static_cast<Eigen::Index>(batch.size());
        Mat& head = model_.heads[static_cast<std::size_t>(plan.head)];
        auto d = static_cast<Eigen::Index>(cfg_.hidden);
        Mat logits;
        Mat hbar;
        if (stage_combine_ == Combine::stacked) {
            logits = Mat::Zero(b, head.cols());
            for (std::size_t i = 0; i < L; ++i)
                logits += h[i] * head.middleRows(static_cast<Eigen::Index>(i) * d, d);
        } else {
            hbar = h[0];
            for (std::size_t i = 1; i < L; ++i) hbar += h[i];
            hbar /= static_cast<double>(L);
            logits = hbar * head;
        }
        double total = 0;
        Mat d_logits(b, logits.cols());
        for (Eigen::Index j = 0; j < b; ++j) {
            auto sl = loss_softmax_xent(logits.row(j).transpose(),
                                        labels_[batch[static_cast<std::size_t>(j)]]);
            total += sl.loss;
            if (train_mode) d_logits.row(j) = sl.grad.transpose() / static_cast<double>(b);
        }
        if (!train_mode) return total;

        Mat head_grad(head.rows(), head.cols());
        std::vector<Mat> d_h(L);
        if (stage_combine_ == Combine::stacked) {
            for (std::size_t i = 0; i < L; ++i) {
                auto rows = static_cast<Eigen::Index>(i) * d;
                head_grad.middleRows(rows, d) = h[i].transpose() * d_logits;
                d_h[i] = d_logits * head.middleRows(rows, d).transpose();
            }
        } else {
            head_grad = hbar.transpose() * d_logits;
            Mat shared = d_logits * head.transpose();
            shared /= static_cast<double>(L);
            for (std::size_t i = 0; i < L; ++i) d_h[i] = shared;
        }
        apply_updates(plan, batches, d_h);
        adam_step(head, head_grad, head_adam_[static_cast<std::size_t>(plan.head)], cfg_.lr, 0.9,
                  0.999, 1e-8, "head");
        return total;
    }

    double edge_batch_loss(const StagePlan& plan, const std::vector<std::size_t>& batch,
                           const std::vector<Mat>& h, std::vector<SageBatch>& batches,
                           bool train_mode) {
        const auto L = h.size();
        const auto b = static_cast<Eigen::Index>(batch.size());
        Vec& w = model_.edge_heads[static_cast<std::size_t>(plan.head)];
        auto d = static_cast<Eigen::Index>(cfg_.hidden);

        // Split each learner's rows into source/target halves.
        std::vector<Mat> hu(L), hv(L);
        for (std::size_t i = 0; i < L; ++i) {
            hu[i] = Mat(b, d);
            hv[i] = Mat(b, d);
            for (Eigen::Index j = 0; j < b; ++j) {
                hu[i].row(j) = h[i].row(2 * j);
                hv[i].row(j) = h[i].row(2 * j + 1);
            }
        }
        Vec scores(b);
        Mat ubar, vbar;
        if (stage_combine_ == Combine::stacked) {
            scores.setZero();
            for (std::size_t i = 0; i < L; ++i) {
                Vec wi = w.segment(static_cast<Eigen::Index>(i) * d, d);
                scores += (hu[i].cwiseProduct(hv[i])) * wi;
            }
        } else {
            ubar = hu[0];
            vbar = hv[0];
            for (std::size_t i = 1; i < L; ++i) {
                ubar += hu[i];
                vbar += hv[i];
            }
            ubar /= static_cast<double>(L);
            vbar /= static_cast<double>(L);
            scores = (ubar.cwiseProduct(vbar)) * w;
        }
        double total = 0;
        Vec d_score(b);
        for (Eigen::Index j = 0; j < b; ++j) {
            auto sl = loss_logistic(scores(j),
                                    static_cast<int>(labels_[batch[static_cast<std::size_t>(j)]]));
            total += sl.loss;
            if (train_mode) d_score(j) = sl.grad / static_cast<double>(b);
        }
        if (!train_mode) return total;

        Vec w_grad(w.size());
        std::vector<Mat> d_h(L);
        if (stage_combine_ == Combine::stacked) {
            for (std::size_t i = 0; i < L; ++i) {
                auto seg = static_cast<Eigen::Index>(i) * d;
                Vec wi = w.segment(seg, d);
                w_grad.segment(seg, d) = (hu[i].cwiseProduct(hv[i])).transpose() * d_score;
                Mat du = hv[i] * wi.asDiagonal();
                Mat dv = hu[i] * wi.asDiagonal();
                d_h[i] = Mat(2 * b, d);
                for (Eigen::Index j = 0; j < b; ++j) {
                    d_h[i].row(2 * j) = d_score(j) * du.row(j);
                    d_h[i].row(2 * j + 1) = d_score(j) * dv.row(j);
                }
            }
        } else {
            w_grad = (ubar.cwiseProduct(vbar)).transpose() * d_score;
            Mat du = vbar * w.asDiagonal();
            Mat dv = ubar * w.asDiagonal();
            double inv_l = 1.0 / static_cast<double>(L);
            Mat shared(2 * b, d);
            for (Eigen::Index j = 0; j < b; ++j) {
                shared.row(2 * j) = d_score(j) * inv_l * du.row(j);
                shared.row(2 * j + 1) = d_score(j) * inv_l * dv.row(j);
            }
            for (std::size_t i = 0; i < L; ++i) d_h[i] = shared;
        }
        apply_updates(plan, batches, d_h);
        adam_step(w, w_grad, edge_head_adam_[static_cast<std::size_t>(plan.head)], cfg_.lr, 0.9,
                  0.999, 1e-8, "edge head");
        return total;
    }

    // Backpropagates each logical learner, accumulates gradients per physical
    // network, and applies exactly one Adam step per physical tensor.
    void apply_updates(const StagePlan& plan, std::vector<SageBatch>& batches,
                       const std::vector<Mat>& d_h) {
        std::vector<int> order;
        std::vector<GnnGrads> acc;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            GnnGrads g = batches[i].backward(d_h[i]);
            int p = plan.learner_net[i];
            auto it = std::find(order.begin(), order.end(), p);
            if (it == order.end()) {
                order.push_back(p);
                acc.push_back(std::move(g));
            } else {
                acc[static_cast<std::size_t>(it - order.begin())].accumulate(g);
            }
        }
        for (std::size_t k = 0; k < order.size(); ++k)
            adam_net_step(model_.nets[static_cast<std::size_t>(order[k])], acc[k],
                          net_adam_[static_cast<std::size_t>(order[k])], cfg_.lr);
    }

    const HonGraph& g_;
    const BootstrapSet& bs_;
    const std::vector<std::uint32_t>& labels_;
    TrainConfig cfg_;
    std::uint64_t seed_;
    NeighborSampler sampler_;
    Task task_ = Task::node;
    Combine stage_combine_ = Combine::mean_hidden;
    EnsembleModel model_;
    std::vector<NetAdam> net_adam_;
    std::vector<AdamState> head_adam_;
    std::vector<AdamStateVec> edge_head_adam_;
    std::vector<std::size_t> train_idx_, holdout_idx_;
};

template <typename F>
inline void parallel_for(std::size_t n, int threads, F&& body) {  // body(lo, hi)
    if (threads <= 1 || n <= 1) {
        body(static_cast<std::size_t>(0), n);
        return;
    }
    auto width = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::size_t chunk = (n + width - 1) / width;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < width; ++t) {
        std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Trains an ensemble. Units, ℓ, and the per-learner relative assignments
/// come from the bootstrap set; `labels` aligns with its units (class ids for
/// the node task, 0/1 for the edge task, where `n_classes` is ignored).
inline EnsembleModel train(const HonGraph& g, const BootstrapSet& bs,
                           const std::vector<std::uint32_t>& labels, std::size_t n_classes,
                           VariantTag variant, const TrainConfig& cfg, std::uint64_t seed) {
    detail::Trainer trainer(g, bs, labels, n_classes, variant, cfg, seed);
    return trainer.run();
}

// ─── Inference ───────────────────────────────────────────────────────────────

namespace detail {

// Per-query hidden vectors, one per learner: the stream draws, in learner
// order, one relative then one neighbor tree.
inline std::vector<Vec> query_hiddens(const EnsembleModel& m, const HonGraph& g,
                                      const NeighborSampler& sampler, EntityId u, Rng& rng) {
    std::vector<Vec> h;
    h.reserve(static_cast<std::size_t>(m.ell));
    NodeDist dist = relative_dist(g, u);
    for (int i = 0; i < m.ell; ++i) {
        NodeId rel = draw_from(dist, rng);
        SamplePlan plan = build_plan(sampler, {rel}, m.config.fanouts, rng);
        SageBatch batch(m.learner_net(i), g, plan, false);
        h.push_back(batch.output().row(0).transpose());
    }
    return h;
}

inline std::vector<std::pair<Vec, Vec>> query_pair_hiddens(const EnsembleModel& m,
                                                           const HonGraph& g,
                                                           const NeighborSampler& sampler,
                                                           EntityId u, EntityId v, Rng& rng) {
    std::vector<std::pair<Vec, Vec>> h;
    h.reserve(static_cast<std::size_t>(m.ell));
    for (int i = 0; i < m.ell; ++i) {
        auto [ru, rv] = draw_edge_relatives(g, u, v, rng);
        SamplePlan pu = build_plan(sampler, {ru}, m.config.fanouts, rng);
        SageBatch bu(m.learner_net(i), g, pu, false);
        SamplePlan pv = build_plan(sampler, {rv}, m.config.fanouts, rng);
        SageBatch bv(m.learner_net(i), g, pv, false);
        h.emplace_back(bu.output().row(0).transpose(), bv.output().row(0).transpose());
    }
    return h;
}

inline Vec softmax_probs(const Vec& logits) {
    double mx = logits.maxCoeff();
    Vec p = (logits.array() - mx).exp();
    return p / p.sum();
}

}  // namespace detail

/// Per-learner class probabilities (bag-family variants only): ℓ matrices,
/// one row per query. predict_nodes for those variants is exactly the
/// elementwise mean of these matrices. stream_seed overrides the model seed
/// for the per-query sampling streams (defaults to the model's own seed).
inline std::vector<Mat> per_learner_predictions(const EnsembleModel& m, const HonGraph& g,
                                                const std::vector<EntityId>& queries,
                                                int threads = 1,
                                                std::optional<std::uint64_t> stream_seed = {}) {
    if (m.task != Task::node) throw validation_error("per-learner predictions need a node model");
    if (variant_combine(m.variant) != Combine::mean_prob)
        throw validation_error("per-learner predictions are undefined for variant " +
                               variant_name(m.variant) + " (hidden states are pooled)");
    const std::uint64_t base = stream_seed.value_or(m.seed);
    NeighborSampler sampler(g, m.config.direction);
    auto q = static_cast<Eigen::Index>(queries.size());
    std::vector<Mat> out(static_cast<std::size_t>(m.ell));
    for (auto& mat : out) mat = Mat(q, static_cast<Eigen::Index>(m.n_classes));
    detail::parallel_for(queries.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
            Rng rng = fork(base, "predict", queries[j]);
            auto h = detail::query_hiddens(m, g, sampler, queries[j], rng);
            for (int i = 0; i < m.ell; ++i)
                out[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(j)) =
                    detail::softmax_probs(m.learner_head(i).transpose() *
                                          h[static_cast<std::size_t>(i)])
                        .transpose();
        }
    });
    return out;
}

/// Class probabilities, one row per query, combined per the model's variant.
inline Mat predict_nodes(const EnsembleModel& m, const HonGraph& g,
                         const std::vector<EntityId>& queries, int threads = 1,
                         std::optional<std::uint64_t> stream_seed = {}) {
    if (m.task != Task::node) throw validation_error("predict_nodes needs a node model");
    if (variant_combine(m.variant) == Combine::mean_prob) {
        auto per = per_learner_predictions(m, g, queries, threads, stream_seed);
        Mat p = per[0];
        for (std::size_t i = 1; i < per.size(); ++i) p += per[i];
        return p / static_cast<double>(per.size());
    }
    const std::uint64_t base = stream_seed.value_or(m.seed);
    NeighborSampler sampler(g, m.config.direction);
    Mat p(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(m.n_classes));
    auto d = static_cast<Eigen::Index>(m.config.hidden);
    detail::parallel_for(queries.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
            Rng rng = fork(base, "predict", queries[j]);
            auto h = detail::query_hiddens(m, g, sampler, queries[j], rng);
            Vec logits;
            if (variant_combine(m.variant) == Combine::stacked) {
                logits = Vec::Zero(static_cast<Eigen::Index>(m.n_classes));
                for (int i = 0; i < m.ell; ++i)
                    logits += m.heads[0].middleRows(i * d, d).transpose() *
                              h[static_cast<std::size_t>(i)];
            } else {
                Vec hbar = h[0];
                for (std::size_t i = 1; i < h.size(); ++i) hbar += h[i];
                hbar /= static_cast<double>(h.size());
                logits = m.heads[0].transpose() * hbar;
            }
            p.row(static_cast<Eigen::Index>(j)) = detail::softmax_probs(logits).transpose();
        }
    });
    return p;
}

/// Edge scores in [0, 1], one per query pair.
inline std::vector<double> predict_edges(const EnsembleModel& m, const HonGraph& g,
                                         const std::vector<std::pair<EntityId, EntityId>>& pairs,
                                         int threads = 1,
                                         std::optional<std::uint64_t> stream_seed = {}) {
    if (m.task != Task::edge) throw validation_error("predict_edges needs an edge model");
    const std::uint64_t base = stream_seed.value_or(m.seed);
    NeighborSampler sampler(g, m.config.direction);
    std::vector<double> scores(pairs.size());
    auto d = static_cast<Eigen::Index>(m.config.hidden);
    detail::parallel_for(pairs.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
            Rng rng = fork(base, "predict", stream_key(pairs[j].first, pairs[j].second));
            auto h = detail::query_pair_hiddens(m, g, sampler, pairs[j].first, pairs[j].second, rng);
            double s = 0;
            switch (variant_combine(m.variant)) {
                case Combine::mean_prob: {
                    for (int i = 0; i < m.ell; ++i) {
                        double z = h[static_cast<std::size_t>(i)]
                                       .first.cwiseProduct(h[static_cast<std::size_t>(i)].second)
                                       .dot(m.learner_edge_head(i));
                        s += 1.0 / (1.0 + std::exp(-z));
                    }
                    s /= static_cast<double>(m.ell);
                    break;
                }
                case Combine::mean_hidden: {
                    Vec u = h[0].first, v = h[0].second;
                    for (std::size_t i = 1; i < h.size(); ++i) {
                        u += h[i].first;
                        v += h[i].second;
                    }
                    u /= static_cast<double>(h.size());
                    v /= static_cast<double>(h.size());
                    s = 1.0 / (1.0 + std::exp(-u.cwiseProduct(v).dot(m.edge_heads[0])));
                    break;
                }
                case Combine::stacked: {
                    double z = 0;
                    for (int i = 0; i < m.ell; ++i)
                        z += h[static_cast<std::size_t>(i)]
                                 .first.cwiseProduct(h[static_cast<std::size_t>(i)].second)
                                 .dot(m.edge_heads[0].segment(i * d, d));
                    s = 1.0 / (1.0 + std::exp(-z));
                    break;
                }
            }
            scores[j] = s;
        }
    });
    return scores;
}

// ─── Checkpoints ─────────────────────────────────────────────────────────────

inline Checkpoint to_checkpoint(const EnsembleModel& m) {
    Checkpoint ck;
    ck.meta["variant"] = variant_name(m.variant);
    ck.meta["ell"] = std::to_string(m.ell);
    ck.meta["task"] = task_name(m.task);
    ck.meta["seed"] = std::to_string(m.seed);
    ck.meta["n-classes"] = std::to_string(m.n_classes);
    ck.meta["hidden"] = std::to_string(m.config.hidden);
    std::string fo;
    for (std::size_t i = 0; i < m.config.fanouts.size(); ++i) {
        if (i) fo += ",";
        fo += std::to_string(m.config.fanouts[i]);
    }
    ck.meta["fanouts"] = fo;
    ck.meta["dropout"] = render_double(m.config.dropout);
    ck.meta["lr"] = render_double(m.config.lr);
    ck.meta["epochs"] = std::to_string(m.config.epochs);
    ck.meta["batch-size"] = std::to_string(m.config.batch_size);
    ck.meta["patience"] = std::to_string(m.config.patience);
    ck.meta["holdout"] = render_double(m.config.holdout_frac);
    ck.meta["direction"] = m.config.direction == Direction::out
                               ? "out"
                               : (m.config.direction == Direction::in ? "in" : "both");
    for (std::size_t p = 0; p < m.nets.size(); ++p)
        for (std::size_t t = 0; t < m.nets[p].depth(); ++t) {
            std::string base = "learner" + std::to_string(p) + ".layer" + std::to_string(t) + ".";
            ck.tensors.push_back(tensor_of(base + "W_self", m.nets[p].layers[t].W_self));
            ck.tensors.push_back(tensor_of(base + "W_neigh", m.nets[p].layers[t].W_neigh));
            ck.tensors.push_back(tensor_of(base + "bias", m.nets[p].layers[t].bias));
        }
    for (std::size_t i = 0; i < m.heads.size(); ++i)
        ck.tensors.push_back(tensor_of("head" + std::to_string(i), m.heads[i]));
    for (std::size_t i = 0; i < m.edge_heads.size(); ++i)
        ck.tensors.push_back(tensor_of("edge-head" + std::to_string(i), m.edge_heads[i]));
    return ck;
}

inline EnsembleModel from_checkpoint(const Checkpoint& ck) {
    auto meta = [&](const std::string& key) -> const std::string& {
        auto it = ck.meta.find(key);
        if (it == ck.meta.end()) throw validation_error("checkpoint missing metadata '" + key + "'");
        return it->second;
    };
    EnsembleModel m;
    m.variant = parse_variant(meta("variant"));
    m.ell = static_cast<int>(parse_long(meta("ell"), "ell"));
    m.task = parse_task(meta("task"));
    m.seed = static_cast<std::uint64_t>(parse_long(meta("seed"), "seed"));
    m.n_classes = static_cast<std::size_t>(parse_long(meta("n-classes"), "n-classes"));
    m.config.hidden = static_cast<std::size_t>(parse_long(meta("hidden"), "hidden"));
    m.config.fanouts.clear();
    for (auto part : split_char(meta("fanouts"), ','))
        m.config.fanouts.push_back(static_cast<int>(parse_long(part, "fanouts")));
    m.config.dropout = parse_double(meta("dropout"), "dropout");
    m.config.lr = parse_double(meta("lr"), "lr");
    m.config.epochs = static_cast<int>(parse_long(meta("epochs"), "epochs"));
    m.config.batch_size = static_cast<int>(parse_long(meta("batch-size"), "batch-size"));
    m.config.patience = static_cast<int>(parse_long(meta("patience"), "patience"));
    m.config.holdout_frac = parse_double(meta("holdout"), "holdout");
    m.config.direction = parse_direction(meta("direction"));
    m.config.validate();
    if (m.ell < 1) throw validation_error("checkpoint ell must be >= 1");

    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : ck.tensors) by_name[t.name] = &t;
    auto need = [&](const std::string& name) -> const NamedTensor& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw validation_error("checkpoint missing tensor '" + name + "'");
        return *it->second;
    };
    std::size_t phys = variant_shared(m.variant) ? 1 : static_cast<std::size_t>(m.ell);
    for (std::size_t p = 0; p < phys; ++p) {
        GnnNet net;
        net.fanouts = m.config.fanouts;
        net.dropout = m.config.dropout;
        for (std::size_t t = 0; t < m.config.fanouts.size(); ++t) {
            std::string base = "learner" + std::to_string(p) + ".layer" + std::to_string(t) + ".";
            SageLayer layer;
            layer.W_self = mat_from(need(base + "W_self"));
            layer.W_neigh = mat_from(need(base + "W_neigh"));
            layer.bias = vec_from(need(base + "bias"));
            layer.relu = true;
            net.layers.push_back(std::move(layer));
        }
        m.nets.push_back(std::move(net));
    }
    std::size_t n_heads = m.task == Task::node
                              ? (m.variant == VariantTag::bag ? static_cast<std::size_t>(m.ell) : 1)
                              : 0;
    for (std::size_t i = 0; i < n_heads; ++i)
        m.heads.push_back(mat_from(need("head" + std::to_string(i))));
    std::size_t n_edge = m.task == Task::edge
                             ? (m.variant == VariantTag::bag ? static_cast<std::size_t>(m.ell) : 1)
                             : 0;
    for (std::size_t i = 0; i < n_edge; ++i)
        m.edge_heads.push_back(vec_from(need("edge-head" + std::to_string(i))));
    return m;
}

inline void save_model(const EnsembleModel& m, const std::string& path) {
    write_file(path, checkpoint_text(to_checkpoint(m)));
}

inline EnsembleModel load_model(const std::string& path) {
    return from_checkpoint(parse_checkpoint(read_file(path), path));
}

// ─── Whole-ensemble gradient audit ───────────────────────────────────────────

/// Finite-difference check of the full classification loss (mean softmax
/// cross-entropy of the combined logits) against the analytic gradients, over
/// every learner tensor and the head. Neighbor trees are frozen from
/// fork(seed, "nbr", 0); requires dropout 0.
inline GradCheckReport ensemble_grad_check(EnsembleModel& m, const HonGraph& g,
                                           const std::vector<EntityId>& units,
                                           const std::vector<std::uint32_t>& labels,
                                           double tolerance) {
    if (m.task != Task::node) throw validation_error("gradient audit covers the node task");
    if (m.config.dropout != 0.0) throw validation_error("gradient audit requires dropout 0");
    if (units.size() != labels.size()) throw validation_error("labels do not align with units");
    NeighborSampler sampler(g, m.config.direction);
    Combine combine = m.variant == VariantTag::concat || m.variant == VariantTag::concat_star
                          ? Combine::stacked
                          : Combine::mean_hidden;

    // Frozen per-learner plans: roots are each unit's order-1 node.
    std::vector<NodeId> roots;
    for (EntityId u : units) roots.push_back(family(g, u)[0]);
    std::vector<SamplePlan> plans;
    for (int i = 0; i < m.ell; ++i) {
        Rng rng = fork(m.seed, "nbr", static_cast<std::uint64_t>(i));
        plans.push_back(build_plan(sampler, roots, m.config.fanouts, rng));
    }

    auto d = static_cast<Eigen::Index>(m.config.hidden);
    auto b = static_cast<Eigen::Index>(units.size());
    auto forward = [&](std::vector<SageBatch>* keep) {
        std::vector<Mat> h;
        for (int i = 0; i < m.ell; ++i) {
            SageBatch batch(m.learner_net(i), g, plans[static_cast<std::size_t>(i)],
                            keep != nullptr);
            h.push_back(batch.output());
            if (keep) keep->push_back(std::move(batch));
        }
        Mat logits;
        if (combine == Combine::stacked) {
            logits = Mat::Zero(b, m.heads[0].cols());
            for (int i = 0; i < m.ell; ++i) logits += h[static_cast<std::size_t>(i)] *
                                                      m.heads[0].middleRows(i * d, d);
        } else {
            Mat hbar = h[0];
            for (std::size_t i = 1; i < h.size(); ++i) hbar += h[i];
            hbar /= static_cast<double>(h.size());
            logits = hbar * m.heads[0];
        }
        return std::make_pair(logits, h);
    };
    auto loss_of = [&](const Mat& logits) {
        double total = 0;
        for (Eigen::Index j = 0; j < b; ++j)
            total += loss_softmax_xent(logits.row(j).transpose(),
                                       labels[static_cast<std::size_t>(j)])
                         .loss;
        return total / static_cast<double>(b);
    };

    // Analytic pass.
    std::vector<SageBatch> batches;
    batches.reserve(static_cast<std::size_t>(m.ell));
    auto [logits, h] = forward(&batches);
    Mat d_logits(b, logits.cols());
    for (Eigen::Index j = 0; j < b; ++j)
        d_logits.row(j) = loss_softmax_xent(logits.row(j).transpose(),
                                            labels[static_cast<std::size_t>(j)])
                              .grad.transpose() /
                          static_cast<double>(b);
    Mat head_grad(m.heads[0].rows(), m.heads[0].cols());
    std::vector<GnnGrads> net_grads;
    for (std::size_t p = 0; p < m.nets.size(); ++p)
        net_grads.push_back(GnnGrads::zeros_like(m.nets[p]));
    for (int i = 0; i < m.ell; ++i) {
        Mat d_h;
        if (combine == Combine::stacked) {
            head_grad.middleRows(i * d, d) = h[static_cast<std::size_t>(i)].transpose() * d_logits;
            d_h = d_logits * m.heads[0].middleRows(i * d, d).transpose();
        } else {
            if (i == 0) head_grad.setZero();
            d_h = d_logits * m.heads[0].transpose() / static_cast<double>(m.ell);
        }
        GnnGrads gi = batches[static_cast<std::size_t>(i)].backward(d_h);
        net_grads[m.nets.size() == 1 ? 0 : static_cast<std::size_t>(i)].accumulate(gi);
    }
    if (combine != Combine::stacked) {
        Mat hbar = h[0];
        for (std::size_t i = 1; i < h.size(); ++i) hbar += h[i];
        hbar /= static_cast<double>(h.size());
        head_grad = hbar.transpose() * d_logits;
    }

    // Numeric comparison.
    GradCheckReport report;
    for (int i = 0; i < m.ell; ++i)
        report.kink_distance =
            std::min(report.kink_distance,
                     SageBatch(m.learner_net(i), g, plans[static_cast<std::size_t>(i)], false)
                         .kink_distance());
    const double step = 1e-5;
    auto probe = [&](double* cell, double analytic, const std::string& label) {
        double saved = *cell;
        *cell = saved + step;
        double up = loss_of(forward(nullptr).first);
        *cell = saved - step;
        double down = loss_of(forward(nullptr).first);
        *cell = saved;
        double numeric = (up - down) / (2.0 * step);
        double rel =
            std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
        if (rel > report.max_rel) {
            report.max_rel = rel;
            report.worst = label;
        }
    };
    for (std::size_t p = 0; p < m.nets.size(); ++p)
        for (std::size_t t = 0; t < m.nets[p].depth(); ++t) {
            std::string base = "learner " + std::to_string(p) + " layer " + std::to_string(t + 1);
            auto& layer = m.nets[p].layers[t];
            for (Eigen::Index r = 0; r < layer.W_self.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.W_self.cols(); ++c)
                    probe(&layer.W_self(r, c), net_grads[p].w_self[t](r, c), base + " W_self");
            for (Eigen::Index r = 0; r < layer.W_neigh.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.W_neigh.cols(); ++c)
                    probe(&layer.W_neigh(r, c), net_grads[p].w_neigh[t](r, c), base + " W_neigh");
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
                probe(&layer.bias(r), net_grads[p].bias[t](r), base + " bias");
        }
    for (Eigen::Index r = 0; r < m.heads[0].rows(); ++r)
        for (Eigen::Index c = 0; c < m.heads[0].cols(); ++c)
            probe(&m.heads[0](r, c), head_grad(r, c), "head");
    report.pass = report.max_rel <= tolerance;
    return report;
}

}  // namespace hondge
