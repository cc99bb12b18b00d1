#pragma once
// Synthetic path corpora with planted dependencies, the controlled ground
// truth for the evaluation harness. Entities are partitioned into contiguous
// equal-size blocks (the classes). Each entity e owns a fixed pseudo-random
// subset S(e) of its own block (8 members, fewer for small blocks). A path
// step draws, with probability memory_strength, a uniform member of
// S(x_{t-order}) — and otherwise a uniform entity.
//
// With order=2 the successor law therefore depends on the token two steps
// back: adjacent-pair marginals are nearly uniform (a first-order graph
// composes them and loses the signal), while second-order contexts chain
// u|p → v|u → w|v with w ∈ S(u), putting the root's own block exactly two
// hops out from every one of its conditional nodes. memory_strength = 0
// degenerates to i.i.d. uniform tokens for either order.
//
// Every stream is a named fork of PlantedChainSpec::seed ("subset" per entity,
// "path" per path index), so corpora are reproducible path by path and
// generation could proceed in parallel over path indices.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hondge/corpus.hpp"
#include "hondge/rng.hpp"
#include "hondge/util.hpp"

namespace hondge {

/// Block successor subsets hold at most this many entities.
inline constexpr std::size_t kPlantedSubsetSize = 8;

/// Parameters of a planted-block chain corpus.
struct PlantedChainSpec {
    EntityId n_entities = 0;
    int order = 2;              // true Markov order of the chain (1 or 2)
    std::size_t n_paths = 0;
    std::size_t path_len = 10;
    double memory_strength = 0.9;  // 0 = i.i.d. uniform, 1 = always the planted subset
    std::uint32_t n_classes = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (order != 1 && order != 2) throw validation_error("chain order must be 1 or 2");
        if (n_classes < 2) throw validation_error("need at least 2 classes");
        if (n_entities < 2 * n_classes)
            throw validation_error("need at least 2 entities per class (n_entities >= 2*n_classes)");
        if (!(memory_strength >= 0.0 && memory_strength <= 1.0))
            throw validation_error("memory strength must be in [0, 1]");
        if (n_paths == 0) throw validation_error("need at least one path");
        if (path_len < static_cast<std::size_t>(order) + 1)
            throw validation_error("paths must be longer than the chain order");
    }
};

/// A generated corpus with its planted class labels.
struct SynthData {
    PathCorpus corpus;
    LabelMap labels;
};

/// Class of entity e under the contiguous proportional partition.
inline std::uint32_t planted_class(EntityId e, EntityId n_entities, std::uint32_t n_classes) {
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(e) * n_classes / n_entities);
}

/// The planted successor subset S(e): the first min(8, |block|) entries of a
/// seeded shuffle of e's block.
inline std::vector<EntityId> planted_subset(const PlantedChainSpec& spec, EntityId e) {
    std::uint32_t c = planted_class(e, spec.n_entities, spec.n_classes);
    std::vector<EntityId> block;
    for (EntityId v = 0; v < spec.n_entities; ++v)
        if (planted_class(v, spec.n_entities, spec.n_classes) == c) block.push_back(v);
    const std::size_t f = std::min(kPlantedSubsetSize, block.size());
    Rng rng = fork(spec.seed, "subset", e);
    for (std::size_t i = 0; i < f; ++i) {
        std::size_t j = i + rng.bounded(block.size() - i);
        std::swap(block[i], block[j]);
    }
    block.resize(f);
    return block;
}

/// Generate the corpus and labels. Deterministic in spec.seed.
inline SynthData generate(const PlantedChainSpec& spec) {
    spec.validate();
    SynthData data;
    for (EntityId e = 0; e < spec.n_entities; ++e)
        data.corpus.intern("e" + std::to_string(e));
    for (std::uint32_t c = 0; c < spec.n_classes; ++c)
        data.labels.class_names.push_back("c" + std::to_string(c));
    for (EntityId e = 0; e < spec.n_entities; ++e)
        data.labels.label_of[e] = planted_class(e, spec.n_entities, spec.n_classes);

    std::vector<std::vector<EntityId>> subsets;
    subsets.reserve(spec.n_entities);
    for (EntityId e = 0; e < spec.n_entities; ++e) subsets.push_back(planted_subset(spec, e));

    const auto order = static_cast<std::size_t>(spec.order);
    data.corpus.paths.reserve(spec.n_paths);
    for (std::size_t p = 0; p < spec.n_paths; ++p) {
        Rng rng = fork(spec.seed, "path", p);
        std::vector<EntityId> path;
        path.reserve(spec.path_len);
        for (std::size_t t = 0; t < order; ++t)
            path.push_back(static_cast<EntityId>(rng.bounded(spec.n_entities)));
        for (std::size_t t = order; t < spec.path_len; ++t) {
            if (rng.u01() < spec.memory_strength) {
                const auto& s = subsets[path[t - order]];
                path.push_back(s[rng.bounded(s.size())]);
            } else {
                path.push_back(static_cast<EntityId>(rng.bounded(spec.n_entities)));
            }
        }
        data.corpus.paths.push_back(std::move(path));
    }
    return data;
}

/// Two-column TSV "entity<TAB>class", one row per entity in id order —
/// the format load_labels reads back.
inline std::string labels_tsv(const LabelMap& labels, const PathCorpus& corpus) {
    std::string out;
    for (EntityId e = 0; e < corpus.n_entities(); ++e) {
        if (!labels.has(e)) continue;
        out += corpus.tokens[e];
        out += '\t';
        out += labels.class_names[labels.at(e)];
        out += '\n';
    }
    return out;
}

}  // namespace hondge
