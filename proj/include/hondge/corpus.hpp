#pragma once

// Ingestion and validation of the observed-path dataset and per-entity
// class labels. Everything downstream (graph construction, sampling,
// training) works on the dense entity ids assigned here.

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "util.hpp"

namespace hondge {

using EntityId = std::uint32_t;

// Characters that the graph serializer uses as delimiters; tokens
// containing them are rejected at load instead of escaped.
inline bool has_reserved_char(std::string_view token) {
    for (char c : token)
        if (c == '|' || c == ',' || c == '\t' || c == '\n') return true;
    return false;
}

struct PathCorpus {
    std::vector<std::vector<EntityId>> paths;            // each length ≥ 2
    std::vector<std::string> tokens;                     // id → token
    std::unordered_map<std::string, EntityId> ids;       // token → id
    std::size_t rejected_lines = 0;                      // short lines dropped at load

    EntityId n_entities() const { return static_cast<EntityId>(tokens.size()); }

    EntityId intern(std::string_view token) {
        auto it = ids.find(std::string(token));
        if (it != ids.end()) return it->second;
        auto id = static_cast<EntityId>(tokens.size());
        tokens.emplace_back(token);
        ids.emplace(tokens.back(), id);
        return id;
    }

    EntityId id_of(std::string_view token) const {
        auto it = ids.find(std::string(token));
        if (it == ids.end())
            throw validation_error("unknown entity token: '" + std::string(token) + "'");
        return it->second;
    }

    // Total transition count Σ_paths (len − 1); the edge mass every
    // graph built from this corpus must conserve.
    std::uint64_t total_transitions() const {
        std::uint64_t t = 0;
        for (const auto& p : paths) t += p.size() - 1;
        return t;
    }
};

// One path per line, whitespace-separated tokens; `#` comments and blank
// lines skipped; optional leading line id discarded. Lines left with
// fewer than 2 tokens are rejected and counted — more than 10% rejected
// fails the whole load (a wrong has_line_id flag should fail loudly).
inline PathCorpus load_corpus(const std::string& path, bool has_line_id = false) {
    PathCorpus corpus;
    std::size_t data_lines = 0;
    std::size_t line_no = 0;
    for (const std::string& raw : read_lines(path)) {
        ++line_no;
        std::string_view line = strip_cr(raw);
        auto toks = split_ws(line);
        if (toks.empty() || toks[0][0] == '#') continue;
        ++data_lines;
        if (has_line_id) toks.erase(toks.begin());
        if (toks.size() < 2) {
            ++corpus.rejected_lines;
            continue;
        }
        std::vector<EntityId> p;
        p.reserve(toks.size());
        for (auto t : toks) {
            if (has_reserved_char(t))
                throw validation_error("reserved character in token '" + std::string(t) +
                                       "' at line " + std::to_string(line_no) + " of " + path);
            p.push_back(corpus.intern(t));
        }
        corpus.paths.push_back(std::move(p));
    }
    if (data_lines > 0 && corpus.rejected_lines * 10 > data_lines)
        throw validation_error("more than 10% of lines rejected (" +
                               std::to_string(corpus.rejected_lines) + " of " +
                               std::to_string(data_lines) + ") in " + path +
                               " — check --has-line-id and file format");
    return corpus;
}

inline void save_corpus(const PathCorpus& corpus, const std::string& path) {
    std::string out;
    for (const auto& p : corpus.paths) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (i) out += ' ';
            out += corpus.tokens[p[i]];
        }
        out += '\n';
    }
    write_file(path, out);
}

struct LabelMap {
    std::unordered_map<EntityId, std::uint32_t> label_of;  // entity id → class id
    std::vector<std::string> class_names;                  // class id → name
    std::size_t skipped_unknown = 0;                       // labels for entities not in corpus

    std::uint32_t n_classes() const { return static_cast<std::uint32_t>(class_names.size()); }
    bool has(EntityId e) const { return label_of.count(e) > 0; }
    std::uint32_t at(EntityId e) const {
        auto it = label_of.find(e);
        if (it == label_of.end())
            throw validation_error("entity id " + std::to_string(e) + " has no label");
        return it->second;
    }
};

// Two-column TSV "entity<TAB>class". Labels for entities absent from the
// corpus are skipped (counted); the same entity listed twice with
// different classes is a hard error.
inline LabelMap load_labels(const std::string& path, const PathCorpus& corpus) {
    LabelMap labels;
    std::unordered_map<std::string, std::uint32_t> class_ids;
    std::size_t line_no = 0;
    for (const std::string& raw : read_lines(path)) {
        ++line_no;
        std::string_view line = strip_cr(raw);
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_char(line, '\t');
        if (cols.size() != 2 || cols[0].empty() || cols[1].empty())
            throw validation_error("label file " + path + " line " + std::to_string(line_no) +
                                   ": expected 'entity<TAB>class'");
        auto ent = corpus.ids.find(std::string(cols[0]));
        if (ent == corpus.ids.end()) {
            ++labels.skipped_unknown;
            continue;
        }
        std::string cls(cols[1]);
        auto [it, inserted] = class_ids.emplace(cls, static_cast<std::uint32_t>(class_ids.size()));
        if (inserted) labels.class_names.push_back(cls);
        auto [lit, fresh] = labels.label_of.emplace(ent->second, it->second);
        if (!fresh && lit->second != it->second)
            throw validation_error("conflicting classes for entity '" + std::string(cols[0]) +
                                   "' in " + path);
    }
    return labels;
}

} // namespace hondge
