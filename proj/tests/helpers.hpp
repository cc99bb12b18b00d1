#pragma once

// Shared test plumbing: hand-verified toy corpora, a brute-force n-gram
// oracle that shares no code or data structures with the library (token
// strings + std::map + long double), and temp-file helpers.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <hondge/corpus.hpp>

namespace testutil {

// ─── Temp files ──────────────────────────────────────────────────

inline std::string temp_path(const std::string& name) {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "hondge_tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

inline std::string write_temp(const std::string& name, const std::string& content) {
    auto p = temp_path(name);
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
}

// ─── Toy corpora ─────────────────────────────────────────────────

inline hondge::PathCorpus make_corpus(
    const std::vector<std::pair<std::vector<std::string>, int>>& weighted_paths) {
    hondge::PathCorpus c;
    for (const auto& [toks, n] : weighted_paths) {
        std::vector<hondge::EntityId> p;
        for (const auto& t : toks) p.push_back(c.intern(t));
        for (int i = 0; i < n; ++i) c.paths.push_back(p);
    }
    return c;
}

// 32 transitions through C; (C|A) diverges enough to be admitted at τ=1.
// Oracle (40-digit arithmetic): divergence 0.59632253897119794628,
// threshold 2/log2(17) = 0.48930108423645206078.
inline hondge::PathCorpus corpus16() {
    return make_corpus({{{"A", "C", "D"}, 14},
                        {{"A", "C", "E"}, 2},
                        {{"B", "C", "E"}, 14},
                        {{"B", "C", "D"}, 2}});
}

// Mild divergence, rejected at τ=1: divergence 0.20751874963942190927
// < threshold 2/log2(5) = 0.86135311614678610134.
inline hondge::PathCorpus corpus8() {
    return make_corpus({{{"A", "C", "D"}, 3},
                        {{"A", "C", "E"}, 1},
                        {{"B", "C", "E"}, 3},
                        {{"B", "C", "D"}, 1}});
}

// C→D only ever after A, C→E only ever after B: both conditional
// successor laws assign zero mass to a first-order successor, so the
// divergence is +∞ and admission is forced at any finite threshold.
inline hondge::PathCorpus two_branch_corpus() {
    return make_corpus({{{"A", "C", "D"}, 4}, {{"B", "C", "E"}, 4}});
}

// Order-3 corpus exercising the incremental-extension gate. Oracle
// divergences (π₁(C) = {D:.5, E:.5}):
//   (C|A):   0.3219280948873623  thr(τ=1, m=2, f=100) = 0.3003809664473759
//   (C|B):   0.3219280948873623  (same counts mirrored)
//   (C|X,A): 1.0874628412503394  thr(τ=1, m=3, f=68)  = 0.4911169663356469
//   (C|Y,A): 0                   (matches first-order exactly)
// At τ=1: C|A, C|B, C|X,A admitted. At τ=1.2 the order-2 rules fall
// below threshold, so C|X,A must be rejected by the suffix gate even
// though its own divergence (1.087…) still exceeds its own threshold
// (0.589…) — the gated graph degenerates to first order.
inline hondge::PathCorpus k3_corpus() {
    return make_corpus({{{"X", "A", "C", "D"}, 64},
                        {{"Y", "A", "C", "D"}, 16},
                        {{"X", "A", "C", "E"}, 4},
                        {{"Y", "A", "C", "E"}, 16},
                        {{"B", "C", "E"}, 80},
                        {{"B", "C", "D"}, 20}});
}

// ─── Brute-force oracle ──────────────────────────────────────────
// Counts contexts as raw token sequences; no shared code with the
// library's keying, counting, or KL implementation.

using TokenSeq = std::vector<std::string>;
using TokenDist = std::map<std::string, long double>;

struct BruteCounts {
    // context (length ≥ 1, oldest first, ending at the base token)
    //   → successor token → occurrences with that successor
    std::map<TokenSeq, std::map<std::string, long>> succ;

    long total(const TokenSeq& key) const {
        auto it = succ.find(key);
        if (it == succ.end()) return 0;
        long t = 0;
        for (const auto& [tok, n] : it->second) t += n;
        return t;
    }

    TokenDist dist(const TokenSeq& key) const {
        TokenDist d;
        long t = total(key);
        if (t == 0) return d;
        for (const auto& [tok, n] : succ.at(key))
            d[tok] = static_cast<long double>(n) / t;
        return d;
    }
};

inline BruteCounts brute_count(const hondge::PathCorpus& c, int max_m) {
    BruteCounts bc;
    for (const auto& path : c.paths) {
        TokenSeq toks;
        for (auto id : path) toks.push_back(c.tokens[id]);
        for (std::size_t t = 0; t + 1 < toks.size(); ++t)
            for (int m = 1; m <= max_m && static_cast<std::size_t>(m) <= t + 1; ++m) {
                TokenSeq key(toks.begin() + (t + 1 - m), toks.begin() + (t + 1));
                ++bc.succ[key][toks[t + 1]];
            }
    }
    return bc;
}

// Σ_v first(v)·log2(first(v)/cand(v)) over first's support; +∞ when the
// candidate misses a first-order successor.
inline long double brute_kl(const TokenDist& first, const TokenDist& cand) {
    long double s = 0;
    for (const auto& [v, p1] : first) {
        if (p1 <= 0) continue;
        auto it = cand.find(v);
        long double pk = (it == cand.end()) ? 0.0L : it->second;
        if (pk <= 0) return std::numeric_limits<long double>::infinity();
        s += p1 * std::log2(p1 / pk);
    }
    return s;
}

inline long double brute_threshold(long double tau, int m, long freq) {
    return tau * m / std::log2(1.0L + static_cast<long double>(freq));
}

} // namespace testutil
