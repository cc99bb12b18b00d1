#pragma once

// Deterministic, portable randomness.
//
// Generator: xoshiro256** (Blackman & Vigna), state seeded through
// splitmix64 — both algorithms have published constants and identical
// output on every platform, so seeded runs are bit-reproducible.
//
// Streams: every consumer derives its own generator via
// fork(seed, tag, index); no shared mutable RNG state exists anywhere,
// which is what makes `--threads N` byte-identical to `--threads 1`.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "util.hpp"

namespace hondge {

// splitmix64 finalizer (also used as the state-scrambling hash for forks).
inline std::uint64_t splitmix64_mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

class Rng {
public:
    // xoshiro256** seeded by four successive splitmix64 outputs.
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t x = seed;
        for (auto& w : s_) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            w = z ^ (z >> 31);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Unbiased uniform integer in [0, n) (Lemire's method with rejection).
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw runtime_error("Rng::bounded: n must be > 0");
        std::uint64_t x = next();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                x = next();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> s_;
};

// Derive an independent stream: hash the master seed with a purpose tag
// and a numeric index, then seed a fresh generator from the result.
inline Rng fork(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = splitmix64_mix(seed ^ fnv1a64(tag));
    h = splitmix64_mix(h ^ (index * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL));
    return Rng(h);
}

// Pack a (stage, epoch)-style pair into one stream index.
inline std::uint64_t stream_key(std::uint64_t hi, std::uint64_t lo) {
    return (hi << 32) | (lo & 0xFFFFFFFFULL);
}

// ─── Alias table ─────────────────────────────────────────────────
// Vose's method: O(n) build, O(1) weighted draws. Construction walks
// indices in ascending order so the table (and therefore every draw
// sequence) is deterministic.
class AliasTable {
public:
    AliasTable() = default;

    explicit AliasTable(const std::vector<double>& weights) {
        const std::size_t n = weights.size();
        prob_.assign(n, 0.0);
        alias_.assign(n, 0);
        if (n == 0) return;
        double total = 0;
        for (double w : weights) {
            if (w < 0) throw runtime_error("AliasTable: negative weight");
            total += w;
        }
        if (total <= 0) throw runtime_error("AliasTable: all weights zero");
        std::vector<double> scaled(n);
        for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * n / total;
        std::vector<std::uint32_t> small, large;
        for (std::size_t i = 0; i < n; ++i)
            (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
        while (!small.empty() && !large.empty()) {
            std::uint32_t s = small.back(); small.pop_back();
            std::uint32_t l = large.back(); large.pop_back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            (scaled[l] < 1.0 ? small : large).push_back(l);
        }
        for (std::uint32_t i : large) prob_[i] = 1.0;
        for (std::uint32_t i : small) prob_[i] = 1.0;  // numerical leftovers
    }

    bool empty() const { return prob_.empty(); }
    std::size_t size() const { return prob_.size(); }

    // Consumes exactly two generator values per draw.
    std::uint32_t draw(Rng& rng) const {
        auto i = static_cast<std::uint32_t>(rng.bounded(prob_.size()));
        return rng.u01() < prob_[i] ? i : alias_[i];
    }

private:
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

} // namespace hondge
