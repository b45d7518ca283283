#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <unordered_set>
#include <vector>

namespace ssvaerr {

// Counter-based generator (SplitMix64 over key + n*gamma). Every consumer keys its own
// stream from (seed, purpose, ids...), so draws never depend on evaluation order across
// clips, epochs, or threads. Distributions are implemented here by hand because the
// std::* distributions are not bit-portable across standard libraries.
class KeyedRng {
public:
    explicit KeyedRng(std::uint64_t key) : state_(key) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Unbiased enough for desk scale; fixed algorithm keeps it portable.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Box-Muller, always consuming two words (no cached spare).
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0,n) via Floyd's algorithm; output sorted.
    std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k) {
        if (k > n) k = n;
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(static_cast<std::size_t>(k) * 2);
        std::vector<std::uint64_t> out;
        out.reserve(k);
        for (std::uint64_t i = n - k; i < n; ++i) {
            std::uint64_t j = below(i + 1);
            if (!seen.insert(j).second) {
                seen.insert(i);
                out.push_back(i);
            } else {
                out.push_back(j);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
}

// Key derivation: order-sensitive fold of arbitrary words.
inline std::uint64_t fold_key(std::uint64_t a) { return mix64(a + 0x9e3779b97f4a7c15ULL); }

template <typename... Rest>
std::uint64_t fold_key(std::uint64_t a, Rest... rest) {
    return mix64(fold_key(a) ^ (fold_key(rest...) + 0x9e3779b97f4a7c15ULL + (fold_key(a) << 6)));
}

// FNV-1a over a string, for stream keys derived from names.
inline std::uint64_t hash_str(const char* s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ULL;
    return h;
}

} // namespace ssvaerr
