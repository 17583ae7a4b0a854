#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

namespace lptr {

/// splitmix64 step; the workhorse behind every random draw in the project.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from (base, index). Used to give every
/// sample / worker its own seed so generation stays order-independent.
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
    uint64_t s = base ^ (0x9e3779b97f4a7c15ULL + index * 0xd1b54a32d192ed03ULL);
    splitmix64(s);
    return splitmix64(s);
}

/// Deterministic RNG with a platform-independent output sequence.
/// std:: distributions are implementation-defined, so all draws are
/// implemented explicitly here.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        // multiply-shift; tiny modulo bias is irrelevant for n << 2^64
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    int range(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi_inclusive - lo + 1)));
    }

    /// Standard normal via Box-Muller.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // avoid log(0)
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    /// Fisher-Yates shuffle with explicit draws (stable across platforms).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string serialize() const {
        uint64_t spare_bits;
        static_assert(sizeof(spare_bits) == sizeof(spare_));
        std::memcpy(&spare_bits, &spare_, 8);
        return std::to_string(state_) + " " + (has_spare_ ? "1" : "0") + " " +
               std::to_string(spare_bits);
    }

    static Rng deserialize(const std::string& text) {
        Rng rng;
        uint64_t spare_bits = 0;
        int has_spare = 0;
        std::sscanf(text.c_str(), "%llu %d %llu",
                    reinterpret_cast<unsigned long long*>(&rng.state_), &has_spare,
                    reinterpret_cast<unsigned long long*>(&spare_bits));
        rng.has_spare_ = has_spare != 0;
        std::memcpy(&rng.spare_, &spare_bits, 8);
        return rng;
    }

private:
    uint64_t state_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lptr
