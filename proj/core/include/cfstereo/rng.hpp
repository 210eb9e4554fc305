#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cfstereo {

// splitmix64: cheap, well-mixed stream derivation (seed ^ index -> substream).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// mt19937_64 with hand-rolled uniform/normal transforms. The std::*_distribution
// classes are implementation-defined, so using them would make "same seed, same
// stream" fragile across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // lo..hi inclusive, via rejection-free modulo over a wide range (bias is
    // negligible for the small ranges used here, but do it right anyway).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t r;
        do { r = gen_(); } while (r >= limit);
        return lo + static_cast<int64_t>(r % span);
    }

    // Box-Muller, pair-cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        double two_pi_u2 = 2.0 * 3.14159265358979323846 * u2;
        spare_ = mag * std::sin(two_pi_u2);
        have_spare_ = true;
        return mag * std::cos(two_pi_u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cfstereo
