#pragma once

#include <cmath>
#include <cstdint>

namespace in2 {

// SplitMix64 used as a counter-based generator: output i of stream `seed` is
// mix(seed + (i+1)*golden). State is just (seed, counter), so streams can be
// derived, split, serialized and resumed exactly on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    // Independent child stream keyed by (label, index); used for per-epoch /
    // per-mask sub-seeds.
    Rng derive(std::uint64_t label, std::uint64_t index = 0) const {
        std::uint64_t s = mix(seed_ ^ mix(label + 0x9e3779b97f4a7c15ull * (index + 1)));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        counter_ += 1;
        return mix(seed_ + counter_ * 0x9e3779b97f4a7c15ull);
    }

    // Uniform in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {  // inclusive range
        return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Uniform in [0,1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; have_spare_ = false; }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace in2
