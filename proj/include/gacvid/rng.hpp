#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace gacvid {

// Deterministic random source. All sampling goes through explicit
// transforms of mt19937_64 output so sequences do not depend on the
// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
    std::uint64_t uniform_int(std::uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    // Standard normal via Box-Muller, spare value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent child stream from the construction seed. Gives
    // every module its own reproducible sequence regardless of call order
    // elsewhere.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t h = seed_ ^ (0x9e3779b97f4a7c15ull + stream);
        h ^= h >> 30;
        h *= 0xbf58476d1ce4e5b9ull;
        h ^= h >> 27;
        h *= 0x94d049bb133111ebull;
        h ^= h >> 31;
        return Rng(h);
    }

    std::uint64_t seed() const { return seed_; }

    // mt19937_64 state round-trips as text; used by checkpoint rng.json.
    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        have_spare_ = false;
    }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a over a string, for deriving per-name parameter seeds.
inline std::uint64_t hash_name(const std::string& name, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace gacvid
