#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "brt/geometry.hpp"

namespace brt {

/** Deterministic random stream. The raw engine output is mapped to doubles
 *  with explicit bit arithmetic and normals come from Box-Muller, so a seed
 *  reproduces the exact same sequence everywhere the library runs. */
class rng {
  public:
    explicit rng(std::uint64_t seed) : gen_(seed) {}

    /** Uniform in [0, 1) with the top 53 bits of the engine. */
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /** Standard normal deviate, one Box-Muller pair per two calls. */
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u = 1.0 - uniform();  // (0, 1], keeps the log finite
        const double r = std::sqrt(-2.0 * std::log(u));
        const double t = two_pi * uniform();
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace brt
