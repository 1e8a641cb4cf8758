#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace greenmatch {

/// Deterministic Gaussian stream: mt19937_64 + Box-Muller. We avoid
/// std::normal_distribution so draws are identical across standard libraries.
class GaussianSampler {
  public:
    explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

    double uniform01() {
        // (0, 1]: never returns 0, safe under log().
        return (static_cast<double>(engine_()) + 1.0) * 0x1p-64;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace greenmatch
