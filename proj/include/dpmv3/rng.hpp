#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace dpmv3 {

/// Counter-based generator "splitmix64-ctr/v1".
///
/// Output i of stream (seed, stream) is splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15)
/// where key = splitmix64_mix(seed ^ splitmix64_mix(stream + 0xD1B54A32D192ED03)).
/// Uniforms take the top 53 bits; normals use Box-Muller with both outputs
/// consumed in order (cos branch first). The definition is fixed so that a seed
/// means the same draws in every implementation.
class CounterRng {
public:
    static constexpr const char* kName = "splitmix64-ctr/v1";

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    double normal();
    /// +1 or -1 with equal probability (one 64-bit draw per value).
    double rademacher();

    Eigen::ArrayXd normal_vector(Eigen::Index n);
    Eigen::ArrayXd rademacher_vector(Eigen::Index n);

    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace dpmv3
