#include "dpmv3/rng.hpp"

#include <cmath>
#include <numbers>

namespace dpmv3 {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t CounterRng::mix(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(seed ^ mix(stream + 0xD1B54A32D192ED03ULL)))
{
}

std::uint64_t CounterRng::next_u64()
{
    ++counter_;
    return mix(key_ + counter_ * kGamma);
}

double CounterRng::uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double CounterRng::rademacher()
{
    return (next_u64() >> 63) != 0 ? 1.0 : -1.0;
}

Eigen::ArrayXd CounterRng::normal_vector(Eigen::Index n)
{
    Eigen::ArrayXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = normal();
    return v;
}

Eigen::ArrayXd CounterRng::rademacher_vector(Eigen::Index n)
{
    Eigen::ArrayXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = rademacher();
    return v;
}

} // namespace dpmv3
