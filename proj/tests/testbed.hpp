#pragma once

#include <cmath>
#include <memory>

#include "dpmv3/model.hpp"

namespace testbed {

using dpmv3::Vec;

inline Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs)
        v[i++] = x;
    return v;
}

/// Two-component mixture in D = 4 used across the solver tests.
inline dpmv3::ModelSpec mixture()
{
    dpmv3::GaussianMixture m;
    m.weights = {0.3, 0.7};
    m.means = {vec({1.0, -0.5, 0.8, 0.2}), vec({-1.0, 0.6, -0.4, -0.3})};
    m.stds = {0.4, 0.6};
    return dpmv3::ModelSpec(m);
}

inline dpmv3::ModelSpec point(Vec x0)
{
    return dpmv3::ModelSpec(dpmv3::PointGaussian{std::move(x0)});
}

inline double max_abs(const Vec& v)
{
    return v.size() == 0 ? 0.0 : v.abs().maxCoeff();
}

inline double norm(const Vec& v)
{
    return std::sqrt(v.square().sum());
}

} // namespace testbed
