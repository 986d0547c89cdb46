#include <doctest.h>

#include <Eigen/Dense>

#include "dpmv3/derivatives.hpp"
#include "dpmv3/errors.hpp"
#include "dpmv3/rng.hpp"
#include "testbed.hpp"

using namespace dpmv3;
using testbed::max_abs;
using testbed::vec;

namespace {

// Solves the k x k power system with Eigen's LU, component by component.
std::vector<Vec> lu_solve(const std::vector<double>& deltas, const std::vector<Vec>& diffs)
{
    const auto k = static_cast<Eigen::Index>(deltas.size());
    Eigen::MatrixXd m(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
            m(i, j) = std::pow(deltas[static_cast<std::size_t>(i)], static_cast<double>(j + 1));
    const Eigen::Index d = diffs.front().size();
    Eigen::MatrixXd rhs(k, d);
    for (Eigen::Index i = 0; i < k; ++i)
        rhs.row(i) = diffs[static_cast<std::size_t>(i)].matrix().transpose();
    const Eigen::MatrixXd sol = m.fullPivLu().solve(rhs);
    std::vector<Vec> out;
    for (Eigen::Index i = 0; i < k; ++i)
        out.push_back(sol.row(i).transpose().array());
    return out;
}

// Elementary symmetric polynomial e_r of the given values.
double elementary(const std::vector<double>& xs, int r)
{
    std::vector<double> e(static_cast<std::size_t>(r) + 1, 0.0);
    e[0] = 1.0;
    for (double x : xs)
        for (int j = r; j >= 1; --j)
            e[static_cast<std::size_t>(j)] += x * e[static_cast<std::size_t>(j - 1)];
    return e[static_cast<std::size_t>(r)];
}

// Explicit inverse of the power matrix: coefficient of delta^k in the Lagrange basis
// polynomial through {0, delta_1..delta_n} that is 1 at delta_p.
double inverse_entry(const std::vector<double>& deltas, int k, std::size_t p)
{
    const std::size_t n = deltas.size();
    std::vector<double> others{0.0};
    double denom = 1.0;
    for (std::size_t q = 0; q < n; ++q)
        if (q != p) {
            others.push_back(deltas[q]);
            denom *= deltas[p] - deltas[q];
        }
    denom *= deltas[p];
    const int r = static_cast<int>(n) - k;
    return ((r % 2) ? -1.0 : 1.0) * elementary(others, r) / denom;
}

} // namespace

TEST_CASE("estimate_derivatives examples")
{
    const auto one = estimate_derivatives({-0.5}, {vec({2.0, -1.0})});
    CHECK(max_abs(one[0] - vec({-4.0, 2.0})) < 1e-15);

    const auto two = estimate_derivatives({1.0, 2.0}, {vec({1.0}), vec({4.0})});
    CHECK(std::abs(two[0][0]) < 1e-14);
    CHECK(std::abs(two[1][0] - 1.0) < 1e-14);

    // g = g_s + c1 d + c2 d^2
    const double c1 = 0.75;
    const double c2 = -1.25;
    std::vector<double> ds{-0.3, -0.7};
    std::vector<Vec> diffs;
    for (double d : ds)
        diffs.push_back(vec({c1 * d + c2 * d * d}));
    const auto poly = estimate_derivatives(ds, diffs);
    CHECK(std::abs(poly[0][0] - c1) < 1e-10);
    CHECK(std::abs(poly[1][0] - c2) < 1e-10);
}

TEST_CASE("singular derivative systems")
{
    CHECK_THROWS_AS(estimate_derivatives({-0.5, -0.5}, {vec({1.0}), vec({2.0})}), SingularSystemError);
    CHECK_THROWS_AS(estimate_derivatives({0.0}, {vec({1.0})}), SingularSystemError);
    CHECK_THROWS_AS(estimate_derivatives_pseudo({-0.2, -0.2}, {vec({0.0}), vec({1.0}), vec({2.0})}),
                    SingularSystemError);
    CHECK_THROWS_AS(estimate_derivatives({-0.5}, {}), ArgumentError);
    CHECK(estimate_derivatives({}, {}).empty());
}

TEST_CASE("pseudo estimate")
{
    const Vec g0 = vec({0.3, -0.1});
    const Vec g1 = vec({1.0, 0.5});
    const auto p1 = estimate_derivatives_pseudo({-0.4}, {g0, g1});
    const auto f1 = estimate_derivatives({-0.4}, {Vec(g1 - g0)});
    CHECK(max_abs(p1[0] - f1[0]) < 1e-15);

    // The top coefficient always matches the full solve; lower ones match on data
    // whose degree does not exceed their own order.
    auto g = [](double d) { return vec({1.0 + 2.0 * d - 3.0 * d * d}); };
    const std::vector<double> ds{-0.3, -0.8};
    const auto p2 = estimate_derivatives_pseudo(ds, {g(0.0), g(ds[0]), g(ds[1])});
    const auto f2 = estimate_derivatives(ds, {Vec(g(ds[0]) - g(0.0)), Vec(g(ds[1]) - g(0.0))});
    CHECK(max_abs(p2[1] - f2[1]) < 1e-12);
    CHECK(max_abs(p2[1] + 3.0) < 1e-12);
    auto lin = [](double d) { return vec({1.0 + 2.0 * d}); };
    const auto pl = estimate_derivatives_pseudo(ds, {lin(0.0), lin(ds[0]), lin(ds[1])});
    const auto fl = estimate_derivatives(ds, {Vec(lin(ds[0]) - lin(0.0)), Vec(lin(ds[1]) - lin(0.0))});
    CHECK(max_abs(pl[0] - fl[0]) < 1e-12);
    CHECK(max_abs(pl[1] - fl[1]) < 1e-12);

    // Generic data, n = 3: the first derivative uses only the nearest point.
    const std::vector<double> d3{-0.2, -0.5, -0.9};
    const std::vector<Vec> v3{vec({0.1}), vec({0.7}), vec({-0.4}), vec({1.3})};
    const auto p3 = estimate_derivatives_pseudo(d3, v3);
    CHECK(p3[0][0] == doctest::Approx((0.7 - 0.1) / -0.2).epsilon(1e-14));
    const auto f3 = estimate_derivatives(d3, {Vec(v3[1] - v3[0]), Vec(v3[2] - v3[0]), Vec(v3[3] - v3[0])});
    CHECK(std::abs(p3[0][0] - f3[0][0]) > 1e-3);
}

TEST_CASE("elimination matches the explicit inverse of the power matrix")
{
    CounterRng rng(31);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + trial % 3;
        std::vector<double> ds;
        while (ds.size() < n) {
            const double d = -2.0 + 1.9 * rng.uniform();
            bool ok = true;
            for (double e : ds)
                ok = ok && std::abs(e - d) > 0.05;
            if (ok)
                ds.push_back(d);
        }
        std::vector<Vec> diffs;
        for (std::size_t i = 0; i < n; ++i)
            diffs.push_back(rng.normal_vector(2));
        const auto got = estimate_derivatives(ds, diffs);
        for (std::size_t k = 1; k <= n; ++k) {
            Vec expect = Vec::Zero(2);
            for (std::size_t p = 0; p < n; ++p)
                expect += inverse_entry(ds, static_cast<int>(k), p) * diffs[p];
            worst = std::max(worst, max_abs(got[k - 1] - expect));
        }
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("Neville recurrence equals truncated direct solves")
{
    CounterRng rng(37);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + trial % 3;
        std::vector<double> ds;
        while (ds.size() < n) {
            const double d = -2.0 + 1.9 * rng.uniform();
            bool ok = true;
            for (double e : ds)
                ok = ok && std::abs(e - d) > 0.05;
            if (ok)
                ds.push_back(d);
        }
        std::vector<Vec> values;
        for (std::size_t i = 0; i <= n; ++i)
            values.push_back(rng.normal_vector(3));
        const auto pseudo = estimate_derivatives_pseudo(ds, values);
        for (std::size_t k = 1; k <= n; ++k) {
            std::vector<double> dk(ds.begin(), ds.begin() + static_cast<std::ptrdiff_t>(k));
            std::vector<Vec> diffs;
            for (std::size_t i = 1; i <= k; ++i)
                diffs.push_back(values[i] - values[0]);
            worst = std::max(worst, max_abs(pseudo[k - 1] - lu_solve(dk, diffs).back()));
        }
    }
    CHECK(worst <= 1e-10);
}
