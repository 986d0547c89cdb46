#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "dpmv3/errors.hpp"
#include "dpmv3/reference.hpp"
#include "testbed.hpp"

using namespace dpmv3;
using testbed::max_abs;
using testbed::vec;

namespace {

// Finite-difference gradient of the analytic log-density.
Vec grad_log_density(const ModelSpec& m, const Schedule& s, const Vec& x, double lam)
{
    const double h = 1e-5;
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x;
        Vec xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (log_density(m, s, xp, lam) - log_density(m, s, xm, lam)) / (2.0 * h);
    }
    return g;
}

} // namespace

TEST_CASE("point-gaussian eps recovers the injected noise")
{
    const auto s = Schedule::vp_linear();
    const auto m = testbed::point(Vec::Zero(3));
    const Vec z = vec({0.3, -1.2, 2.0});
    const double lam = 0.4;
    CHECK(max_abs(eval_eps(m, s, s.sigma_of_lambda(lam) * z, lam) - z) < 1e-14);
}

TEST_CASE("degenerate one-component mixture equals point-gaussian")
{
    const auto s = Schedule::vp_linear();
    const Vec x0 = vec({0.5, -0.25});
    GaussianMixture g{{1.0}, {x0}, {0.0}};
    const ModelSpec mix(g);
    const auto pt = testbed::point(x0);
    const Vec x = vec({0.1, 0.7});
    for (double lam : {-2.0, 0.0, 2.0})
        CHECK(max_abs(eval_eps(mix, s, x, lam) - eval_eps(pt, s, x, lam)) < 1e-12);
}

TEST_CASE("symmetric mixture has zero eps at the midpoint")
{
    GaussianMixture g{{0.5, 0.5}, {vec({-1.0}), vec({1.0})}, {0.0, 0.0}};
    const ModelSpec m(g);
    CHECK(std::abs(eval_eps(m, Schedule::vp_linear(), vec({0.0}), 0.3)[0]) < 1e-15);
}

TEST_CASE("dimension mismatch is an argument error")
{
    const auto m = testbed::mixture();
    CHECK_THROWS_AS(eval_eps(m, Schedule::vp_linear(), Vec::Zero(3), 0.0), ArgumentError);
    CHECK_THROWS_AS(eval_jvp(m, Schedule::vp_linear(), Vec::Zero(4), 0.0, Vec::Zero(2)), ArgumentError);
}

TEST_CASE("invalid mixtures are rejected")
{
    CHECK_THROWS_AS(ModelSpec(GaussianMixture{{0.5, 0.6}, {vec({0.0}), vec({1.0})}, {1.0, 1.0}}), ArgumentError);
    CHECK_THROWS_AS(ModelSpec(GaussianMixture{{0.5, 0.5}, {vec({0.0}), vec({1.0, 2.0})}, {1.0, 1.0}}), ArgumentError);
    CHECK_THROWS_AS(ModelSpec(GaussianMixture{{1.0}, {vec({0.0})}, {-1.0}}), ArgumentError);
}

TEST_CASE("jvp examples")
{
    const auto s = Schedule::vp_linear();
    const auto pt = testbed::point(vec({1.0, 2.0}));
    const Vec v = vec({0.5, -3.0});
    const double lam = -0.8;
    CHECK(max_abs(eval_jvp(pt, s, vec({0.2, 0.1}), lam, v) - v / s.sigma_of_lambda(lam)) < 1e-14);

    const auto m = testbed::mixture();
    CounterRng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Vec x = 1.5 * rng.normal_vector(4);
        const Vec dir = rng.normal_vector(4);
        const double l = -3.0 + 6.0 * rng.uniform();
        const double h = 1e-5;
        const Vec fd = (eval_eps(m, s, x + h * dir, l) - eval_eps(m, s, x - h * dir, l)) / (2.0 * h);
        const Vec jv = eval_jvp(m, s, x, l, dir);
        CHECK(max_abs(jv - fd) <= 1e-5 * std::max(1.0, max_abs(jv)));
        CHECK(max_abs(eval_jvp(m, s, x, l, Vec::Zero(4))) == 0.0);
    }
}

TEST_CASE("jvp is linear in v")
{
    const auto s = Schedule::vp_linear();
    const auto m = testbed::mixture();
    CounterRng rng(11);
    for (int i = 0; i < 100; ++i) {
        const Vec x = 2.0 * rng.normal_vector(4);
        const Vec v = rng.normal_vector(4);
        const Vec w = rng.normal_vector(4);
        const double a = rng.normal();
        const double b = rng.normal();
        const double lam = -4.0 + 8.0 * rng.uniform();
        const Vec lhs = eval_jvp(m, s, x, lam, a * v + b * w);
        const Vec rhs = a * eval_jvp(m, s, x, lam, v) + b * eval_jvp(m, s, x, lam, w);
        REQUIRE(max_abs(lhs - rhs) < 1e-9);
    }
}

TEST_CASE("mixture eps matches -sigma grad log q")
{
    const auto s = Schedule::vp_linear();
    const auto m = testbed::mixture();
    CounterRng rng(17);
    for (int i = 0; i < 100; ++i) {
        const double lam = -3.0 + 6.0 * rng.uniform();
        const Vec x = s.alpha_of_lambda(lam) * rng.normal_vector(4) + s.sigma_of_lambda(lam) * rng.normal_vector(4);
        const Vec eps = eval_eps(m, s, x, lam);
        const Vec oracle = -s.sigma_of_lambda(lam) * grad_log_density(m, s, x, lam);
        REQUIRE(max_abs(eps - oracle) <= 1e-5 * std::max(1.0, max_abs(eps)));
    }
}

TEST_CASE("eps_dlambda examples")
{
    const auto vp = Schedule::vp_linear();
    const auto pt0 = testbed::point(Vec::Zero(2));
    const Vec x = vec({0.4, -1.1});
    for (double lam : {-2.0, 0.0, 1.5}) {
        // x d(1/sigma)/dlam = -x sigma'/sigma^2, sigma'/sigma = dlog alpha/dlam - 1.
        const double sg = vp.sigma_of_lambda(lam);
        const Vec expect = -x * (vp.dlog_alpha_dlambda(lam) - 1.0) / sg;
        CHECK(max_abs(eval_eps_dlambda(pt0, vp, x, lam) - expect) < 1e-12);
        const double h = 1e-4;
        const Vec fd = (eval_eps(pt0, vp, x, lam + h) - eval_eps(pt0, vp, x, lam - h)) / (2.0 * h);
        CHECK(max_abs(eval_eps_dlambda(pt0, vp, x, lam) - fd) < 1e-6);
    }
    const auto edm = Schedule::edm();
    CHECK(max_abs(eval_eps_dlambda(pt0, edm, x, 0.5) - eval_eps(pt0, edm, x, 0.5)) < 1e-12);

    // Far in the tail of the nearest component the mixture behaves like a point mass
    // at alpha * mu scaled by that component's variance; with std 0 it is exact.
    GaussianMixture g{{0.5, 0.5}, {vec({-3.0, 0.0}), vec({3.0, 0.0})}, {0.0, 0.0}};
    const ModelSpec mix(g);
    const auto near = testbed::point(vec({3.0, 0.0}));
    const Vec far = vec({40.0, 1.0});
    for (double lam : {-0.5, 0.5})
        CHECK(max_abs(eval_eps_dlambda(mix, vp, far, lam) - eval_eps_dlambda(near, vp, far, lam)) < 1e-4);
}

TEST_CASE("guided with scale 1 equals cond")
{
    const auto s = Schedule::vp_linear();
    auto cond = std::make_shared<const ModelSpec>(testbed::mixture());
    auto uncond = std::make_shared<const ModelSpec>(testbed::point(Vec::Zero(4)));
    const ModelSpec guided(Guided{cond, uncond, 1.0});
    const Vec x = vec({0.3, 0.2, -0.1, 0.9});
    CHECK(max_abs(eval_eps(guided, s, x, 0.2) - eval_eps(*cond, s, x, 0.2)) == 0.0);
    const ModelSpec g2(Guided{cond, uncond, 2.5});
    const Vec expect = 2.5 * eval_eps(*cond, s, x, 0.2) - 1.5 * eval_eps(*uncond, s, x, 0.2);
    CHECK(max_abs(eval_eps(g2, s, x, 0.2) - expect) < 1e-12);
}

TEST_CASE("sample_data")
{
    CounterRng rng(1);
    const auto pts = sample_data(testbed::point(vec({1.0, 2.0})), rng, 3);
    REQUIRE(pts.size() == 3);
    for (const auto& p : pts)
        CHECK(max_abs(p - vec({1.0, 2.0})) == 0.0);

    const auto m = testbed::mixture();
    CounterRng r2(2);
    const auto xs = sample_data(m, r2, 10000);
    Vec mean = Vec::Zero(4);
    for (const auto& x : xs)
        mean += x;
    mean /= 10000.0;
    const Vec expect = 0.3 * vec({1.0, -0.5, 0.8, 0.2}) + 0.7 * vec({-1.0, 0.6, -0.4, -0.3});
    Vec var = Vec::Zero(4);
    for (const auto& x : xs)
        var += (x - mean).square();
    var /= 10000.0;
    CHECK(((mean - expect).abs() <= 4.0 * var.sqrt() / 100.0).all());

    CounterRng r3(2);
    const auto again = sample_data(m, r3, 10000);
    for (std::size_t i = 0; i < xs.size(); ++i)
        REQUIRE((xs[i] == again[i]).all());
}

TEST_CASE("forward_diffuse")
{
    const auto s = Schedule::vp_linear();
    CounterRng rng(3);
    const Vec x0 = vec({1.0, -1.0});
    CHECK(max_abs(forward_diffuse(s, x0, 30.0, rng) - x0) < 1e-12);

    const double lam = -0.5;
    const double sg = s.sigma_of_lambda(lam);
    Vec acc = Vec::Zero(3);
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        acc += forward_diffuse(s, Vec::Zero(3), lam, rng).square();
    acc /= n;
    CHECK(((acc / (sg * sg) - 1.0).abs() < 0.05).all());

    CounterRng a(8);
    CounterRng b(8);
    CHECK((forward_diffuse(s, x0, 0.1, a) == forward_diffuse(s, x0, 0.1, b)).all());
}

TEST_CASE("reference_solve on point-gaussian follows the closed-form trajectory")
{
    for (const auto& s : {Schedule::vp_linear(), Schedule::edm()}) {
        const Vec x0 = vec({0.7, -0.2, 1.3});
        const auto m = testbed::point(x0);
        const double lam_s = s.kind() == ScheduleKind::Edm ? -4.0 : -3.0;
        const double lam_t = 2.5;
        const Vec xs = vec({2.0, -1.0, 0.5});
        const Vec c = (xs - s.alpha_of_lambda(lam_s) * x0) / s.sigma_of_lambda(lam_s);
        const Vec exact = s.alpha_of_lambda(lam_t) * x0 + s.sigma_of_lambda(lam_t) * c;

        const Vec got = reference_solve(m, s, xs, lam_s, lam_t, 1e-10);
        CHECK(max_abs(got - exact) <= 10.0 * 1e-10 * std::max(1.0, max_abs(exact)));
        const Vec drift = (got - s.alpha_of_lambda(lam_t) * x0) / s.sigma_of_lambda(lam_t) - c;
        CHECK(max_abs(drift) < 1e-9);

        const double e_loose = max_abs(reference_solve(m, s, xs, lam_s, lam_t, 1e-6) - exact);
        const double e_tight = max_abs(reference_solve(m, s, xs, lam_s, lam_t, 5e-7) - exact);
        CHECK(e_tight < e_loose);
    }
}

TEST_CASE("reference_solve edge cases")
{
    const auto s = Schedule::vp_linear();
    const auto m = testbed::mixture();
    const Vec x = vec({0.1, 0.2, 0.3, 0.4});
    CHECK((reference_solve(m, s, x, 0.5, 0.5, 1e-10) == x).all());
    CHECK_THROWS_AS(reference_solve(m, s, x, 0.5, 0.4, 1e-10), ArgumentError);
    CHECK_THROWS_AS(reference_solve(m, s, x, 0.0, 1.0, 0.0), ArgumentError);
}

TEST_CASE("model json round trip")
{
    auto cond = std::make_shared<const ModelSpec>(testbed::mixture());
    auto uncond = std::make_shared<const ModelSpec>(testbed::point(vec({0.0, 1.0, 2.0, 3.0})));
    const ModelSpec g(Guided{cond, uncond, 1.7});
    nlohmann::json j;
    to_json(j, g);
    const ModelSpec back = model_from_json(j);
    nlohmann::json j2;
    to_json(j2, back);
    CHECK(j == j2);
    CHECK(back.kind_name() == "guided");
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"kind", "point-gaussian"}}), ParseError);
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"kind", "what"}}), ParseError);
}
