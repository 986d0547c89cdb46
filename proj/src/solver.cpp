#include "dpmv3/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpmv3/derivatives.hpp"
#include "dpmv3/errors.hpp"

namespace dpmv3 {

std::string to_string(Corrector c)
{
    switch (c) {
    case Corrector::None:
        return "none";
    case Corrector::Full:
        return "full";
    case Corrector::Half:
        return "half";
    }
    return "none";
}

Corrector corrector_from_string(const std::string& name)
{
    if (name == "none")
        return Corrector::None;
    if (name == "full")
        return Corrector::Full;
    if (name == "half")
        return Corrector::Half;
    throw ArgumentError("unknown corrector '" + name + "' (expected none, full or half)");
}

void SolverConfig::validate(int max_order) const
{
    if (order < 1 || order > max_order)
        throw ArgumentError("solver order must be in [1, " + std::to_string(max_order) + "]");
    if (grid.timesteps.size() < 2 || grid.lambdas.size() != grid.timesteps.size())
        throw ArgumentError("solver grid needs at least one step");
    for (std::size_t i = 0; i + 1 < grid.lambdas.size(); ++i)
        if (!(grid.lambdas[i + 1] > grid.lambdas[i]))
            throw ArgumentError("solver grid lambdas must be strictly increasing");
}

Vec g_value(const Coefficients& coeffs, const StepNode& anchor, const StepNode& at, const Vec& x, const Vec& eps)
{
    const auto gc = coeffs.g(anchor, at);
    return gc.a * x + gc.b * eps + gc.c;
}

Vec lupdate(const Coefficients& coeffs, const StepNode& s, const Vec& x_s, const Vec& g_s,
            const std::vector<HistoryPoint>& extras, const StepNode& t, bool pseudo)
{
    if (extras.size() > 3)
        throw ArgumentError("lupdate supports at most three extra points");
    if (t.lambda == s.lambda)
        return x_s;
    if (!(t.lambda > s.lambda))
        throw ArgumentError("lupdate target must lie after the anchor in lambda");

    std::vector<double> deltas;
    deltas.reserve(extras.size());
    for (const auto& e : extras)
        deltas.push_back(e.node.lambda - s.lambda);

    std::vector<Vec> derivs;
    if (!extras.empty()) {
        if (pseudo) {
            std::vector<Vec> values{g_s};
            for (const auto& e : extras)
                values.push_back(e.g);
            derivs = estimate_derivatives_pseudo(deltas, values);
        } else {
            std::vector<Vec> diffs;
            for (const auto& e : extras)
                diffs.push_back(e.g - g_s);
            derivs = estimate_derivatives(deltas, diffs);
        }
    }

    const Schedule& sched = coeffs.schedule();
    Vec sum = g_s * coeffs.ek(s, t, 0);
    double kf = 1.0;
    for (std::size_t k = 1; k <= derivs.size(); ++k) {
        kf *= static_cast<double>(k);
        sum += kf * derivs[k - 1] * coeffs.ek(s, t, static_cast<int>(k));
    }
    const double alpha_s = sched.alpha_of_lambda(s.lambda);
    const double alpha_t = sched.alpha_of_lambda(t.lambda);
    return alpha_t * coeffs.A(s, t) * (x_s / alpha_s - coeffs.int_eb(s, t) - sum);
}

namespace {

std::vector<StepNode> snap_grid(const Coefficients& coeffs, const TimeGrid& grid, TimeGrid& effective)
{
    const Schedule& sched = coeffs.schedule();
    std::vector<StepNode> nodes;
    nodes.reserve(grid.lambdas.size());
    effective = grid;
    for (std::size_t i = 0; i < grid.lambdas.size(); ++i) {
        const double lam = grid.lambdas[i];
        StepNode node = coeffs.snap(lam);
        if (std::abs(node.lambda - lam) <= 1e-12 * std::max(1.0, std::abs(lam))) {
            node.lambda = lam;
        } else {
            effective.lambdas[i] = node.lambda;
            effective.timesteps[i] = sched.t_of_lambda(node.lambda);
        }
        if (!nodes.empty() && !(node.lambda > nodes.back().lambda))
            throw ArgumentError("two sampling steps snap to the same EMS grid point; refine the EMS grid");
        nodes.push_back(node);
    }
    return nodes;
}

double nan()
{
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace

SampleResult multistep_sample(const EpsFn& eps, const Coefficients& coeffs, const SolverConfig& cfg, const Vec& x_init)
{
    cfg.validate(4);
    if (x_init.size() != coeffs.dim())
        throw ArgumentError("x_init dimension does not match the coefficients");
    if (cfg.corrector != Corrector::None && cfg.order < 2 && !cfg.pseudo_corrector)
        throw ArgumentError("a corrector needs order >= 2 (or a pseudo-order corrector)");

    SampleResult result;
    const auto nodes = snap_grid(coeffs, cfg.grid, result.grid);
    const Schedule& sched = coeffs.schedule();
    const std::size_t steps = nodes.size() - 1;

    std::vector<Vec> xs(nodes.size());
    std::vector<Vec> es(nodes.size());
    xs[0] = x_init;
    es[0] = eps(x_init, nodes[0].lambda);
    result.nfe = 1;
    result.trace.push_back({result.grid.timesteps[0], nodes[0].lambda, xs[0], std::sqrt(es[0].square().sum()),
                            std::sqrt(g_value(coeffs, nodes[0], nodes[0], xs[0], es[0]).square().sum())});

    auto g_rel = [&](std::size_t i, std::size_t anchor) { return g_value(coeffs, nodes[anchor], nodes[i], xs[i], es[i]); };

    for (std::size_t m = 1; m <= steps; ++m) {
        const std::size_t n_m = std::min<std::size_t>(static_cast<std::size_t>(cfg.order), m);
        const std::size_t a = m - 1;
        const Vec g_a = g_rel(a, a);
        std::vector<HistoryPoint> extras;
        for (std::size_t q = 1; q < n_m; ++q)
            extras.push_back({nodes[a - q], g_rel(a - q, a)});

        StepRecord rec;
        rec.m = m;
        rec.anchor = nodes[a];
        rec.node = nodes[m];
        rec.predictor_order = static_cast<int>(n_m);
        xs[m] = lupdate(coeffs, nodes[a], xs[a], g_a, extras, nodes[m], cfg.pseudo_predictor);
        rec.x_pred = xs[m];

        TraceEntry entry{result.grid.timesteps[m], nodes[m].lambda, xs[m], nan(), nan()};
        if (m == steps) {
            result.trace.push_back(entry);
            if (cfg.observer)
                cfg.observer(rec);
            break;
        }

        es[m] = eps(xs[m], nodes[m].lambda);
        ++result.nfe;
        rec.eps_pred = es[m];
        const Vec g_m = g_rel(m, a);

        const bool active = cfg.corrector == Corrector::Full ||
                            (cfg.corrector == Corrector::Half && result.grid.timesteps[m] / sched.t_max() <= 0.5);
        const std::size_t corr_order = cfg.pseudo_corrector ? n_m + 1 : n_m;
        if (active && corr_order >= 2) {
            std::vector<HistoryPoint> cextras{{nodes[m], g_m}};
            for (std::size_t q = 1; q + 1 < corr_order; ++q)
                cextras.push_back({nodes[a - q], g_rel(a - q, a)});
            const Vec x_c = lupdate(coeffs, nodes[a], xs[a], g_a, cextras, nodes[m], cfg.pseudo_corrector);
            const double sigma = sched.sigma_of_lambda(nodes[m].lambda);
            es[m] = es[m] + coeffs.l_at(nodes[m]) * (x_c - xs[m]) / sigma;
            xs[m] = x_c;
            rec.corrector_order = static_cast<int>(corr_order);
            rec.x_corr = xs[m];
            rec.eps_corr = es[m];
        }
        entry.x = xs[m];
        entry.eps_norm = std::sqrt(es[m].square().sum());
        entry.g_norm = std::sqrt(g_m.square().sum());
        result.trace.push_back(entry);
        if (cfg.observer)
            cfg.observer(rec);
    }
    result.x_final = xs[steps];
    return result;
}

SampleResult singlestep_sample(const EpsFn& eps, const Coefficients& coeffs, const SolverConfig& cfg, const Vec& x_init)
{
    cfg.validate(3);
    if (x_init.size() != coeffs.dim())
        throw ArgumentError("x_init dimension does not match the coefficients");

    SampleResult result;
    const auto nodes = snap_grid(coeffs, cfg.grid, result.grid);
    const std::size_t steps = nodes.size() - 1;

    std::vector<Vec> xs(nodes.size());
    std::vector<Vec> es(nodes.size());
    xs[0] = x_init;
    result.trace.push_back({result.grid.timesteps[0], nodes[0].lambda, xs[0], nan(), nan()});

    std::size_t i0 = 0;
    while (i0 < steps) {
        const std::size_t r = std::min<std::size_t>(static_cast<std::size_t>(cfg.order), steps - i0);
        es[i0] = eps(xs[i0], nodes[i0].lambda);
        ++result.nfe;
        result.trace[i0].eps_norm = std::sqrt(es[i0].square().sum());
        const Vec g_a = g_value(coeffs, nodes[i0], nodes[i0], xs[i0], es[i0]);
        result.trace[i0].g_norm = std::sqrt(g_a.square().sum());
        for (std::size_t i = 0; i < r; ++i) {
            std::vector<HistoryPoint> extras;
            for (std::size_t q = 1; q <= i; ++q)
                extras.push_back({nodes[i0 + q], g_value(coeffs, nodes[i0], nodes[i0 + q], xs[i0 + q], es[i0 + q])});
            const std::size_t target = i0 + i + 1;
            xs[target] = lupdate(coeffs, nodes[i0], xs[i0], g_a, extras, nodes[target], false);
            TraceEntry entry{result.grid.timesteps[target], nodes[target].lambda, xs[target], nan(), nan()};
            if (i + 1 < r) {
                es[target] = eps(xs[target], nodes[target].lambda);
                ++result.nfe;
                entry.eps_norm = std::sqrt(es[target].square().sum());
                entry.g_norm =
                    std::sqrt(g_value(coeffs, nodes[i0], nodes[target], xs[target], es[target]).square().sum());
            }
            result.trace.push_back(entry);
            if (cfg.observer) {
                StepRecord rec;
                rec.m = target;
                rec.anchor = nodes[i0];
                rec.node = nodes[target];
                rec.predictor_order = static_cast<int>(i + 1);
                rec.x_pred = xs[target];
                rec.eps_pred = es[target];
                cfg.observer(rec);
            }
        }
        i0 += r;
    }
    result.x_final = xs[steps];
    return result;
}

Vec ddim_step(const Schedule& sched, const Vec& x_s, const Vec& eps_s, double t_s, double t_t)
{
    if (t_t == t_s)
        return x_s;
    if (!(t_t < t_s))
        throw ArgumentError("ddim_step runs backward in time (t_t < t_s)");
    const double alpha_s = sched.alpha(t_s);
    const double sigma_s = sched.sigma(t_s);
    const double alpha_t = sched.alpha(t_t);
    const double sigma_t = sched.sigma(t_t);
    return (alpha_t / alpha_s) * x_s - alpha_t * (sigma_s / alpha_s - sigma_t / alpha_t) * eps_s;
}

} // namespace dpmv3
