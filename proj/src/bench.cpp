#include "dpmv3/bench.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <map>

#include "dpmv3/errors.hpp"
#include "dpmv3/reference.hpp"

namespace dpmv3 {

Vec initial_state(const Schedule& sched, Eigen::Index dim, double t_start, std::uint64_t noise_seed)
{
    CounterRng rng(noise_seed, 0);
    return sched.sigma(t_start) * rng.normal_vector(dim);
}

Vec ddim_sample(const EpsFn& eps, const Schedule& sched, const TimeGrid& grid, const Vec& x_init)
{
    Vec x = x_init;
    for (std::size_t m = 0; m + 1 < grid.timesteps.size(); ++m)
        x = ddim_step(sched, x, eps(x, grid.lambdas[m]), grid.timesteps[m], grid.timesteps[m + 1]);
    return x;
}

namespace {

struct Cell {
    std::string solver;
    int order = 0;
    std::string corrector;
    std::size_t nfe = 0;
    std::uint64_t seed = 0;
};

// Runs body(i) for every cell in parallel; rethrows the first failure.
template <class F>
void parallel_cells(std::size_t n, F&& body)
{
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(dpmv3_bench_failure)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
}

double h_max_of(const TimeGrid& grid)
{
    double h = 0.0;
    for (std::size_t i = 0; i + 1 < grid.lambdas.size(); ++i)
        h = std::max(h, grid.lambdas[i + 1] - grid.lambdas[i]);
    return h;
}

// Reference end states keyed by (seed, final lambda of the effective grid).
class References {
public:
    explicit References(const BenchSetup& setup) : setup_(setup) {}

    void prepare(const std::vector<std::pair<std::uint64_t, double>>& keys)
    {
        std::vector<std::pair<std::uint64_t, double>> missing;
        for (const auto& k : keys)
            if (!values_.count(k)) {
                values_[k] = Vec();
                missing.push_back(k);
            }
        const double lam_start = setup_.schedule.lambda_of_t(setup_.t_start);
        std::vector<Vec> out(missing.size());
        parallel_cells(missing.size(), [&](std::size_t i) {
            const Vec x0 = initial_state(setup_.schedule, setup_.model->dim(), setup_.t_start, missing[i].first);
            out[i] = reference_solve(*setup_.model, setup_.schedule, x0, lam_start, missing[i].second, setup_.reference_tol);
        });
        for (std::size_t i = 0; i < missing.size(); ++i)
            values_[missing[i]] = out[i];
    }

    const Vec& at(std::uint64_t seed, double lam_end) const { return values_.at({seed, lam_end}); }

private:
    const BenchSetup& setup_;
    std::map<std::pair<std::uint64_t, double>, Vec> values_;
};

void check_setup(const BenchSetup& s)
{
    if (!s.model)
        throw ArgumentError("benchmark needs a model");
    if (s.nfes.empty() || s.seeds.empty())
        throw ArgumentError("benchmark needs at least one NFE and one seed");
    for (auto n : s.nfes)
        if (n < 1)
            throw ArgumentError("NFE values must be >= 1");
}

ReportRow measure(const Cell& cell, const Vec& x, const Vec& ref, double h_max, double seconds)
{
    const Vec diff = x - ref;
    return {cell.solver,       cell.order, cell.corrector, cell.nfe, h_max, std::sqrt(diff.square().sum()),
            diff.abs().maxCoeff(), seconds, static_cast<std::int64_t>(cell.seed)};
}

// Effective (snapped) grid of a coefficient provider, without running the solver.
TimeGrid effective_grid(const Coefficients& coeffs, const TimeGrid& grid)
{
    TimeGrid out = grid;
    for (std::size_t i = 0; i < grid.lambdas.size(); ++i) {
        const StepNode node = coeffs.snap(grid.lambdas[i]);
        if (std::abs(node.lambda - grid.lambdas[i]) > 1e-12 * std::max(1.0, std::abs(grid.lambdas[i]))) {
            out.lambdas[i] = node.lambda;
            out.timesteps[i] = coeffs.schedule().t_of_lambda(node.lambda);
        }
    }
    return out;
}

using Clock = std::chrono::steady_clock;

} // namespace

RunReport bench_convergence(const ConvergenceOptions& opts)
{
    const auto& setup = opts.setup;
    check_setup(setup);
    if (!setup.ems)
        throw ArgumentError("bench_convergence needs an EMS table");
    if (opts.orders.empty())
        throw ArgumentError("bench_convergence needs at least one order");
    const auto coeffs = make_coefficients(setup.ems);
    const EpsFn eps = make_eps_fn(*setup.model, setup.schedule);

    std::vector<Cell> cells;
    std::map<std::size_t, TimeGrid> grids;
    std::vector<std::pair<std::uint64_t, double>> ref_keys;
    for (auto nfe : setup.nfes) {
        grids[nfe] = effective_grid(*coeffs, make_time_grid(setup.schedule, nfe, setup.grid, setup.t_start, setup.t_end));
        for (auto seed : setup.seeds)
            ref_keys.emplace_back(seed, grids[nfe].lambdas.back());
    }
    for (int order : opts.orders)
        for (auto nfe : setup.nfes)
            for (auto seed : setup.seeds)
                cells.push_back({"dpmv3", order, to_string(opts.corrector), nfe, seed});

    References refs(setup);
    refs.prepare(ref_keys);

    RunReport report;
    report.rows.resize(cells.size());
    parallel_cells(cells.size(), [&](std::size_t i) {
        const Cell& c = cells[i];
        SolverConfig cfg;
        cfg.order = c.order;
        cfg.corrector = opts.corrector;
        cfg.pseudo_predictor = opts.pseudo_predictor;
        cfg.pseudo_corrector = opts.pseudo_corrector;
        cfg.grid = grids.at(c.nfe);
        const Vec x0 = initial_state(setup.schedule, setup.model->dim(), setup.t_start, c.seed);
        const auto start = Clock::now();
        const auto res = multistep_sample(eps, *coeffs, cfg, x0);
        const double secs = setup.timing ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
        if (res.nfe != c.nfe)
            throw std::logic_error("NFE accounting mismatch");
        report.rows[i] = measure(c, res.x_final, refs.at(c.seed, res.grid.lambdas.back()), h_max_of(res.grid), secs);
    });

    for (int order : opts.orders) {
        std::vector<ReportRow> subset;
        double worst = 0.0;
        for (const auto& r : report.rows)
            if (r.order == order) {
                subset.push_back(r);
                worst = std::max(worst, r.l2_error);
            }
        ReportRow summary{"slope", order, to_string(opts.corrector), 0, 0.0, 0.0, 0.0, 0.0, -1};
        if (worst <= kErrorFloor) {
            summary.solver = "floor";
            summary.l2_error = worst;
        } else {
            // Average over seeds per NFE before fitting.
            std::vector<ReportRow> means;
            for (auto nfe : setup.nfes) {
                ReportRow m{"", order, "", nfe, 0.0, 0.0, 0.0, 0.0, -1};
                for (const auto& r : subset)
                    if (r.nfe == nfe) {
                        m.h_max = r.h_max;
                        m.l2_error += r.l2_error / static_cast<double>(setup.seeds.size());
                    }
                means.push_back(m);
            }
            summary.l2_error = means.size() >= 3 ? measure_order(means) : std::nan("");
        }
        report.rows.push_back(summary);
    }
    report.sort();
    return report;
}

RunReport bench_compare(const CompareOptions& opts)
{
    const auto& setup = opts.setup;
    check_setup(setup);
    if (!setup.ems)
        throw ArgumentError("bench_compare needs an estimated EMS table");
    const EpsFn eps = make_eps_fn(*setup.model, setup.schedule);
    const double lam_lo = setup.ems->lambda_grid.front();
    const double lam_hi = setup.ems->lambda_grid.back();

    std::map<std::string, std::unique_ptr<Coefficients>> coeffs;
    coeffs["dpmv3"] = make_coefficients(setup.ems);
    for (const auto& b : opts.baselines) {
        if (b == "ddim")
            continue;
        const auto kind = degenerate_kind_from_string(b);
        coeffs[b] = make_coefficients(std::make_shared<const EmsTable>(
            degenerate_table(kind, setup.schedule, 1, lam_lo, lam_hi, setup.model->dim())));
    }

    std::vector<std::string> solvers{"dpmv3"};
    for (const auto& b : opts.baselines)
        solvers.push_back(b);

    // Every solver runs on the grid snapped to the estimated EMS table so all share one reference.
    std::map<std::size_t, TimeGrid> grids;
    std::vector<std::pair<std::uint64_t, double>> ref_keys;
    for (auto nfe : setup.nfes) {
        grids[nfe] = effective_grid(*coeffs.at("dpmv3"),
                                    make_time_grid(setup.schedule, nfe, setup.grid, setup.t_start, setup.t_end));
        for (auto seed : setup.seeds)
            ref_keys.emplace_back(seed, grids[nfe].lambdas.back());
    }
    References refs(setup);
    refs.prepare(ref_keys);

    std::vector<Cell> cells;
    for (const auto& s : solvers)
        for (auto nfe : setup.nfes)
            for (auto seed : setup.seeds) {
                const bool ddim = s == "ddim";
                cells.push_back({s, ddim ? 1 : opts.order, ddim ? "none" : to_string(s == "dpmv3" ? opts.corrector : Corrector::None),
                                 nfe, seed});
            }

    RunReport report;
    report.rows.resize(cells.size());
    parallel_cells(cells.size(), [&](std::size_t i) {
        const Cell& c = cells[i];
        const TimeGrid& grid = grids.at(c.nfe);
        const Vec x0 = initial_state(setup.schedule, setup.model->dim(), setup.t_start, c.seed);
        const auto start = Clock::now();
        Vec x;
        if (c.solver == "ddim") {
            x = ddim_sample(eps, setup.schedule, grid, x0);
        } else {
            SolverConfig cfg;
            cfg.order = c.order;
            cfg.grid = grid;
            if (c.solver == "dpmv3") {
                cfg.corrector = opts.corrector;
                cfg.pseudo_predictor = opts.pseudo_predictor;
                cfg.pseudo_corrector = opts.pseudo_corrector;
            }
            x = multistep_sample(eps, *coeffs.at(c.solver), cfg, x0).x_final;
        }
        const double secs = setup.timing ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
        report.rows[i] = measure(c, x, refs.at(c.seed, grid.lambdas.back()), h_max_of(grid), secs);
    });

    const std::size_t per_cell = report.rows.size();
    for (const auto& s : solvers)
        for (auto nfe : setup.nfes) {
            ReportRow mean{};
            double n = 0.0;
            for (std::size_t i = 0; i < per_cell; ++i) {
                const auto& r = report.rows[i];
                if (r.solver != s || r.nfe != nfe)
                    continue;
                if (n == 0.0)
                    mean = r;
                else {
                    mean.l2_error += r.l2_error;
                    mean.linf_error += r.linf_error;
                    mean.seconds += r.seconds;
                }
                n += 1.0;
            }
            mean.l2_error /= n;
            mean.linf_error /= n;
            mean.seconds /= n;
            mean.seed = -1;
            report.rows.push_back(mean);
        }
    report.sort();
    return report;
}

} // namespace dpmv3
