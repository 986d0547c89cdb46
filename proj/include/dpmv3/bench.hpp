#pragma once

#include <memory>
#include <vector>

#include "dpmv3/ems.hpp"
#include "dpmv3/report.hpp"
#include "dpmv3/solver.hpp"

namespace dpmv3 {

/// x_T = alpha_T * 0 + sigma_T * z with z drawn from stream 0 of the noise seed.
Vec initial_state(const Schedule& sched, Eigen::Index dim, double t_start, std::uint64_t noise_seed);

struct BenchSetup {
    std::shared_ptr<const ModelSpec> model;
    std::shared_ptr<const EmsTable> ems;
    Schedule schedule = Schedule::vp_linear();
    GridKind grid = GridKind::UniformLambda;
    double t_start = 1.0;
    double t_end = 1e-3;
    std::vector<std::size_t> nfes;
    std::vector<std::uint64_t> seeds;
    double reference_tol = 1e-10;
    bool timing = false;
};

struct ConvergenceOptions {
    BenchSetup setup;
    std::vector<int> orders{1, 2, 3};
    Corrector corrector = Corrector::None;
    bool pseudo_predictor = false;
    bool pseudo_corrector = false;
};

/// Rows per (order, nfe, seed) plus one "slope" row per order (l2_error holds the fitted
/// slope), or a "floor" row when every error is at the quadrature floor (l2_error holds the max error).
RunReport bench_convergence(const ConvergenceOptions& opts);

inline constexpr double kErrorFloor = 1e-8;

struct CompareOptions {
    BenchSetup setup;
    int order = 3;
    Corrector corrector = Corrector::None;
    bool pseudo_predictor = false;
    bool pseudo_corrector = false;
    std::vector<std::string> baselines{"noise-pred", "data-pred", "ddim"};
};

/// Rows per (solver, nfe, seed) for "dpmv3" and each baseline plus per-(solver, nfe) mean rows with seed -1.
RunReport bench_compare(const CompareOptions& opts);

/// DDIM sampling over a grid; M model calls.
Vec ddim_sample(const EpsFn& eps, const Schedule& sched, const TimeGrid& grid, const Vec& x_init);

} // namespace dpmv3
