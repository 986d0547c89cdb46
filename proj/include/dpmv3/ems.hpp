#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dpmv3/model.hpp"
#include "dpmv3/rng.hpp"
#include "dpmv3/schedule.hpp"

namespace dpmv3 {

using Rows = Eigen::ArrayXXd; // one row per grid point, one column per dimension

enum class Execution { Serial, Parallel };

struct EmsConfig {
    std::size_t num_intervals = 120; // N
    std::size_t num_datapoints = 1024; // K
    std::size_t probes_per_point = 1;
    std::uint64_t seed = 0;
    double lam_min = 0.0;
    double lam_max = 0.0;
    /// Variance floor of the least-squares fit: floor_rel * mean(f*f) + floor_abs.
    double floor_rel = 1e-8;
    double floor_abs = 1e-20;
    Execution execution = Execution::Parallel;

    void validate() const;
};

struct EmsMeta {
    std::size_t num_datapoints = 0;
    std::uint64_t seed = 0;
    std::string model;
};

/// Coefficients l, s, b and dl/dlam on a uniform logSNR grid.
struct EmsTable {
    std::vector<double> lambda_grid;
    Rows l;
    Rows s;
    Rows b;
    Rows l_dot;
    Schedule schedule = Schedule::vp_linear();
    EmsMeta meta;

    std::size_t size() const { return lambda_grid.size(); }
    Eigen::Index dim() const { return l.cols(); }
    double spacing() const { return (lambda_grid.back() - lambda_grid.front()) / static_cast<double>(size() - 1); }
    /// Index of the grid point nearest to lam; DomainError beyond half a cell outside the grid.
    std::size_t nearest_index(double lam) const;
    /// Checks shapes, finiteness and uniform spacing.
    void validate() const;
};

bool operator==(const EmsTable& a, const EmsTable& b);

/// Diagonal of E[sigma grad_x eps] from Rademacher probes at diffused points `xs`.
Vec estimate_l(const ModelSpec& model, const Schedule& sched, double lam, const std::vector<Vec>& xs,
               CounterRng& rng, std::size_t probes = 1);

/// d l / d lam at row j: central differences inside, one-sided second order at the ends.
Vec estimate_l_dot(const std::vector<double>& lambda_grid, const Rows& l, std::size_t j);

/// f = (sigma eps - l x) / alpha.
Vec eval_f(const ModelSpec& model, const Schedule& sched, const Vec& l, const Vec& x, double lam);
Vec eval_f(const ModelSpec& model, const Schedule& sched, const EmsTable& table, const Vec& x, double lam);

/// Total lambda-derivative of f along the ODE trajectory through x.
Vec eval_f1(const ModelSpec& model, const Schedule& sched, const Vec& l, const Vec& l_dot, const Vec& x, double lam);
Vec eval_f1(const ModelSpec& model, const Schedule& sched, const EmsTable& table, const Vec& x, double lam);

/// Element-wise least-squares fit f1 ~ s * f + b. s is 0 where var(f) does not exceed the variance floor.
std::pair<Vec, Vec> estimate_sb(const std::vector<Vec>& f, const std::vector<Vec>& f1, double floor_rel = 1e-8,
                                double floor_abs = 1e-20);

EmsTable estimate_table(const ModelSpec& model, const Schedule& sched, const EmsConfig& cfg);

enum class DegenerateKind { NoisePred, DataPred };

std::string to_string(DegenerateKind kind);
DegenerateKind degenerate_kind_from_string(const std::string& name);

EmsTable degenerate_table(DegenerateKind kind, const Schedule& sched, std::size_t num_intervals, double lam_min,
                          double lam_max, Eigen::Index dim);

std::string table_to_json_string(const EmsTable& table);
EmsTable table_from_json_string(const std::string& text);

void save_table(const std::string& path, const EmsTable& table);

struct LoadedTable {
    EmsTable table;
    std::vector<std::string> warnings;
};

/// Reads a table; if `expected` is given and differs from the stored schedule, a warning is added.
LoadedTable load_table(const std::string& path, const Schedule* expected = nullptr);

} // namespace dpmv3
