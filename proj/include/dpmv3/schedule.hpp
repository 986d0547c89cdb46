#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dpmv3 {

enum class ScheduleKind { VpLinear, VpCosine, Edm };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Noise schedule alpha(t), sigma(t) and the logSNR lambda = log(alpha / sigma).
///
/// vp-linear: log alpha = -t^2 (beta1 - beta0) / 4 - t beta0 / 2, sigma = sqrt(1 - alpha^2)
/// vp-cosine: alpha = cos(pi/2 (t + s)/(1 + s)) / cos(pi/2 s/(1 + s))   (experimental)
/// edm:       alpha = 1, sigma = t
///
/// Immutable after construction.
class Schedule {
public:
    static Schedule vp_linear(double beta0 = 0.1, double beta1 = 20.0, double t_min = 0.0, double t_max = 1.0);
    static Schedule vp_cosine(double offset = 0.008, double t_min = 0.0, double t_max = 0.9946);
    static Schedule edm(double t_min = 0.002, double t_max = 80.0);

    ScheduleKind kind() const { return kind_; }
    bool variance_preserving() const { return kind_ != ScheduleKind::Edm; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }
    double beta0() const { return p0_; }
    double beta1() const { return p1_; }
    double cosine_offset() const { return p0_; }

    double alpha(double t) const;
    double sigma(double t) const;
    double log_alpha(double t) const;
    double lambda_of_t(double t) const;
    double t_of_lambda(double lam) const;

    /// alpha, sigma and d(log alpha)/d(lambda) as functions of lambda alone.
    double alpha_of_lambda(double lam) const;
    double sigma_of_lambda(double lam) const;
    double dlog_alpha_dlambda(double lam) const;

    /// lambda(t_max), the smallest logSNR on the domain.
    double lambda_min() const;
    /// lambda(t_min); +inf when sigma(t_min) = 0.
    double lambda_max() const;

    /// Typical end time for sampling: 1e-3 for vp kinds, t_min for edm.
    double default_t_end() const;

    bool operator==(const Schedule& other) const = default;

private:
    Schedule(ScheduleKind kind, double p0, double p1, double t_min, double t_max);
    void check_t(double& t) const;

    ScheduleKind kind_;
    double p0_;
    double p1_;
    double t_min_;
    double t_max_;
};

enum class GridKind { UniformLambda, UniformT };

std::string to_string(GridKind kind);
GridKind grid_kind_from_string(const std::string& name);

struct TimeGrid {
    std::vector<double> timesteps; // t_0 = start ... t_M = end
    std::vector<double> lambdas;   // strictly increasing
    GridKind kind = GridKind::UniformLambda;

    std::size_t steps() const { return timesteps.size() - 1; }
};

TimeGrid make_time_grid(const Schedule& sched, std::size_t steps, GridKind kind, double t_start, double t_end);

void to_json(nlohmann::json& j, const Schedule& sched);
Schedule schedule_from_json(const nlohmann::json& j);

} // namespace dpmv3
