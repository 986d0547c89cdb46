#include "dpmv3/schedule.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

namespace {

// log(1 + e^x) without overflow.
double softplus(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::string fmt_double(double v)
{
    return nlohmann::json(v).dump();
}

} // namespace

std::string to_string(ScheduleKind kind)
{
    switch (kind) {
    case ScheduleKind::VpLinear:
        return "vp-linear";
    case ScheduleKind::VpCosine:
        return "vp-cosine";
    case ScheduleKind::Edm:
        return "edm";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name)
{
    if (name == "vp-linear")
        return ScheduleKind::VpLinear;
    if (name == "vp-cosine")
        return ScheduleKind::VpCosine;
    if (name == "edm")
        return ScheduleKind::Edm;
    throw ArgumentError("unknown schedule kind '" + name + "'");
}

Schedule::Schedule(ScheduleKind kind, double p0, double p1, double t_min, double t_max)
    : kind_(kind), p0_(p0), p1_(p1), t_min_(t_min), t_max_(t_max)
{
    if (!(t_min < t_max) || !std::isfinite(t_min) || !std::isfinite(t_max))
        throw ArgumentError("schedule t_domain must satisfy t_min < t_max");
}

Schedule Schedule::vp_linear(double beta0, double beta1, double t_min, double t_max)
{
    if (!(beta0 > 0.0) || !(beta1 > beta0))
        throw ArgumentError("vp-linear needs 0 < beta0 < beta1");
    if (t_min < 0.0)
        throw ArgumentError("vp-linear t_min must be >= 0");
    return {ScheduleKind::VpLinear, beta0, beta1, t_min, t_max};
}

Schedule Schedule::vp_cosine(double offset, double t_min, double t_max)
{
    if (!(offset > 0.0))
        throw ArgumentError("vp-cosine offset must be positive");
    if (t_min < 0.0 || t_max >= 1.0)
        throw ArgumentError("vp-cosine t_domain must lie in [0, 1)");
    return {ScheduleKind::VpCosine, offset, 0.0, t_min, t_max};
}

Schedule Schedule::edm(double t_min, double t_max)
{
    if (!(t_min > 0.0))
        throw ArgumentError("edm t_min must be positive");
    return {ScheduleKind::Edm, 0.0, 0.0, t_min, t_max};
}

void Schedule::check_t(double& t) const
{
    // Round-trip values may land a few ulps outside the domain.
    const double slack = 1e-12 * std::max(1.0, std::abs(t_max_));
    if (!(t >= t_min_ - slack && t <= t_max_ + slack))
        throw DomainError("t = " + fmt_double(t) + " outside [" + fmt_double(t_min_) + ", " + fmt_double(t_max_) + "]");
    t = std::clamp(t, t_min_, t_max_);
}

double Schedule::log_alpha(double t) const
{
    check_t(t);
    switch (kind_) {
    case ScheduleKind::VpLinear:
        return -0.25 * t * t * (p1_ - p0_) - 0.5 * t * p0_;
    case ScheduleKind::VpCosine: {
        const double half_pi = 0.5 * std::numbers::pi;
        return std::log(std::cos(half_pi * (t + p0_) / (1.0 + p0_))) - std::log(std::cos(half_pi * p0_ / (1.0 + p0_)));
    }
    case ScheduleKind::Edm:
        return 0.0;
    }
    return 0.0;
}

double Schedule::alpha(double t) const
{
    return std::exp(log_alpha(t));
}

double Schedule::sigma(double t) const
{
    if (kind_ == ScheduleKind::Edm) {
        check_t(t);
        return t;
    }
    return std::sqrt(-std::expm1(2.0 * log_alpha(t)));
}

double Schedule::lambda_of_t(double t) const
{
    const double s = sigma(t);
    if (!(s > 0.0))
        throw DomainError("lambda undefined where sigma(t) = 0 (t = " + fmt_double(t) + ")");
    return log_alpha(t) - std::log(s);
}

double Schedule::lambda_min() const
{
    return lambda_of_t(t_max_);
}

double Schedule::lambda_max() const
{
    if (sigma(t_min_) > 0.0)
        return lambda_of_t(t_min_);
    return std::numeric_limits<double>::infinity();
}

double Schedule::default_t_end() const
{
    return kind_ == ScheduleKind::Edm ? t_min_ : std::max(t_min_, 1e-3);
}

double Schedule::t_of_lambda(double lam) const
{
    const double lo = lambda_min();
    const double hi = lambda_max();
    const double slack = 1e-12 * std::max(1.0, std::abs(lam));
    if (!std::isfinite(lam) || lam < lo - slack || lam > hi + slack)
        throw DomainError("lambda = " + fmt_double(lam) + " outside [" + fmt_double(lo) + ", " + fmt_double(hi) + "]");
    double t = 0.0;
    switch (kind_) {
    case ScheduleKind::VpLinear: {
        // Solve (b1 - b0)/4 t^2 + b0/2 t = log(1 + e^{-2 lam}) / 2 in the cancellation-free form.
        const double log_term = softplus(-2.0 * lam);
        t = 2.0 * log_term / (std::sqrt(p0_ * p0_ + 2.0 * (p1_ - p0_) * log_term) + p0_);
        break;
    }
    case ScheduleKind::VpCosine: {
        const double log_alpha = -0.5 * softplus(-2.0 * lam);
        const double half_pi = 0.5 * std::numbers::pi;
        const double c = std::cos(half_pi * p0_ / (1.0 + p0_));
        t = std::acos(std::exp(log_alpha) * c) * (1.0 + p0_) / half_pi - p0_;
        break;
    }
    case ScheduleKind::Edm:
        t = std::exp(-lam);
        break;
    }
    return std::clamp(t, t_min_, t_max_);
}

double Schedule::alpha_of_lambda(double lam) const
{
    if (kind_ == ScheduleKind::Edm)
        return 1.0;
    return std::exp(-0.5 * softplus(-2.0 * lam));
}

double Schedule::sigma_of_lambda(double lam) const
{
    if (kind_ == ScheduleKind::Edm)
        return std::exp(-lam);
    return std::exp(-0.5 * softplus(2.0 * lam));
}

double Schedule::dlog_alpha_dlambda(double lam) const
{
    if (kind_ == ScheduleKind::Edm)
        return 0.0;
    // For alpha^2 + sigma^2 = 1, d log(alpha) / d lambda = sigma^2.
    const double s = sigma_of_lambda(lam);
    return s * s;
}

std::string to_string(GridKind kind)
{
    return kind == GridKind::UniformLambda ? "uniform-lambda" : "uniform-t";
}

GridKind grid_kind_from_string(const std::string& name)
{
    if (name == "uniform-lambda")
        return GridKind::UniformLambda;
    if (name == "uniform-t")
        return GridKind::UniformT;
    throw ArgumentError("unknown grid kind '" + name + "'");
}

TimeGrid make_time_grid(const Schedule& sched, std::size_t steps, GridKind kind, double t_start, double t_end)
{
    if (steps == 0)
        throw ArgumentError("time grid needs at least one step");
    if (!(t_start > t_end))
        throw ArgumentError("time grid needs t_start > t_end");

    TimeGrid grid;
    grid.kind = kind;
    grid.timesteps.resize(steps + 1);
    grid.lambdas.resize(steps + 1);
    const double lam_start = sched.lambda_of_t(t_start);
    const double lam_end = sched.lambda_of_t(t_end);
    const auto m = static_cast<double>(steps);

    if (kind == GridKind::UniformLambda) {
        const double dlam = (lam_end - lam_start) / m;
        for (std::size_t i = 0; i <= steps; ++i) {
            grid.lambdas[i] = lam_start + static_cast<double>(i) * dlam;
            grid.timesteps[i] = sched.t_of_lambda(grid.lambdas[i]);
        }
        grid.lambdas[steps] = lam_end;
    } else {
        const double dt = (t_end - t_start) / m;
        for (std::size_t i = 0; i <= steps; ++i) {
            grid.timesteps[i] = t_start + static_cast<double>(i) * dt;
            grid.lambdas[i] = sched.lambda_of_t(grid.timesteps[i]);
        }
        grid.lambdas[steps] = lam_end;
    }
    grid.timesteps.front() = t_start;
    grid.timesteps.back() = t_end;
    grid.lambdas.front() = lam_start;

    for (std::size_t i = 0; i < steps; ++i)
        if (!(grid.lambdas[i + 1] > grid.lambdas[i]))
            throw ArgumentError("time grid lambdas are not strictly increasing; too many steps for the interval");
    return grid;
}

void to_json(nlohmann::json& j, const Schedule& sched)
{
    nlohmann::json params = nlohmann::json::object();
    switch (sched.kind()) {
    case ScheduleKind::VpLinear:
        params["beta0"] = sched.beta0();
        params["beta1"] = sched.beta1();
        break;
    case ScheduleKind::VpCosine:
        params["offset"] = sched.cosine_offset();
        break;
    case ScheduleKind::Edm:
        break;
    }
    j = nlohmann::json{{"kind", to_string(sched.kind())}, {"params", params}, {"t_domain", {sched.t_min(), sched.t_max()}}};
}

Schedule schedule_from_json(const nlohmann::json& j)
{
    try {
        const auto kind = schedule_kind_from_string(j.at("kind").get<std::string>());
        const nlohmann::json params = j.value("params", nlohmann::json::object());
        switch (kind) {
        case ScheduleKind::VpLinear: {
            const auto dom = j.value("t_domain", std::vector<double>{0.0, 1.0});
            if (dom.size() != 2)
                throw ParseError("t_domain must have two entries");
            return Schedule::vp_linear(params.value("beta0", 0.1), params.value("beta1", 20.0), dom[0], dom[1]);
        }
        case ScheduleKind::VpCosine: {
            const auto dom = j.value("t_domain", std::vector<double>{0.0, 0.9946});
            if (dom.size() != 2)
                throw ParseError("t_domain must have two entries");
            return Schedule::vp_cosine(params.value("offset", 0.008), dom[0], dom[1]);
        }
        case ScheduleKind::Edm: {
            const auto dom = j.value("t_domain", std::vector<double>{0.002, 80.0});
            if (dom.size() != 2)
                throw ParseError("t_domain must have two entries");
            return Schedule::edm(dom[0], dom[1]);
        }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid schedule: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ParseError(std::string("invalid schedule: ") + e.what());
    }
    throw ParseError("invalid schedule");
}

} // namespace dpmv3
