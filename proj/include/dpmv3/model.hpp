#pragma once

#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "dpmv3/rng.hpp"
#include "dpmv3/schedule.hpp"

namespace dpmv3 {

using Vec = Eigen::ArrayXd;

/// Data distribution concentrated at a single point x0.
struct PointGaussian {
    Vec x0;
};

/// q0 = sum_i w_i N(mu_i, std_i^2 I).
struct GaussianMixture {
    std::vector<double> weights;
    std::vector<Vec> means;
    std::vector<double> stds;
};

class ModelSpec;

/// Classifier-free combination scale * eps_cond + (1 - scale) * eps_uncond.
struct Guided {
    std::shared_ptr<const ModelSpec> cond;
    std::shared_ptr<const ModelSpec> uncond;
    double scale = 1.0;
};

/// Analytic noise-prediction model eps(x, lambda) = -sigma * grad log q_lambda(x).
class ModelSpec {
public:
    using Variant = std::variant<PointGaussian, GaussianMixture, Guided>;

    ModelSpec(PointGaussian p);
    ModelSpec(GaussianMixture m);
    ModelSpec(Guided g);

    const Variant& variant() const { return v_; }
    Eigen::Index dim() const { return dim_; }
    std::string kind_name() const;

private:
    Variant v_;
    Eigen::Index dim_;
};

Vec eval_eps(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam);
/// Exact grad_x eps(x, lambda) . v
Vec eval_jvp(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam, const Vec& v);
/// Partial derivative of eps in lambda at fixed x. Analytic for point-gaussian,
/// central difference with step kLambdaStep for mixtures.
Vec eval_eps_dlambda(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam);

inline constexpr double kLambdaStep = 1e-4;

/// Dense Jacobian grad_x eps, for tests and diagnostics (D x D).
Eigen::MatrixXd eval_jacobian(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam);

/// log q_lambda(x) for the diffused data distribution (mixtures only; point-gaussian included).
double log_density(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam);

std::vector<Vec> sample_data(const ModelSpec& model, CounterRng& rng, std::size_t n);
Vec forward_diffuse(const Schedule& sched, const Vec& x0, double lam, CounterRng& rng);

/// Noise predictor as a callable; the solver only sees this.
using EpsFn = std::function<Vec(const Vec& x, double lam)>;
EpsFn make_eps_fn(const ModelSpec& model, const Schedule& sched);

void to_json(nlohmann::json& j, const ModelSpec& model);
ModelSpec model_from_json(const nlohmann::json& j);

} // namespace dpmv3
