#include "dpmv3/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_dim(const ModelSpec& model, const Vec& x, const char* what)
{
    if (x.size() != model.dim())
        throw ArgumentError(std::string(what) + " has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(model.dim()));
}

// Posterior responsibilities r_i and scaled residuals u_i = (x - alpha mu_i) / v_i
// of the diffused mixture at (x, lambda), v_i = alpha^2 s_i^2 + sigma^2.
struct MixturePosterior {
    std::vector<double> resp;
    std::vector<Vec> u;
    std::vector<double> var;
    double log_norm = 0.0;
};

MixturePosterior mixture_posterior(const GaussianMixture& m, double alpha, double sigma, const Vec& x)
{
    const std::size_t n = m.weights.size();
    const auto d = static_cast<double>(x.size());
    MixturePosterior p;
    p.resp.resize(n);
    p.u.resize(n);
    p.var.resize(n);
    std::vector<double> logp(n);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = alpha * alpha * m.stds[i] * m.stds[i] + sigma * sigma;
        const Vec r = x - alpha * m.means[i];
        p.var[i] = v;
        p.u[i] = r / v;
        logp[i] = std::log(m.weights[i]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) - 0.5 * r.square().sum() / v;
        max_log = std::max(max_log, logp[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        p.resp[i] = std::exp(logp[i] - max_log);
        total += p.resp[i];
    }
    for (auto& r : p.resp)
        r /= total;
    p.log_norm = max_log + std::log(total);
    return p;
}

Eigen::Index spec_dim(const ModelSpec::Variant& v)
{
    return std::visit(overloaded{
                          [](const PointGaussian& p) { return p.x0.size(); },
                          [](const GaussianMixture& m) { return m.means.empty() ? Eigen::Index{0} : m.means.front().size(); },
                          [](const Guided& g) { return g.cond ? g.cond->dim() : Eigen::Index{0}; },
                      },
                      v);
}

} // namespace

ModelSpec::ModelSpec(PointGaussian p) : v_(std::move(p)), dim_(spec_dim(v_))
{
    if (dim_ < 1)
        throw ArgumentError("point-gaussian needs x0 of dimension >= 1");
}

ModelSpec::ModelSpec(GaussianMixture m) : v_(std::move(m)), dim_(spec_dim(v_))
{
    const auto& mix = std::get<GaussianMixture>(v_);
    const std::size_t n = mix.weights.size();
    if (n == 0 || mix.means.size() != n || mix.stds.size() != n)
        throw ArgumentError("mixture needs matching, nonempty weights/means/stds");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(mix.weights[i] > 0.0))
            throw ArgumentError("mixture weights must be positive");
        if (!(mix.stds[i] >= 0.0))
            throw ArgumentError("mixture stds must be non-negative");
        if (mix.means[i].size() != dim_ || dim_ < 1)
            throw ArgumentError("mixture means must share one dimension >= 1");
        total += mix.weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ArgumentError("mixture weights must sum to 1");
}

ModelSpec::ModelSpec(Guided g) : v_(std::move(g)), dim_(spec_dim(v_))
{
    const auto& gd = std::get<Guided>(v_);
    if (!gd.cond || !gd.uncond)
        throw ArgumentError("guided model needs cond and uncond components");
    if (gd.cond->dim() != gd.uncond->dim())
        throw ArgumentError("guided components must share dimension");
}

std::string ModelSpec::kind_name() const
{
    return std::visit(overloaded{
                          [](const PointGaussian&) { return std::string("point-gaussian"); },
                          [](const GaussianMixture&) { return std::string("gaussian-mixture"); },
                          [](const Guided&) { return std::string("guided"); },
                      },
                      v_);
}

Vec eval_eps(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam)
{
    check_dim(model, x, "x");
    const double alpha = sched.alpha_of_lambda(lam);
    const double sigma = sched.sigma_of_lambda(lam);
    return std::visit(overloaded{
                          [&](const PointGaussian& p) -> Vec { return (x - alpha * p.x0) / sigma; },
                          [&](const GaussianMixture& m) -> Vec {
                              const auto post = mixture_posterior(m, alpha, sigma, x);
                              Vec eps = Vec::Zero(x.size());
                              for (std::size_t i = 0; i < post.resp.size(); ++i)
                                  eps += post.resp[i] * post.u[i];
                              return sigma * eps;
                          },
                          [&](const Guided& g) -> Vec {
                              return g.scale * eval_eps(*g.cond, sched, x, lam) +
                                     (1.0 - g.scale) * eval_eps(*g.uncond, sched, x, lam);
                          },
                      },
                      model.variant());
}

Vec eval_jvp(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam, const Vec& v)
{
    check_dim(model, x, "x");
    check_dim(model, v, "v");
    const double alpha = sched.alpha_of_lambda(lam);
    const double sigma = sched.sigma_of_lambda(lam);
    return std::visit(overloaded{
                          [&](const PointGaussian&) -> Vec { return v / sigma; },
                          [&](const GaussianMixture& m) -> Vec {
                              // J v = sigma sum_i r_i [ v / v_i + u_i ((ubar - u_i) . v) ]
                              const auto post = mixture_posterior(m, alpha, sigma, x);
                              Vec ubar = Vec::Zero(x.size());
                              for (std::size_t i = 0; i < post.resp.size(); ++i)
                                  ubar += post.resp[i] * post.u[i];
                              Vec out = Vec::Zero(x.size());
                              for (std::size_t i = 0; i < post.resp.size(); ++i) {
                                  const double proj = ((ubar - post.u[i]) * v).sum();
                                  out += post.resp[i] * (v / post.var[i] + post.u[i] * proj);
                              }
                              return sigma * out;
                          },
                          [&](const Guided& g) -> Vec {
                              return g.scale * eval_jvp(*g.cond, sched, x, lam, v) +
                                     (1.0 - g.scale) * eval_jvp(*g.uncond, sched, x, lam, v);
                          },
                      },
                      model.variant());
}

Vec eval_eps_dlambda(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam)
{
    check_dim(model, x, "x");
    return std::visit(overloaded{
                          [&](const PointGaussian& p) -> Vec {
                              // d/dlam (x - alpha x0)/sigma with dlog(sigma)/dlam = dlog(alpha)/dlam - 1.
                              const double alpha = sched.alpha_of_lambda(lam);
                              const double sigma = sched.sigma_of_lambda(lam);
                              const double da = sched.dlog_alpha_dlambda(lam);
                              const Vec eps = (x - alpha * p.x0) / sigma;
                              return -alpha * da * p.x0 / sigma - (da - 1.0) * eps;
                          },
                          [&](const GaussianMixture&) -> Vec {
                              const Vec plus = eval_eps(model, sched, x, lam + kLambdaStep);
                              const Vec minus = eval_eps(model, sched, x, lam - kLambdaStep);
                              return (plus - minus) / (2.0 * kLambdaStep);
                          },
                          [&](const Guided& g) -> Vec {
                              return g.scale * eval_eps_dlambda(*g.cond, sched, x, lam) +
                                     (1.0 - g.scale) * eval_eps_dlambda(*g.uncond, sched, x, lam);
                          },
                      },
                      model.variant());
}

Eigen::MatrixXd eval_jacobian(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam)
{
    const Eigen::Index d = model.dim();
    Eigen::MatrixXd jac(d, d);
    for (Eigen::Index c = 0; c < d; ++c) {
        Vec e = Vec::Zero(d);
        e[c] = 1.0;
        jac.col(c) = eval_jvp(model, sched, x, lam, e).matrix();
    }
    return jac;
}

double log_density(const ModelSpec& model, const Schedule& sched, const Vec& x, double lam)
{
    check_dim(model, x, "x");
    const double alpha = sched.alpha_of_lambda(lam);
    const double sigma = sched.sigma_of_lambda(lam);
    return std::visit(overloaded{
                          [&](const PointGaussian& p) -> double {
                              const auto d = static_cast<double>(x.size());
                              return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) -
                                     0.5 * (x - alpha * p.x0).square().sum() / (sigma * sigma);
                          },
                          [&](const GaussianMixture& m) -> double { return mixture_posterior(m, alpha, sigma, x).log_norm; },
                          [&](const Guided&) -> double { throw ArgumentError("guided models have no closed-form density"); },
                      },
                      model.variant());
}

std::vector<Vec> sample_data(const ModelSpec& model, CounterRng& rng, std::size_t n)
{
    std::vector<Vec> out;
    out.reserve(n);
    std::visit(overloaded{
                   [&](const PointGaussian& p) {
                       for (std::size_t i = 0; i < n; ++i)
                           out.push_back(p.x0);
                   },
                   [&](const GaussianMixture& m) {
                       for (std::size_t i = 0; i < n; ++i) {
                           const double u = rng.uniform();
                           std::size_t c = 0;
                           double acc = m.weights[0];
                           while (u >= acc && c + 1 < m.weights.size())
                               acc += m.weights[++c];
                           out.push_back(m.means[c] + m.stds[c] * rng.normal_vector(m.means[c].size()));
                       }
                   },
                   [&](const Guided& g) { out = sample_data(*g.cond, rng, n); },
               },
               model.variant());
    return out;
}

Vec forward_diffuse(const Schedule& sched, const Vec& x0, double lam, CounterRng& rng)
{
    return sched.alpha_of_lambda(lam) * x0 + sched.sigma_of_lambda(lam) * rng.normal_vector(x0.size());
}

EpsFn make_eps_fn(const ModelSpec& model, const Schedule& sched)
{
    return [model, sched](const Vec& x, double lam) { return eval_eps(model, sched, x, lam); };
}

namespace {

Vec vec_from_json(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> vec_to_std(const Vec& v)
{
    return {v.data(), v.data() + v.size()};
}

} // namespace

void to_json(nlohmann::json& j, const ModelSpec& model)
{
    std::visit(overloaded{
                   [&](const PointGaussian& p) { j = {{"kind", "point-gaussian"}, {"x0", vec_to_std(p.x0)}}; },
                   [&](const GaussianMixture& m) {
                       nlohmann::json means = nlohmann::json::array();
                       for (const auto& mu : m.means)
                           means.push_back(vec_to_std(mu));
                       j = {{"kind", "gaussian-mixture"}, {"weights", m.weights}, {"means", means}, {"stds", m.stds}};
                   },
                   [&](const Guided& g) {
                       nlohmann::json cond;
                       nlohmann::json uncond;
                       to_json(cond, *g.cond);
                       to_json(uncond, *g.uncond);
                       j = {{"kind", "guided"}, {"cond", cond}, {"uncond", uncond}, {"scale", g.scale}};
                   },
               },
               model.variant());
}

ModelSpec model_from_json(const nlohmann::json& j)
{
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "point-gaussian")
            return ModelSpec(PointGaussian{vec_from_json(j.at("x0"))});
        if (kind == "gaussian-mixture") {
            GaussianMixture m;
            m.weights = j.at("weights").get<std::vector<double>>();
            for (const auto& mu : j.at("means"))
                m.means.push_back(vec_from_json(mu));
            m.stds = j.at("stds").get<std::vector<double>>();
            return ModelSpec(std::move(m));
        }
        if (kind == "guided") {
            Guided g;
            g.cond = std::make_shared<const ModelSpec>(model_from_json(j.at("cond")));
            g.uncond = std::make_shared<const ModelSpec>(model_from_json(j.at("uncond")));
            g.scale = j.at("scale").get<double>();
            return ModelSpec(std::move(g));
        }
        throw ParseError("unknown model kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid model: ") + e.what());
    }
}

} // namespace dpmv3
