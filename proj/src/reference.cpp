#include "dpmv3/reference.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

namespace odeint = boost::numeric::odeint;

Vec reference_solve(const ModelSpec& model, const Schedule& sched, const Vec& x_start, double lam_start,
                    double lam_end, double tol)
{
    if (x_start.size() != model.dim())
        throw ArgumentError("x_start dimension does not match the model");
    if (!(tol > 0.0))
        throw ArgumentError("tol must be positive");
    if (!(lam_end >= lam_start))
        throw ArgumentError("reference_solve integrates forward in lambda only");
    if (lam_end == lam_start)
        return x_start;

    using State = std::vector<double>;
    const auto d = x_start.size();
    auto rhs = [&](const State& x, State& dxdt, double lam) {
        const Eigen::Map<const Vec> xv(x.data(), d);
        const Vec eps = eval_eps(model, sched, xv, lam);
        const double da = sched.dlog_alpha_dlambda(lam);
        const double sigma = sched.sigma_of_lambda(lam);
        Eigen::Map<Vec>(dxdt.data(), d) = da * xv - sigma * eps;
    };

    State x(x_start.data(), x_start.data() + d);
    const double span = lam_end - lam_start;
    try {
        auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_fehlberg78<State>());
        odeint::integrate_adaptive(stepper, rhs, x, lam_start, lam_end, span / 64.0);
    } catch (const odeint::step_adjustment_error& e) {
        throw ConvergenceError(std::string("reference_solve: ") + e.what());
    } catch (const odeint::no_progress_error& e) {
        throw ConvergenceError(std::string("reference_solve: ") + e.what());
    }
    for (double v : x)
        if (!std::isfinite(v))
            throw ConvergenceError("reference_solve: non-finite state");
    return Eigen::Map<const Vec>(x.data(), d);
}

} // namespace dpmv3
