#include "dpmv3/integrals.hpp"

#include <cmath>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

namespace {

Vec row(const Rows& r, std::size_t j)
{
    return r.row(static_cast<Eigen::Index>(j)).transpose();
}

// Cumulative trapezoid of `f` (one row per grid point), starting at zero.
Rows cumulative_trapezoid(const Rows& f, double h)
{
    Rows out(f.rows(), f.cols());
    out.row(0).setZero();
    for (Eigen::Index j = 1; j < f.rows(); ++j)
        out.row(j) = out.row(j - 1) + 0.5 * h * (f.row(j - 1) + f.row(j));
    return out;
}

void check_order(const IntegralTable& tab, std::size_t j_s, std::size_t j_t)
{
    if (j_t < j_s || j_t >= tab.ems->size())
        throw ArgumentError("coefficient indices must satisfy j_s <= j_t < grid size");
}

double factorial(int k)
{
    double f = 1.0;
    for (int i = 2; i <= k; ++i)
        f *= i;
    return f;
}

} // namespace

IntegralTable build_integral_table(std::shared_ptr<const EmsTable> ems)
{
    if (!ems)
        throw ArgumentError("build_integral_table needs an EMS table");
    ems->validate();
    const double h = ems->spacing();
    IntegralTable tab;
    tab.ems = ems;
    tab.L = cumulative_trapezoid(ems->l, h);
    tab.S = cumulative_trapezoid(ems->s, h);
    tab.B = cumulative_trapezoid((-tab.S).exp() * ems->b, h);
    const Rows w = (tab.L + tab.S).exp();
    tab.C = cumulative_trapezoid(w * tab.B, h);
    tab.I = cumulative_trapezoid(w, h);
    return tab;
}

std::size_t EkCache::size() const
{
    std::shared_lock lock(mutex_);
    return values_.size();
}

Vec coeff_A(const IntegralTable& tab, std::size_t j_s, std::size_t j_t)
{
    check_order(tab, j_s, j_t);
    return (row(tab.L, j_s) - row(tab.L, j_t)).exp();
}

Vec coeff_int_EB(const IntegralTable& tab, std::size_t j_s, std::size_t j_t)
{
    check_order(tab, j_s, j_t);
    return (-row(tab.L, j_s)).exp() *
           (row(tab.C, j_t) - row(tab.C, j_s) - row(tab.B, j_s) * (row(tab.I, j_t) - row(tab.I, j_s)));
}

Vec coeff_E0(const IntegralTable& tab, std::size_t j_s, std::size_t j_t)
{
    check_order(tab, j_s, j_t);
    return (-row(tab.L, j_s) - row(tab.S, j_s)).exp() * (row(tab.I, j_t) - row(tab.I, j_s));
}

Vec coeff_Ek(const IntegralTable& tab, EkCache* cache, std::size_t j_s, std::size_t j_t, int k)
{
    check_order(tab, j_s, j_t);
    if (k < 0 || k > 3)
        throw ArgumentError("coeff_Ek supports 0 <= k <= 3");
    auto compute = [&]() -> Vec {
        const auto& grid = tab.ems->lambda_grid;
        const double h = tab.ems->spacing();
        const double kf = factorial(k);
        const Vec base = row(tab.L, j_s) + row(tab.S, j_s);
        Vec acc = Vec::Zero(tab.ems->dim());
        for (std::size_t j = j_s; j <= j_t; ++j) {
            if (j_s == j_t)
                break;
            const double w = (j == j_s || j == j_t) ? 0.5 * h : h;
            const double poly = std::pow(grid[j] - grid[j_s], k) / kf;
            acc += w * poly * (row(tab.L, j) + row(tab.S, j) - base).exp();
        }
        return acc;
    };
    if (!cache)
        return compute();
    return cache->get_or_compute(k, j_s, j_t, compute);
}

GCoefficients g_coefficients(const IntegralTable& tab, std::size_t j_a, std::size_t j_l)
{
    const auto& ems = *tab.ems;
    if (j_a >= ems.size() || j_l >= ems.size())
        throw ArgumentError("g_coefficients index out of range");
    const double lam = ems.lambda_grid[j_l];
    const double alpha = ems.schedule.alpha_of_lambda(lam);
    const double sigma = ems.schedule.sigma_of_lambda(lam);
    const Vec decay = (row(tab.S, j_a) - row(tab.S, j_l)).exp();
    return {-decay * row(ems.l, j_l) / alpha, decay * sigma / alpha,
            -row(tab.S, j_a).exp() * (row(tab.B, j_l) - row(tab.B, j_a))};
}

double exp_moment(double c, double h, int k)
{
    if (k < 0)
        throw ArgumentError("exp_moment needs k >= 0");
    const double z = c * h;
    if (std::abs(z) < 1.0) {
        // sum_m c^m h^{m+k+1} / (m! k! (m+k+1))
        double term = std::pow(h, k + 1) / factorial(k); // c^m h^{m+k+1} / (m! k!)
        double sum = 0.0;
        for (int m = 0; m < 60; ++m) {
            const double add = term / (m + k + 1);
            sum += add;
            if (std::abs(add) <= 1e-18 * std::abs(sum))
                break;
            term *= z / (m + 1);
        }
        return sum;
    }
    double j = std::expm1(z) / c;
    const double ez = std::exp(z);
    double hk = 1.0;
    for (int i = 1; i <= k; ++i) {
        hk *= h / i;
        j = (ez * hk - j) / c;
    }
    return j;
}

Vec exp_moment(const Vec& c, double h, int k)
{
    Vec out(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i)
        out[i] = exp_moment(c[i], h, k);
    return out;
}

TableCoefficients::TableCoefficients(std::shared_ptr<const EmsTable> ems)
    : Coefficients(ems ? ems->schedule : Schedule::vp_linear()), tab_(build_integral_table(std::move(ems))),
      cache_(std::make_unique<EkCache>())
{
}

StepNode TableCoefficients::snap(double lam) const
{
    const std::size_t j = tab_.ems->nearest_index(lam);
    return {tab_.ems->lambda_grid[j], j};
}

Vec TableCoefficients::A(const StepNode& s, const StepNode& t) const
{
    return coeff_A(tab_, s.index, t.index);
}

Vec TableCoefficients::int_eb(const StepNode& s, const StepNode& t) const
{
    return coeff_int_EB(tab_, s.index, t.index);
}

Vec TableCoefficients::ek(const StepNode& s, const StepNode& t, int k) const
{
    if (k == 0)
        return coeff_E0(tab_, s.index, t.index);
    return coeff_Ek(tab_, cache_.get(), s.index, t.index, k);
}

GCoefficients TableCoefficients::g(const StepNode& anchor, const StepNode& at) const
{
    return g_coefficients(tab_, anchor.index, at.index);
}

Vec TableCoefficients::l_at(const StepNode& node) const
{
    return row(tab_.ems->l, node.index);
}

ClosedFormCoefficients::ClosedFormCoefficients(Schedule sched, Vec l, Vec s, Vec b)
    : Coefficients(std::move(sched)), l_(std::move(l)), s_(std::move(s)), b_(std::move(b))
{
    if (l_.size() < 1 || s_.size() != l_.size() || b_.size() != l_.size())
        throw ArgumentError("closed-form coefficients need l, s, b of one dimension");
}

Vec ClosedFormCoefficients::A(const StepNode& s, const StepNode& t) const
{
    return (-l_ * (t.lambda - s.lambda)).exp();
}

Vec ClosedFormCoefficients::int_eb(const StepNode& s, const StepNode& t) const
{
    const double h = t.lambda - s.lambda;
    Vec out(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        if (b_[i] == 0.0)
            out[i] = 0.0;
        else if (s_[i] == 0.0)
            out[i] = b_[i] * exp_moment(l_[i], h, 1);
        else
            out[i] = b_[i] / s_[i] * (exp_moment(l_[i] + s_[i], h, 0) - exp_moment(l_[i], h, 0));
    }
    return out;
}

Vec ClosedFormCoefficients::ek(const StepNode& s, const StepNode& t, int k) const
{
    return exp_moment(l_ + s_, t.lambda - s.lambda, k);
}

GCoefficients ClosedFormCoefficients::g(const StepNode& anchor, const StepNode& at) const
{
    const double delta = at.lambda - anchor.lambda;
    const double alpha = sched_.alpha_of_lambda(at.lambda);
    const double sigma = sched_.sigma_of_lambda(at.lambda);
    const Vec decay = (-s_ * delta).exp();
    return {-decay * l_ / alpha, decay * sigma / alpha, -b_ * exp_moment(-s_, delta, 0)};
}

std::unique_ptr<Coefficients> make_coefficients(std::shared_ptr<const EmsTable> ems, double tol)
{
    if (!ems)
        throw ArgumentError("make_coefficients needs an EMS table");
    auto constant = [tol](const Rows& r) {
        return ((r.rowwise() - r.row(0)).abs() <= tol).all();
    };
    if (constant(ems->l) && constant(ems->s) && constant(ems->b))
        return std::make_unique<ClosedFormCoefficients>(ems->schedule, ems->l.row(0).transpose(),
                                                        ems->s.row(0).transpose(), ems->b.row(0).transpose());
    return std::make_unique<TableCoefficients>(std::move(ems));
}

} // namespace dpmv3
