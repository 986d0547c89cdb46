#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <memory>
#include <shared_mutex>
#include <tuple>

#include "dpmv3/ems.hpp"

namespace dpmv3 {

/// Cumulative trapezoid integrals from lambda_grid[0] of
/// l, s, e^{-S} b, e^{L+S} B and e^{L+S}.
struct IntegralTable {
    std::shared_ptr<const EmsTable> ems;
    Rows L;
    Rows S;
    Rows B;
    Rows C;
    Rows I;
};

IntegralTable build_integral_table(std::shared_ptr<const EmsTable> ems);

/// Memo of E^(k) vectors keyed by (k, j_s, j_t). Safe for concurrent use.
class EkCache {
public:
    /// Returns the cached vector, computing it with `make` on the first request.
    template <class F>
    Vec get_or_compute(int k, std::size_t j_s, std::size_t j_t, F&& make);

    std::size_t computations() const { return computations_.load(); }
    std::size_t size() const;

private:
    using Key = std::tuple<int, std::size_t, std::size_t>;
    mutable std::shared_mutex mutex_;
    std::map<Key, Vec> values_;
    std::atomic<std::size_t> computations_{0};
};

Vec coeff_A(const IntegralTable& tab, std::size_t j_s, std::size_t j_t);
Vec coeff_int_EB(const IntegralTable& tab, std::size_t j_s, std::size_t j_t);
Vec coeff_E0(const IntegralTable& tab, std::size_t j_s, std::size_t j_t);
/// Trapezoid of e^{(L+S)(lam) - (L+S)(lam_s)} (lam - lam_s)^k / k! over the grid points in [j_s, j_t].
Vec coeff_Ek(const IntegralTable& tab, EkCache* cache, std::size_t j_s, std::size_t j_t, int k);

/// g = a * x + b * eps + c at grid point j_l relative to anchor j_a.
struct GCoefficients {
    Vec a;
    Vec b;
    Vec c;
};

GCoefficients g_coefficients(const IntegralTable& tab, std::size_t j_a, std::size_t j_l);

/// int_0^h e^{c u} u^k / k! du, element-wise in c.
Vec exp_moment(const Vec& c, double h, int k);
double exp_moment(double c, double h, int k);

/// A sampling node: its logSNR and, for tabulated coefficients, its EMS grid index.
struct StepNode {
    double lambda = 0.0;
    std::size_t index = 0;
};

/// Coefficient provider for the local update.
class Coefficients {
public:
    explicit Coefficients(Schedule sched) : sched_(std::move(sched)) {}
    virtual ~Coefficients() = default;

    const Schedule& schedule() const { return sched_; }
    virtual Eigen::Index dim() const = 0;
    /// Maps a logSNR onto the node used for coefficient lookup.
    virtual StepNode snap(double lam) const = 0;

    virtual Vec A(const StepNode& s, const StepNode& t) const = 0;
    virtual Vec int_eb(const StepNode& s, const StepNode& t) const = 0;
    virtual Vec ek(const StepNode& s, const StepNode& t, int k) const = 0;
    virtual GCoefficients g(const StepNode& anchor, const StepNode& at) const = 0;
    virtual Vec l_at(const StepNode& node) const = 0;

protected:
    Schedule sched_;
};

/// Coefficients from a trapezoid integral table; sampling nodes snap to the EMS grid.
class TableCoefficients final : public Coefficients {
public:
    explicit TableCoefficients(std::shared_ptr<const EmsTable> ems);

    const IntegralTable& table() const { return tab_; }
    const EkCache& cache() const { return *cache_; }

    Eigen::Index dim() const override { return tab_.ems->dim(); }
    StepNode snap(double lam) const override;
    Vec A(const StepNode& s, const StepNode& t) const override;
    Vec int_eb(const StepNode& s, const StepNode& t) const override;
    Vec ek(const StepNode& s, const StepNode& t, int k) const override;
    GCoefficients g(const StepNode& anchor, const StepNode& at) const override;
    Vec l_at(const StepNode& node) const override;

private:
    IntegralTable tab_;
    std::unique_ptr<EkCache> cache_;
};

/// Exact coefficients for EMS that are constant in lambda (per dimension).
class ClosedFormCoefficients final : public Coefficients {
public:
    ClosedFormCoefficients(Schedule sched, Vec l, Vec s, Vec b);

    Eigen::Index dim() const override { return l_.size(); }
    StepNode snap(double lam) const override { return {lam, 0}; }
    Vec A(const StepNode& s, const StepNode& t) const override;
    Vec int_eb(const StepNode& s, const StepNode& t) const override;
    Vec ek(const StepNode& s, const StepNode& t, int k) const override;
    GCoefficients g(const StepNode& anchor, const StepNode& at) const override;
    Vec l_at(const StepNode&) const override { return l_; }

private:
    Vec l_;
    Vec s_;
    Vec b_;
};

/// Closed-form coefficients when every EMS column is constant within `tol`, else the trapezoid table.
std::unique_ptr<Coefficients> make_coefficients(std::shared_ptr<const EmsTable> ems, double tol = 1e-12);

template <class F>
Vec EkCache::get_or_compute(int k, std::size_t j_s, std::size_t j_t, F&& make)
{
    const Key key{k, j_s, j_t};
    {
        std::shared_lock lock(mutex_);
        if (auto it = values_.find(key); it != values_.end())
            return it->second;
    }
    Vec value = make();
    std::unique_lock lock(mutex_);
    auto [it, inserted] = values_.emplace(key, std::move(value));
    if (inserted)
        ++computations_;
    return it->second;
}

} // namespace dpmv3
