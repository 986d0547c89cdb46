#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpmv3/integrals.hpp"
#include "dpmv3/model.hpp"
#include "dpmv3/schedule.hpp"

namespace dpmv3 {

enum class Corrector { None, Full, Half };

std::string to_string(Corrector c);
Corrector corrector_from_string(const std::string& name);

/// A previously visited node and its g value relative to the current anchor.
struct HistoryPoint {
    StepNode node;
    Vec g;
};

/// One local update from anchor s to target t of order 1 + extras.size().
/// `extras` are ordered nearest-first. With `pseudo`, derivative k uses only the
/// k + 1 points nearest the anchor.
Vec lupdate(const Coefficients& coeffs, const StepNode& s, const Vec& x_s, const Vec& g_s,
            const std::vector<HistoryPoint>& extras, const StepNode& t, bool pseudo = false);

/// g at node `at` for state (x, eps), relative to `anchor`.
Vec g_value(const Coefficients& coeffs, const StepNode& anchor, const StepNode& at, const Vec& x, const Vec& eps);

/// Everything the sampler knows about one step, passed to the observer.
struct StepRecord {
    std::size_t m = 0;
    StepNode anchor;
    StepNode node;
    int predictor_order = 0;
    int corrector_order = 0; // 0 when no correction was applied
    Vec x_pred;
    Vec eps_pred; // empty at the final step
    Vec x_corr;   // empty when not corrected
    Vec eps_corr;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct SolverConfig {
    int order = 2;
    Corrector corrector = Corrector::None;
    bool pseudo_predictor = false;
    bool pseudo_corrector = false;
    TimeGrid grid;
    StepObserver observer;

    void validate(int max_order = 4) const;
};

struct TraceEntry {
    double t = 0.0;
    double lambda = 0.0;
    Vec x;
    double eps_norm = 0.0; // NaN when no model call happened at this node
    double g_norm = 0.0;   // NaN when no model call happened at this node
};

struct SampleResult {
    Vec x_final;
    TimeGrid grid; // timesteps after snapping to the coefficient grid
    std::vector<TraceEntry> trace;
    std::size_t nfe = 0;
};

/// Multistep predictor-corrector sampler. Uses exactly M model calls.
SampleResult multistep_sample(const EpsFn& eps, const Coefficients& coeffs, const SolverConfig& cfg, const Vec& x_init);

/// Singlestep sampler: macro steps of `order` substeps, each anchored at the macro step's first point.
SampleResult singlestep_sample(const EpsFn& eps, const Coefficients& coeffs, const SolverConfig& cfg, const Vec& x_init);

/// First-order DDIM update from t_s to t_t.
Vec ddim_step(const Schedule& sched, const Vec& x_s, const Vec& eps_s, double t_s, double t_t);

} // namespace dpmv3
