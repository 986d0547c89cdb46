#pragma once

#include "dpmv3/model.hpp"

namespace dpmv3 {

/// High-accuracy solution of dx/dlam = (dlog alpha/dlam) x - sigma eps(x, lam)
/// from lam_start to lam_end with an embedded Runge-Kutta-Fehlberg 7(8) pair.
/// `tol` is used as both the absolute and relative tolerance.
Vec reference_solve(const ModelSpec& model, const Schedule& sched, const Vec& x_start, double lam_start,
                    double lam_end, double tol = 1e-10);

} // namespace dpmv3
