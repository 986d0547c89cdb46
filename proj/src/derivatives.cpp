#include "dpmv3/derivatives.hpp"

#include <cmath>
#include <utility>

#include "dpmv3/errors.hpp"

namespace dpmv3 {

namespace {

void check_nodes(const std::vector<double>& deltas)
{
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (deltas[i] == 0.0 || !std::isfinite(deltas[i]))
            throw SingularSystemError("derivative nodes must be finite and distinct from the anchor");
        for (std::size_t j = 0; j < i; ++j)
            if (deltas[i] == deltas[j])
                throw SingularSystemError("derivative nodes must be distinct");
    }
}

} // namespace

std::vector<Vec> estimate_derivatives(const std::vector<double>& deltas, const std::vector<Vec>& diffs)
{
    const std::size_t n = deltas.size();
    if (diffs.size() != n)
        throw ArgumentError("estimate_derivatives: one difference per node required");
    if (n > 3)
        throw ArgumentError("estimate_derivatives supports at most three nodes");
    check_nodes(deltas);
    if (n == 0)
        return {};

    // Gaussian elimination with partial pivoting on the n x n power matrix,
    // applied to all components at once.
    std::vector<std::vector<double>> m(n, std::vector<double>(n));
    std::vector<Vec> rhs = diffs;
    for (std::size_t i = 0; i < n; ++i) {
        double p = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            p *= deltas[i];
            m[i][k] = p;
        }
    }
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col]))
                piv = r;
        if (m[piv][col] == 0.0)
            throw SingularSystemError("derivative system is singular");
        std::swap(m[piv], m[col]);
        std::swap(rhs[piv], rhs[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = m[r][col] / m[col][col];
            for (std::size_t k = col; k < n; ++k)
                m[r][k] -= f * m[col][k];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<Vec> out(n);
    for (std::size_t i = n; i-- > 0;) {
        Vec acc = rhs[i];
        for (std::size_t k = i + 1; k < n; ++k)
            acc -= m[i][k] * out[k];
        out[i] = acc / m[i][i];
    }
    return out;
}

std::vector<Vec> estimate_derivatives_pseudo(const std::vector<double>& deltas, const std::vector<Vec>& values)
{
    const std::size_t n = deltas.size();
    if (values.size() != n + 1)
        throw ArgumentError("estimate_derivatives_pseudo: need the anchor value plus one value per node");
    check_nodes(deltas);
    std::vector<double> nodes(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        nodes[i + 1] = deltas[i];

    // Column k of the Neville table, D_l^(k) for l = 0..n-k.
    std::vector<Vec> d = values;
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t k = 1; k <= n; ++k) {
        for (std::size_t l = 0; l + k <= n; ++l)
            d[l] = (d[l + 1] - d[l]) / (nodes[l + k] - nodes[l]);
        out.push_back(d[0]);
    }
    return out;
}

} // namespace dpmv3
