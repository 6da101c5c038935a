#include "fbkan/bspline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "fbkan/errors.hpp"

namespace fbkan {

KnotGrid build_grid(double lo, double hi, int intervals, int degree) {
    if (!std::isfinite(lo) || !std::isfinite(hi))
        throw std::invalid_argument("build_grid: bounds must be finite");
    if (!(hi > lo)) throw std::invalid_argument("build_grid: hi must exceed lo");
    if (intervals < 1) throw std::invalid_argument("build_grid: intervals must be positive");
    if (degree < 0) throw std::invalid_argument("build_grid: degree must be non-negative");

    KnotGrid grid;
    grid.lo = lo;
    grid.hi = hi;
    grid.intervals = intervals;
    grid.degree = degree;
    const double h = (hi - lo) / intervals;
    grid.knots.resize(static_cast<std::size_t>(intervals + 2 * degree + 1));
    for (int i = 0; i < intervals + 2 * degree + 1; ++i)
        grid.knots[static_cast<std::size_t>(i)] = lo + (i - degree) * h;
    // pin the interior endpoints exactly
    grid.knots[static_cast<std::size_t>(degree)] = lo;
    grid.knots[static_cast<std::size_t>(degree + intervals)] = hi;
    return grid;
}

void basis_values_all(const KnotGrid& grid, double x, int max_order, double* out) {
    const int k = grid.degree;
    const int nb = grid.basis_count();
    const double* t = grid.knots.data();
    const int nknots = static_cast<int>(grid.knots.size());

    std::fill(out, out + static_cast<std::size_t>(max_order + 1) * nb, 0.0);
    if (!(x >= t[0] && x < t[nknots - 1])) return;

    // Triangular degree-raising pass; row j holds the degree-j values.
    // Row j has nknots-1-j entries; total storage fits in a small scratch.
    constexpr int kMaxStack = 256;
    double stack_buf[kMaxStack];
    std::vector<double> heap_buf;
    const int row_len = nknots - 1;  // degree-0 row length
    double* rows;
    const std::size_t need = static_cast<std::size_t>(k + 1) * row_len;
    if (need <= kMaxStack) {
        rows = stack_buf;
    } else {
        heap_buf.resize(need);
        rows = heap_buf.data();
    }
    auto row = [&](int j) { return rows + static_cast<std::size_t>(j) * row_len; };

    double* r0 = row(0);
    for (int i = 0; i < row_len; ++i) r0[i] = (x >= t[i] && x < t[i + 1]) ? 1.0 : 0.0;
    for (int j = 1; j <= k; ++j) {
        const double* prev = row(j - 1);
        double* cur = row(j);
        for (int i = 0; i < row_len - j; ++i) {
            double v = 0.0;
            const double dl = t[i + j] - t[i];
            if (dl > 0.0) v += (x - t[i]) / dl * prev[i];
            const double dr = t[i + j + 1] - t[i + 1];
            if (dr > 0.0) v += (t[i + j + 1] - x) / dr * prev[i + 1];
            cur[i] = v;
        }
    }
    std::memcpy(out, row(k), sizeof(double) * nb);

    // Derivative rows: m-fold difference of the degree-(k-m) row.
    double work_a[kMaxStack], work_b[kMaxStack];
    std::vector<double> heap_a, heap_b;
    double *wa = work_a, *wb = work_b;
    if (row_len > kMaxStack) {
        heap_a.resize(static_cast<std::size_t>(row_len));
        heap_b.resize(static_cast<std::size_t>(row_len));
        wa = heap_a.data();
        wb = heap_b.data();
    }
    for (int m = 1; m <= max_order; ++m) {
        if (m > k) break;  // higher orders stay zero
        int len = row_len - (k - m);
        std::memcpy(wa, row(k - m), sizeof(double) * len);
        for (int j = k - m; j < k; ++j) {
            const double factor = j + 1;
            for (int i = 0; i < len - 1; ++i) {
                double v = 0.0;
                const double dl = t[i + j + 1] - t[i];
                if (dl > 0.0) v += wa[i] / dl;
                const double dr = t[i + j + 2] - t[i + 1];
                if (dr > 0.0) v -= wa[i + 1] / dr;
                wb[i] = factor * v;
            }
            --len;
            std::swap(wa, wb);
        }
        std::memcpy(out + static_cast<std::size_t>(m) * nb, wa, sizeof(double) * nb);
    }
}

std::vector<double> basis_values(const KnotGrid& grid, double x, int derivative_order) {
    if (derivative_order < 0 || derivative_order > grid.degree)
        throw std::invalid_argument("basis_values: derivative_order exceeds spline degree");
    if (!std::isfinite(x)) throw std::invalid_argument("basis_values: x must be finite");
    std::vector<double> all(static_cast<std::size_t>(derivative_order + 1) * grid.basis_count());
    basis_values_all(grid, x, derivative_order, all.data());
    return std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(derivative_order) * grid.basis_count(),
                               all.end());
}

double spline_eval(const KnotGrid& grid, const SplineCoefficients& coeffs, double x) {
    return spline_eval_derivative(grid, coeffs, x, 0);
}

double spline_eval_derivative(const KnotGrid& grid, const SplineCoefficients& coeffs, double x,
                              int derivative_order) {
    const int nb = grid.basis_count();
    std::vector<double> vals(static_cast<std::size_t>(derivative_order + 1) * nb);
    basis_values_all(grid, x, derivative_order, vals.data());
    const double* last = vals.data() + static_cast<std::size_t>(derivative_order) * nb;
    double acc = 0.0;
    for (int i = 0; i < nb; ++i) acc += coeffs.values[static_cast<std::size_t>(i)] * last[i];
    return acc;
}

namespace detail {

int refit_sample_count(int basis_count) { return std::max(10 * basis_count, 200); }

SplineCoefficients fit_spline(const KnotGrid& grid, const std::vector<double>& xs,
                              const std::vector<double>& ys) {
    const int nb = grid.basis_count();
    const int n = static_cast<int>(xs.size());
    Eigen::MatrixXd design(n, nb);
    std::vector<double> basis_row(static_cast<std::size_t>(nb));
    for (int r = 0; r < n; ++r) {
        basis_values_all(grid, xs[static_cast<std::size_t>(r)], 0, basis_row.data());
        for (int c = 0; c < nb; ++c) design(r, c) = basis_row[static_cast<std::size_t>(c)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < nb)
        throw NumericalError("fit_spline: rank-deficient design matrix (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(nb) + ")");
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
    Eigen::VectorXd sol = qr.solve(rhs);
    SplineCoefficients out;
    out.values.assign(sol.data(), sol.data() + nb);
    return out;
}

}  // namespace detail

std::pair<KnotGrid, SplineCoefficients> extend_grid(const KnotGrid& grid,
                                                    const SplineCoefficients& coeffs,
                                                    int new_intervals) {
    if (new_intervals < grid.intervals)
        throw std::invalid_argument("extend_grid: new_intervals must not shrink the grid");
    if (static_cast<int>(coeffs.values.size()) != grid.basis_count())
        throw std::invalid_argument("extend_grid: coefficient count does not match grid");

    KnotGrid fine = build_grid(grid.lo, grid.hi, new_intervals, grid.degree);
    const int n = detail::refit_sample_count(fine.basis_count());
    std::vector<double> xs(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // keep samples strictly inside so the half-open convention at the far
        // extended knot never bites
        double x = grid.lo + (grid.hi - grid.lo) * (i + 0.5) / n;
        xs[static_cast<std::size_t>(i)] = x;
        ys[static_cast<std::size_t>(i)] = spline_eval(grid, coeffs, x);
    }
    SplineCoefficients refit = detail::fit_spline(fine, xs, ys);
    return {std::move(fine), std::move(refit)};
}

}  // namespace fbkan
