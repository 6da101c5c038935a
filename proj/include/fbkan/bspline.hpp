#pragma once

#include <utility>
#include <vector>

namespace fbkan {

// Uniform knot layout of degree `degree` over [lo, hi] with `intervals`
// sub-intervals. The knot sequence continues the uniform spacing `degree`
// knots past each end, so evaluation slightly outside [lo, hi] stays smooth.
struct KnotGrid {
    double lo = 0.0;
    double hi = 1.0;
    int intervals = 1;
    int degree = 0;
    std::vector<double> knots;  // intervals + 2*degree + 1 entries, strictly increasing

    int basis_count() const { return intervals + degree; }
    double spacing() const { return (hi - lo) / intervals; }
};

struct SplineCoefficients {
    std::vector<double> values;  // length = basis_count of the owning grid
};

KnotGrid build_grid(double lo, double hi, int intervals, int degree);

// All basis values at x for derivative orders 0..max_order, row-major into
// `out` ((max_order+1) x basis_count). Orders above the degree come out zero.
// x outside the extended knot span yields all-zero rows.
void basis_values_all(const KnotGrid& grid, double x, int max_order, double* out);

// Single derivative order; errors when derivative_order exceeds the degree.
std::vector<double> basis_values(const KnotGrid& grid, double x, int derivative_order);

double spline_eval(const KnotGrid& grid, const SplineCoefficients& coeffs, double x);
double spline_eval_derivative(const KnotGrid& grid, const SplineCoefficients& coeffs, double x,
                              int derivative_order);

// Refines the grid to `new_intervals` over the same [lo, hi] and degree and
// refits the coefficients by dense least squares so the represented function
// is preserved.
std::pair<KnotGrid, SplineCoefficients> extend_grid(const KnotGrid& grid,
                                                    const SplineCoefficients& coeffs,
                                                    int new_intervals);

namespace detail {

// Least-squares fit of samples (xs, ys) in the grid's basis. Throws
// NumericalError on a rank-deficient system.
SplineCoefficients fit_spline(const KnotGrid& grid, const std::vector<double>& xs,
                              const std::vector<double>& ys);

// Sample count used by extend_grid for a given target basis count.
int refit_sample_count(int basis_count);

}  // namespace detail

}  // namespace fbkan
