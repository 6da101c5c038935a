#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbkan/kan.hpp"

namespace fbkan {

inline constexpr int kMaxDim = 3;

// Uniform overlapping subdomains on [lo, hi]: centers mu_j = lo + l(j-1)/(L-1),
// half-widths sigma_j = (overlap * l / 2)/(L-1). count == 1 is the trivial
// whole-domain decomposition with weight identically one.
struct Decomposition1D {
    double lo = 0.0;
    double hi = 1.0;
    int count = 1;
    double overlap = 1.9;
    std::vector<double> centers;
    std::vector<double> half_widths;
};

Decomposition1D make_decomposition_1d(double lo, double hi, int count, double overlap);

// Tensor product of per-dimension decompositions. Subdomain indices are
// row-major over dimensions (last dimension fastest).
struct TensorDecomposition {
    std::vector<Decomposition1D> dims;

    int dim() const { return static_cast<int>(dims.size()); }
    int subdomain_count() const;
    int flat_index(std::span<const int> multi) const;
    std::array<int, kMaxDim> multi_index(int flat) const;
};

TensorDecomposition make_tensor_decomposition(std::span<const double> lo, std::span<const double> hi,
                                              std::span<const int> counts, double overlap);

// Splits a total subdomain count into a uniform per-dimension grid
// (e.g. 9 -> 3x3 in 2D). Errors if the count is not a d-th power.
std::vector<int> per_dimension_counts(int total, int dim);

struct MultilevelDecomposition {
    std::vector<TensorDecomposition> levels;
    int level_count() const { return static_cast<int>(levels.size()); }
    int network_count() const;
};

// Normalized partition-of-unity weights at x; sums to one. Raw weights are
// cosine bumps clamped to zero outside |x_i - mu_ij| <= sigma_ij.
std::vector<double> pou_weights(const TensorDecomposition& dec, std::span<const double> x);

// Value and diagonal first/second derivatives of every subdomain weight at x.
// Layout per subdomain: [value, d1[0..d), d2[0..d)]; stride = 1 + 2*dim.
// `active` collects indices with nonzero raw weight. Throws CoverageError
// when every raw weight vanishes.
void pou_weight_jets(const TensorDecomposition& dec, std::span<const double> x,
                     std::vector<double>& out, std::vector<int>& active);

// Per-dimension extent of {x : weight_j(x) > 1e-4} located by dense sampling
// of the global domain (samples_per_dim points per dimension).
struct SubdomainBounds {
    std::array<double, kMaxDim> lo{};
    std::array<double, kMaxDim> hi{};
};

SubdomainBounds subdomain_bounds(const TensorDecomposition& dec, int subdomain,
                                 int samples_per_dim = 1000);

// Decomposition levels plus one KAN per subdomain per level; the trainable
// object. Model output averages the per-level partition-of-unity sums.
struct FbkanModel {
    MultilevelDecomposition decomposition;
    std::vector<std::vector<KanNetwork>> networks;  // [level][subdomain]
    int bounds_samples = 1000;

    int input_dim() const { return decomposition.levels.front().dim(); }
    int output_dim() const { return networks.front().front().output_dim(); }
    std::size_t param_count() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> flat);
};

struct FbkanBuildOptions {
    std::vector<int> widths;
    int grid_intervals = 5;
    int degree = 3;
    GridSpec hidden_grid{-2.0, 2.0, 5, 3};  // intervals/degree overridden per build
    double overlap = 1.9;
    int bounds_samples = 1000;
};

// One network per subdomain per level; input grids span the subdomain bounds.
FbkanModel build_fbkan(const MultilevelDecomposition& dec, const FbkanBuildOptions& options,
                       std::uint64_t seed);

std::vector<double> fbkan_forward(const FbkanModel& model, std::span<const double> x);

std::string serialize_model(const FbkanModel& model);
FbkanModel deserialize_model(const std::string& text);

}  // namespace fbkan
