#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbkan/bspline.hpp"

namespace fbkan {

struct GridSpec {
    double lo = -1.0;
    double hi = 1.0;
    int intervals = 5;
    int degree = 3;
};

// One KAN layer: fan_in x fan_out trainable activations. Every input unit
// carries its own knot grid (shared by the unit's outgoing edges); all grids
// of a layer share (intervals, degree) so edges have equal parameter blocks.
struct KanLayer {
    int fan_in = 0;
    int fan_out = 0;
    std::vector<KnotGrid> grids;   // one per input unit
    std::size_t param_offset = 0;  // into KanNetwork::params

    int basis_count() const { return grids.front().basis_count(); }
    int edge_stride() const { return basis_count() + 2; }  // w_b, w_s, coefficients
    int edge_count() const { return fan_in * fan_out; }
    std::size_t param_count() const {
        return static_cast<std::size_t>(edge_count()) * edge_stride();
    }
    // edge (out unit o, in unit i); block layout [w_b, w_s, c_0..c_{nb-1}]
    std::size_t edge_offset(int o, int i) const {
        return param_offset + static_cast<std::size_t>(o * fan_in + i) * edge_stride();
    }
};

struct KanNetwork {
    std::vector<int> widths;
    std::vector<KanLayer> layers;
    std::vector<double> params;  // layer-major, edge-major, [w_b, w_s, c...] per edge

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    std::size_t param_count() const { return params.size(); }
};

// b(x) = x * sigmoid(x); stable for large |x|.
double base_function(double x);

// b and its first three derivatives.
void base_function_derivs(double x, double out[4]);

// Fresh network with the given per-layer, per-input grid specs.
// Coefficients ~ N(0, 0.1^2), w_s = 1, w_b ~ U(+-sqrt(6/(fan_in+fan_out))).
KanNetwork init_network(const std::vector<int>& widths,
                        const std::vector<std::vector<GridSpec>>& grid_specs, std::uint64_t seed);

// Convenience: explicit grids for the input layer, one shared range for every
// hidden layer.
KanNetwork init_network(const std::vector<int>& widths, const std::vector<GridSpec>& input_grids,
                        const GridSpec& hidden_grid, std::uint64_t seed);

std::vector<double> kan_forward(const KanNetwork& net, std::span<const double> x);

std::size_t param_count(const KanNetwork& net);

// Refines every layer grid to `new_intervals` and refits each edge's
// coefficients so the network function is preserved.
void extend_network_grid(KanNetwork& net, int new_intervals);

std::string serialize_network(const KanNetwork& net);
KanNetwork deserialize_network(const std::string& text);

}  // namespace fbkan
