#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fbkan/diffengine.hpp"
#include "fbkan/rng.hpp"

namespace fbkan {

struct SampleCounts {
    int n_r = 0;
    int n_bc = 0;
    int n_ic = 0;
    int n_data = 0;
};

// Everything needed to run a benchmark out of the box; all of it is plain
// data the harness may override from config.
struct ProblemDefaults {
    std::vector<int> widths;
    int degree = 3;
    std::vector<int> grid_values{5};      // first entry = initial grid
    std::vector<int> grid_iterations{0};  // iteration of each grid value
    double lr = 1e-2;
    double lr_scale = 1.0;
    int iterations = 0;
    LossWeights weights;
    SampleCounts counts;
    bool resample_residual = false;
    std::vector<int> level_totals{4};  // subdomains per decomposition level
    double overlap = 1.9;
    GridSpec hidden{-2.0, 2.0, 5, 3};  // hidden-layer grid range
    double noise_sigma = 0.0;
    int metric_every = 100;
};

// One boundary/initial/data constraint block: a point sampler plus targets.
// Jet-kind constraints additionally carry the functional applied to the jet
// (e.g. a time-derivative initial condition).
struct ConstraintDef {
    LossTerm term = LossTerm::Bc;
    ConstraintKind kind = ConstraintKind::Value;
    JetFunction fn;
    std::function<void(int, RngStream&, std::vector<double>&)> sample;  // fills n x dim
    std::function<double(std::span<const double>)> target;              // null = zeros
};

struct ProblemSpec {
    std::string name;
    int dim = 1;
    std::array<double, kMaxDim> lo{};
    std::array<double, kMaxDim> hi{};
    std::function<double(std::span<const double>)> exact;
    std::function<JetValue(std::span<const double>)> exact_jet;
    JetFunction residual;  // invalid for data-only problems
    std::vector<ConstraintDef> constraints;
    ProblemDefaults defaults;

    bool has_residual() const { return residual.valid(); }
};

ProblemSpec data_test_1();
ProblemSpec data_test_2();
ProblemSpec physics_test_1();
ProblemSpec physics_test_2(double a1, double a2, double kh);
ProblemSpec physics_test_3(double c);
ProblemSpec ml_physics_test_2(int m_scales);

// Name-based registry ("data1", "data2", "physics1", "helmholtz", "wave",
// "ml-laplacian") with per-problem numeric parameters (a1, a2, kh, c, M).
ProblemSpec make_problem(const std::string& name,
                         const std::map<std::string, double>& params = {});
std::vector<std::string> problem_names();

// Fresh model matching the problem defaults: one tensor decomposition per
// entry of level_totals over the problem box, one network per subdomain.
FbkanModel build_problem_model(const ProblemSpec& problem, std::uint64_t seed);

// Uniform interior samples of the problem box, n x dim row-major.
std::vector<double> sample_interior(const ProblemSpec& problem, int n, RngStream& rng);

// Evaluation grid for error metrics: 1000 points in 1D, 100 x 100 in 2D.
std::vector<double> test_grid(const ProblemSpec& problem);

struct SampleBuild {
    std::vector<ConstraintGroup> groups;
    double mean_relative_noise = 0.0;  // of the data targets, when noise is on
};

// Draws every constraint block of the problem with its configured count.
// Deterministic per (problem, seed); data targets get Gaussian noise of the
// problem's noise_sigma.
SampleBuild make_sample_set(const ProblemSpec& problem, std::uint64_t seed);

// Redraws the residual collocation points in place (stream sequence =
// iteration), leaving all other groups untouched.
void resample_residual_points(const ProblemSpec& problem, std::vector<ConstraintGroup>& groups,
                              std::uint64_t seed, int iteration);

}  // namespace fbkan
