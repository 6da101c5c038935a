#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fbkan/problems.hpp"

namespace fbkan {

struct TrainSchedule {
    int iterations = 0;
    std::vector<int> grid_values{5};      // nondecreasing; first = initial grid
    std::vector<int> grid_iterations{0};  // strictly increasing, starts at 0
    double lr_initial = 1e-3;
    double lr_scale = 1.0;  // applied at every grid event
    bool resample_residual = false;
    int metric_every = 100;
};

TrainSchedule schedule_from(const ProblemDefaults& defaults);

struct AdamState {
    long long step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void reset(std::size_t n);
};

// Bias-corrected Adam update in place. Throws NumericalError on non-finite
// gradient entries.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               double lr);

// Weighted mean-squared loss over the groups (means of squared residuals per
// term, empty sets contribute zero).
LossParts compute_loss(ModelEval& model, std::span<const ConstraintGroup> groups,
                       const LossWeights& weights);
LossParts compute_loss(const FbkanModel& model, std::span<const ConstraintGroup> groups,
                       const LossWeights& weights);

// n i.i.d. uniform points over the box, row-major n x dim.
std::vector<double> sample_uniform(std::span<const double> lo, std::span<const double> hi, int n,
                                   RngStream& rng);

struct NoiseResult {
    std::vector<double> targets;
    double mean_relative_noise = 0.0;  // mean|eps| / mean|target|
};

NoiseResult add_noise(std::span<const double> targets, double sigma, RngStream& rng);

// ||prediction - truth|| / ||truth||.
double relative_l2(std::span<const double> prediction, std::span<const double> truth);

struct MetricRow {
    int iteration = 0;
    double lr = 0.0;
    int grid = 0;
    double loss_total = 0.0;
    double loss_ic = 0.0;
    double loss_bc = 0.0;
    double loss_r = 0.0;
    double loss_data = 0.0;
    double rel_l2 = 0.0;  // NaN on iterations where it is not measured
};

struct TrainCallbacks {
    std::function<void(const MetricRow&)> on_metric;
};

struct TrainResult {
    std::vector<MetricRow> history;
    double final_rel_l2 = 0.0;
    double mean_relative_noise = 0.0;
};

// Full training loop: Adam over the configured schedule, grid extension with
// refit at each event (learning rate scaled, optimizer moments reset),
// optional residual-point resampling, periodic relative-l2 on the problem's
// test grid. Deterministic for a given (problem, schedule, seed).
TrainResult train(FbkanModel& model, const ProblemSpec& problem, const TrainSchedule& schedule,
                  const LossWeights& weights, std::uint64_t seed,
                  const TrainCallbacks& callbacks = {});

}  // namespace fbkan
