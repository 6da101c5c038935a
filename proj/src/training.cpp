#include "fbkan/training.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fbkan/errors.hpp"

namespace fbkan {

TrainSchedule schedule_from(const ProblemDefaults& defaults) {
    TrainSchedule s;
    s.iterations = defaults.iterations;
    s.grid_values = defaults.grid_values;
    s.grid_iterations = defaults.grid_iterations;
    s.lr_initial = defaults.lr;
    s.lr_scale = defaults.lr_scale;
    s.resample_residual = defaults.resample_residual;
    s.metric_every = defaults.metric_every;
    return s;
}

void AdamState::reset(std::size_t n) {
    step = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               double lr) {
    if (params.size() != grad.size())
        throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
    if (state.m.size() != params.size()) state.reset(params.size());

    ++state.step;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g))
            throw NumericalError("adam_step: non-finite gradient entry " + std::to_string(i));
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / b1t;
        const double vhat = state.v[i] / b2t;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

LossParts compute_loss(ModelEval& model, std::span<const ConstraintGroup> groups,
                       const LossWeights& weights) {
    return compute_loss_parts(model, groups, weights);
}

LossParts compute_loss(const FbkanModel& model, std::span<const ConstraintGroup> groups,
                       const LossWeights& weights) {
    FbkanEval eval(model);
    return compute_loss_parts(eval, groups, weights);
}

std::vector<double> sample_uniform(std::span<const double> lo, std::span<const double> hi, int n,
                                   RngStream& rng) {
    if (n < 1) throw std::invalid_argument("sample_uniform: n must be positive");
    if (lo.size() != hi.size() || lo.empty())
        throw std::invalid_argument("sample_uniform: inconsistent box");
    for (std::size_t a = 0; a < lo.size(); ++a)
        if (!(hi[a] > lo[a])) throw std::invalid_argument("sample_uniform: degenerate box");
    const int d = static_cast<int>(lo.size());
    std::vector<double> pts(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a)
            pts[static_cast<std::size_t>(i) * d + a] =
                rng.next_uniform(lo[static_cast<std::size_t>(a)], hi[static_cast<std::size_t>(a)]);
    return pts;
}

NoiseResult add_noise(std::span<const double> targets, double sigma, RngStream& rng) {
    if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be non-negative");
    NoiseResult out;
    out.targets.assign(targets.begin(), targets.end());
    if (sigma == 0.0 || targets.empty()) return out;
    double abs_clean = 0.0;
    double abs_noise = 0.0;
    for (std::size_t i = 0; i < out.targets.size(); ++i) {
        const double eps = sigma * rng.next_normal();
        abs_clean += std::abs(targets[i]);
        abs_noise += std::abs(eps);
        out.targets[i] += eps;
    }
    if (abs_clean > 0.0) out.mean_relative_noise = abs_noise / abs_clean;
    return out;
}

double relative_l2(std::span<const double> prediction, std::span<const double> truth) {
    if (prediction.size() != truth.size() || truth.empty())
        throw std::invalid_argument("relative_l2: length mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = prediction[i] - truth[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2: zero-norm truth");
    return std::sqrt(num / den);
}

namespace {

void validate_schedule(const TrainSchedule& s) {
    if (s.iterations < 0) throw std::invalid_argument("train: negative iteration count");
    if (s.grid_values.empty() || s.grid_values.size() != s.grid_iterations.size())
        throw std::invalid_argument("train: grid schedule shape mismatch");
    if (s.grid_iterations.front() != 0)
        throw std::invalid_argument("train: grid schedule must start at iteration 0");
    for (std::size_t i = 1; i < s.grid_values.size(); ++i) {
        if (s.grid_values[i] < s.grid_values[i - 1])
            throw std::invalid_argument("train: grid values must be nondecreasing");
        if (s.grid_iterations[i] <= s.grid_iterations[i - 1])
            throw std::invalid_argument("train: grid iterations must be strictly increasing");
    }
}

double model_rel_l2(const ProblemSpec& problem, const std::vector<double>& grid,
                    std::vector<double>& pred, std::vector<double>& truth, FbkanEval& eval) {
    const int d = problem.dim;
    const int n = static_cast<int>(grid.size()) / d;
    pred.resize(static_cast<std::size_t>(n));
    truth.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::span<const double> x(grid.data() + static_cast<std::size_t>(i) * d,
                                        static_cast<std::size_t>(d));
        pred[static_cast<std::size_t>(i)] = eval.value(x);
        truth[static_cast<std::size_t>(i)] = problem.exact(x);
    }
    return relative_l2(pred, truth);
}

}  // namespace

TrainResult train(FbkanModel& model, const ProblemSpec& problem, const TrainSchedule& schedule,
                  const LossWeights& weights, std::uint64_t seed,
                  const TrainCallbacks& callbacks) {
    validate_schedule(schedule);
    TrainResult result;
    if (schedule.iterations == 0) return result;

    SampleBuild samples = make_sample_set(problem, seed);
    result.mean_relative_noise = samples.mean_relative_noise;

    const std::vector<double> grid_pts = test_grid(problem);
    std::vector<double> pred, truth;

    FbkanWorkspace ws;
    ws.bind(model);
    FbkanEval eval(model);

    std::vector<double> theta = model.flat_parameters();
    std::vector<double> grad;
    AdamState adam;
    adam.reset(theta.size());

    double lr = schedule.lr_initial;
    int grid_now = schedule.grid_values.front();
    std::size_t next_event = 1;
    result.history.reserve(static_cast<std::size_t>(schedule.iterations));

    for (int t = 0; t < schedule.iterations; ++t) {
        // grid-extension event: refit every network on the finer grid, scale
        // the learning rate, restart the optimizer moments
        if (next_event < schedule.grid_iterations.size() &&
            t == schedule.grid_iterations[next_event]) {
            const int g_new = schedule.grid_values[next_event];
            for (auto& level : model.networks)
                for (auto& net : level) extend_network_grid(net, g_new);
            grid_now = g_new;
            lr *= schedule.lr_scale;
            theta = model.flat_parameters();
            adam.reset(theta.size());
            ws.bind(model);
            ++next_event;
        }

        if (schedule.resample_residual)
            resample_residual_points(problem, samples.groups, seed, t);

        LossParts parts;
        try {
            parts = loss_gradient(model, samples.groups, weights, grad, ws);
            adam_step(adam, theta, grad, lr);
        } catch (const NumericalError& e) {
            throw NumericalError("iteration " + std::to_string(t) + ": " + e.what());
        }
        model.set_flat_parameters(theta);

        MetricRow row;
        row.iteration = t;
        row.lr = lr;
        row.grid = grid_now;
        row.loss_total = parts.total;
        row.loss_ic = parts.ic;
        row.loss_bc = parts.bc;
        row.loss_r = parts.residual;
        row.loss_data = parts.data;
        const bool measure = (t % schedule.metric_every == 0) || (t == schedule.iterations - 1);
        row.rel_l2 = measure ? model_rel_l2(problem, grid_pts, pred, truth, eval)
                             : std::numeric_limits<double>::quiet_NaN();
        if (measure) result.final_rel_l2 = row.rel_l2;
        result.history.push_back(row);
        if (callbacks.on_metric) callbacks.on_metric(row);
    }
    return result;
}

}  // namespace fbkan
