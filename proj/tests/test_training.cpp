#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "fbkan/errors.hpp"
#include "fbkan/training.hpp"

using namespace fbkan;

namespace {

constexpr double kPi = std::numbers::pi;

// small data-only problem on [-1,1]; keeps hidden activations well inside
// the hidden grid range so extension comparisons are meaningful
ProblemSpec tiny_problem(int n_data = 200) {
    ProblemSpec p;
    p.name = "unit-data";
    p.dim = 1;
    p.lo = {-1.0};
    p.hi = {1.0};
    p.exact = [](std::span<const double> x) { return std::sin(kPi * x[0]); };

    ConstraintDef def;
    def.term = LossTerm::Data;
    def.kind = ConstraintKind::Value;
    def.sample = [](int n, RngStream& rng, std::vector<double>& out) {
        const std::array<double, 1> lo{-1.0}, hi{1.0};
        out = sample_uniform(lo, hi, n, rng);
    };
    def.target = p.exact;
    p.constraints.push_back(def);

    p.defaults.widths = {1, 5, 1};
    p.defaults.counts.n_data = n_data;
    p.defaults.weights = LossWeights{};
    p.defaults.weights.lambda_data = 1.0;
    p.defaults.lr = 0.02;
    p.defaults.iterations = 50;
    p.defaults.level_totals = {2};
    p.defaults.metric_every = 10;
    return p;
}

}  // namespace

TEST_CASE("schedule_from copies the problem defaults") {
    const ProblemSpec p = make_problem("physics1");
    const TrainSchedule s = schedule_from(p.defaults);
    CHECK(s.iterations == 4000);
    CHECK(s.grid_values == std::vector<int>{5, 10, 15, 20});
    CHECK(s.grid_iterations == std::vector<int>{0, 1000, 2000, 3000});
    CHECK(s.lr_initial == doctest::Approx(0.01));
    CHECK(s.lr_scale == doctest::Approx(0.8));
    CHECK(s.resample_residual);
}

TEST_CASE("adam first step moves by minus lr times sign") {
    AdamState state;
    std::vector<double> params{1.0, -2.0};
    const std::vector<double> grad{0.3, -7.0};
    adam_step(state, params, grad, 0.01);
    CHECK(std::abs(params[0] - (1.0 - 0.01)) <= 1e-6 * 0.01);
    CHECK(std::abs(params[1] - (-2.0 + 0.01)) <= 1e-6 * 0.01);
    CHECK(state.step == 1);
}

TEST_CASE("adam leaves parameters alone on zero gradient") {
    AdamState state;
    std::vector<double> params{0.5, 1.5, -0.25};
    const std::vector<double> zeros(3, 0.0);
    adam_step(state, params, zeros, 0.1);
    CHECK(params == std::vector<double>{0.5, 1.5, -0.25});
    CHECK(state.step == 1);
}

TEST_CASE("adam matches a scalar oracle over two steps") {
    AdamState state;
    std::vector<double> params{0.7};
    const std::vector<double> grad{1.3};
    adam_step(state, params, grad, 0.05);
    adam_step(state, params, grad, 0.05);

    // hand-rolled scalar Adam with the same constants
    double m = 0.0, v = 0.0, x = 0.7;
    for (int t = 1; t <= 2; ++t) {
        m = 0.9 * m + 0.1 * 1.3;
        v = 0.999 * v + 0.001 * 1.3 * 1.3;
        const double mhat = m / (1.0 - std::pow(0.9, t));
        const double vhat = v / (1.0 - std::pow(0.999, t));
        x -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
    }
    CHECK(params[0] == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients") {
    AdamState state;
    std::vector<double> params{1.0};
    const std::vector<double> grad{std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(adam_step(state, params, grad, 0.01), NumericalError);
}

TEST_CASE("data loss vanishes for the exact solution") {
    const ProblemSpec p = make_problem("data1");
    const SampleBuild samples = make_sample_set(p, 7);
    AnalyticEval eval(p.dim, p.exact_jet);
    const LossParts parts = compute_loss(eval, samples.groups, p.defaults.weights);
    CHECK(parts.data <= 1e-24);
    CHECK(parts.total <= 1e-24);
}

TEST_CASE("zero model data loss equals the mean squared target") {
    ProblemSpec p = make_problem("data1");
    p.defaults.counts.n_data = 300;
    FbkanModel model = build_problem_model(p, 1);
    std::vector<double> theta(model.param_count(), 0.0);
    model.set_flat_parameters(theta);

    const SampleBuild samples = make_sample_set(p, 3);
    const LossParts parts = compute_loss(model, samples.groups, p.defaults.weights);

    double direct = 0.0;
    for (const ConstraintGroup& g : samples.groups)
        for (double y : g.aux) direct += y * y;
    direct /= 300.0;
    CHECK(parts.data == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("exact helmholtz solution annihilates residual and boundary losses") {
    const ProblemSpec p = make_problem("helmholtz");
    const SampleBuild samples = make_sample_set(p, 11);
    AnalyticEval eval(p.dim, p.exact_jet);
    const LossParts parts = compute_loss(eval, samples.groups, p.defaults.weights);
    CHECK(parts.residual <= 1e-8);
    CHECK(parts.bc <= 1e-12);
}

TEST_CASE("loss is invariant under sample permutation") {
    const ProblemSpec p = make_problem("helmholtz");
    FbkanModel model = build_problem_model(p, 5);
    SampleBuild samples = make_sample_set(p, 5);
    const LossParts before = compute_loss(model, samples.groups, p.defaults.weights);

    for (ConstraintGroup& g : samples.groups) {
        const int n = g.size();
        const int d = g.dim;
        for (int i = 0, j = n - 1; i < j; ++i, --j) {
            for (int a = 0; a < d; ++a)
                std::swap(g.points[static_cast<std::size_t>(i) * d + a],
                          g.points[static_cast<std::size_t>(j) * d + a]);
            if (!g.aux.empty()) std::swap(g.aux[static_cast<std::size_t>(i)],
                                          g.aux[static_cast<std::size_t>(j)]);
        }
    }
    const LossParts after = compute_loss(model, samples.groups, p.defaults.weights);
    CHECK(after.total == doctest::Approx(before.total).epsilon(1e-12));
    CHECK(after.residual == doctest::Approx(before.residual).epsilon(1e-12).scale(1.0));
    CHECK(after.bc == doctest::Approx(before.bc).epsilon(1e-12).scale(1.0));
}

TEST_CASE("uniform sampling statistics and determinism") {
    const std::array<double, 1> lo{0.0}, hi{8.0};
    RngStream rng(9, "sample");
    const std::vector<double> pts = sample_uniform(lo, hi, 1000, rng);
    double mean = 0.0;
    for (double x : pts) mean += x;
    mean /= 1000.0;
    CHECK(std::abs(mean - 4.0) < 0.25);

    RngStream again(9, "sample");
    CHECK(sample_uniform(lo, hi, 1000, again) == pts);

    const std::array<double, 2> lo2{0.0, 0.0}, hi2{1.0, 1.0};
    RngStream rng2(9, "sample-2d");
    const std::vector<double> box = sample_uniform(lo2, hi2, 200, rng2);
    for (double x : box) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }

    RngStream bad(0, "bad");
    const std::array<double, 1> same{1.0};
    CHECK_THROWS_AS(sample_uniform(same, same, 10, bad), std::invalid_argument);
    CHECK_THROWS_AS(sample_uniform(lo, hi, 0, bad), std::invalid_argument);
}

TEST_CASE("gaussian noise magnitude follows the half-normal mean") {
    std::vector<double> targets(20000, 2.0);
    RngStream rng(13, "noise");
    const double sigma = 0.37;
    const NoiseResult noised = add_noise(targets, sigma, rng);

    double abs_eps = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i)
        abs_eps += std::abs(noised.targets[i] - targets[i]);
    abs_eps /= static_cast<double>(targets.size());
    const double predicted = sigma * std::sqrt(2.0 / kPi);
    CHECK(std::abs(abs_eps - predicted) <= 0.2 * predicted);
    CHECK(noised.mean_relative_noise == doctest::Approx(abs_eps / 2.0).epsilon(1e-12));

    RngStream other(13, "noise-b");
    const NoiseResult different = add_noise(targets, sigma, other);
    CHECK(different.targets != noised.targets);

    RngStream zero(13, "noise");
    const NoiseResult clean = add_noise(targets, 0.0, zero);
    CHECK(clean.targets == targets);
    CHECK(clean.mean_relative_noise == 0.0);
}

TEST_CASE("relative l2 edge cases") {
    const std::vector<double> truth{1.0, -2.0, 3.0};
    CHECK(relative_l2(truth, truth) == 0.0);
    std::vector<double> twice{2.0, -4.0, 6.0};
    CHECK(relative_l2(twice, truth) == doctest::Approx(1.0).epsilon(1e-14));
    const std::vector<double> zeros(3, 0.0);
    CHECK(relative_l2(zeros, truth) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(relative_l2(truth, zeros), std::invalid_argument);
    const std::vector<double> shorter{1.0};
    CHECK_THROWS_AS(relative_l2(shorter, truth), std::invalid_argument);
}

TEST_CASE("zero-iteration training is a no-op") {
    const ProblemSpec p = tiny_problem();
    FbkanModel model = build_problem_model(p, 2);
    const std::vector<double> before = model.flat_parameters();
    TrainSchedule s = schedule_from(p.defaults);
    s.iterations = 0;
    const TrainResult r = train(model, p, s, p.defaults.weights, 2);
    CHECK(r.history.empty());
    CHECK(model.flat_parameters() == before);
}

TEST_CASE("training rejects malformed schedules") {
    const ProblemSpec p = tiny_problem();
    FbkanModel model = build_problem_model(p, 2);
    TrainSchedule s = schedule_from(p.defaults);
    s.iterations = 10;
    s.grid_values = {5, 10};
    s.grid_iterations = {0, 0};
    CHECK_THROWS_AS(train(model, p, s, p.defaults.weights, 2), std::invalid_argument);
    s.grid_iterations = {1, 5};
    CHECK_THROWS_AS(train(model, p, s, p.defaults.weights, 2), std::invalid_argument);
    s.grid_values = {10, 5};
    s.grid_iterations = {0, 5};
    CHECK_THROWS_AS(train(model, p, s, p.defaults.weights, 2), std::invalid_argument);
}

TEST_CASE("data test 1 training drives the loss down 100-fold") {
    const ProblemSpec p = make_problem("data1");
    FbkanModel model = build_problem_model(p, 0);
    const TrainSchedule s = schedule_from(p.defaults);
    REQUIRE(s.iterations == 4000);
    REQUIRE(s.lr_initial == doctest::Approx(0.04));
    const TrainResult r = train(model, p, s, p.defaults.weights, 0);
    REQUIRE(r.history.size() == 4000);
    const double early = r.history[1].loss_total;
    const double late = r.history.back().loss_total;
    CHECK(late <= early / 100.0);
    CHECK(std::isfinite(r.final_rel_l2));
}

TEST_CASE("grid events scale the learning rate and the grid") {
    const ProblemSpec p = tiny_problem();
    FbkanModel model = build_problem_model(p, 3);
    TrainSchedule s = schedule_from(p.defaults);
    s.iterations = 60;
    s.grid_values = {5, 10};
    s.grid_iterations = {0, 30};
    s.lr_scale = 0.8;

    const std::size_t params_before = model.param_count();
    const TrainResult r = train(model, p, s, p.defaults.weights, 3);
    REQUIRE(r.history.size() == 60);
    CHECK(r.history[29].grid == 5);
    CHECK(r.history[30].grid == 10);
    CHECK(r.history[30].lr == doctest::Approx(0.8 * r.history[29].lr).epsilon(1e-14));
    CHECK(model.param_count() > params_before);
}

TEST_CASE("metric rows mark unmeasured iterations with NaN") {
    const ProblemSpec p = tiny_problem();
    FbkanModel model = build_problem_model(p, 4);
    TrainSchedule s = schedule_from(p.defaults);
    s.iterations = 25;
    s.metric_every = 10;
    const TrainResult r = train(model, p, s, p.defaults.weights, 4);
    REQUIRE(r.history.size() == 25);
    for (int t = 0; t < 25; ++t) {
        const bool measured = (t % 10 == 0) || t == 24;
        CHECK(std::isnan(r.history[static_cast<std::size_t>(t)].rel_l2) == !measured);
    }
    CHECK(r.final_rel_l2 == r.history.back().rel_l2);
}

TEST_CASE("training is bit-for-bit deterministic") {
    ProblemSpec p = make_problem("physics1");
    p.defaults.counts.n_r = 25;
    TrainSchedule s = schedule_from(p.defaults);
    s.iterations = 40;
    s.grid_values = {5};
    s.grid_iterations = {0};
    REQUIRE(s.resample_residual);

    auto run_once = [&]() {
        FbkanModel model = build_problem_model(p, 6);
        return train(model, p, s, p.defaults.weights, 6);
    };
    const TrainResult a = run_once();
    const TrainResult b = run_once();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss_total == b.history[i].loss_total);
        CHECK(a.history[i].loss_r == b.history[i].loss_r);
        CHECK(a.history[i].lr == b.history[i].lr);
        const bool both_nan =
            std::isnan(a.history[i].rel_l2) && std::isnan(b.history[i].rel_l2);
        CHECK((both_nan || a.history[i].rel_l2 == b.history[i].rel_l2));
    }
}

TEST_CASE("grid extension of a trained model preserves its output") {
    const ProblemSpec p = tiny_problem();
    FbkanModel model = build_problem_model(p, 8);
    TrainSchedule s = schedule_from(p.defaults);
    s.iterations = 30;
    train(model, p, s, p.defaults.weights, 8);

    FbkanModel extended = model;
    for (auto& level : extended.networks)
        for (auto& net : level) extend_network_grid(net, 10);

    const std::vector<double> grid = test_grid(p);
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const std::span<const double> x(grid.data() + i, 1);
        worst = std::max(worst, std::abs(fbkan_forward(extended, x)[0] -
                                         fbkan_forward(model, x)[0]));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("adam decreases a convex quadratic loss monotonically") {
    // single-edge network, only the spline coefficients are optimized, so the
    // loss is a convex quadratic in the optimized block
    ProblemSpec p = tiny_problem(40);
    p.defaults.widths = {1, 1};
    p.defaults.level_totals = {1};
    FbkanModel model = build_problem_model(p, 9);
    KanNetwork& net = model.networks[0][0];
    const KanLayer& layer = net.layers[0];
    net.params[layer.param_offset] = 0.3;
    net.params[layer.param_offset + 1] = 1.0;

    const SampleBuild samples = make_sample_set(p, 9);
    FbkanWorkspace ws;
    std::vector<double> grad;
    AdamState adam;
    const std::size_t off = layer.param_offset + 2;
    const std::size_t nb = static_cast<std::size_t>(layer.basis_count());

    double prev = compute_loss(model, samples.groups, p.defaults.weights).total;
    for (int step = 0; step < 50; ++step) {
        loss_gradient(model, samples.groups, p.defaults.weights, grad, ws);
        std::vector<double> theta = model.flat_parameters();
        adam_step(adam, std::span<double>(theta.data() + off, nb),
                  std::span<const double>(grad.data() + off, nb), 1e-3);
        model.set_flat_parameters(theta);
        const double now = compute_loss(model, samples.groups, p.defaults.weights).total;
        CHECK(now <= prev + 1e-15);
        prev = now;
    }
}
