#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "fbkan/problems.hpp"

using namespace fbkan;

namespace {

constexpr double kPi = std::numbers::pi;

Jet<double> to_jet(const JetValue& j, int dim) {
    Jet<double> out;
    out.dim = dim;
    out.value = j.value;
    for (int a = 0; a < dim; ++a) {
        out.first[static_cast<std::size_t>(a)] = j.first[static_cast<std::size_t>(a)];
        out.second[static_cast<std::size_t>(a)] = j.second_diag[static_cast<std::size_t>(a)];
    }
    return out;
}

// residual of the exact solution, via its closed-form jet
double exact_residual(const ProblemSpec& p, std::span<const double> x) {
    return p.residual(x, to_jet(p.exact_jet(x), p.dim));
}

// jet of an arbitrary scalar field by central differences; used to check the
// forcing terms against the exact solution without reusing exact_jet
Jet<double> fd_jet(const std::function<double(std::span<const double>)>& f,
                   std::span<const double> x, int dim, double h1, double h2) {
    std::array<double, kMaxDim> buf{};
    std::copy(x.begin(), x.end(), buf.begin());
    const std::span<const double> xs(buf.data(), static_cast<std::size_t>(dim));
    Jet<double> jet;
    jet.dim = dim;
    jet.value = f(xs);
    for (int a = 0; a < dim; ++a) {
        const double saved = buf[static_cast<std::size_t>(a)];
        buf[static_cast<std::size_t>(a)] = saved + h1;
        const double fp1 = f(xs);
        buf[static_cast<std::size_t>(a)] = saved - h1;
        const double fm1 = f(xs);
        buf[static_cast<std::size_t>(a)] = saved + h2;
        const double fp2 = f(xs);
        buf[static_cast<std::size_t>(a)] = saved - h2;
        const double fm2 = f(xs);
        buf[static_cast<std::size_t>(a)] = saved;
        jet.first[static_cast<std::size_t>(a)] = (fp1 - fm1) / (2.0 * h1);
        jet.second[static_cast<std::size_t>(a)] = (fp2 - 2.0 * jet.value + fm2) / (h2 * h2);
    }
    return jet;
}

void check_self_consistency(const ProblemSpec& p, double tol, std::uint64_t seed) {
    RngStream rng(seed, "self-consistency");
    for (int i = 0; i < 100; ++i) {
        std::array<double, kMaxDim> x{};
        for (int a = 0; a < p.dim; ++a)
            x[static_cast<std::size_t>(a)] =
                rng.next_uniform(p.lo[static_cast<std::size_t>(a)], p.hi[static_cast<std::size_t>(a)]);
        CHECK(std::abs(exact_residual(p, std::span<const double>(x.data(), p.dim))) <= tol);
    }
}

// the tolerance absorbs the h^2 truncation of the stencils; it is well below
// the forcing magnitude of every operator here
void check_forcing_fd(const ProblemSpec& p, double tol, std::uint64_t seed,
                      double h2 = 3e-4) {
    RngStream rng(seed, "forcing-fd");
    for (int i = 0; i < 60; ++i) {
        std::array<double, kMaxDim> x{};
        for (int a = 0; a < p.dim; ++a) {
            const double lo = p.lo[static_cast<std::size_t>(a)];
            const double hi = p.hi[static_cast<std::size_t>(a)];
            const double pad = 1e-3 * (hi - lo);
            x[static_cast<std::size_t>(a)] = rng.next_uniform(lo + pad, hi - pad);
        }
        const std::span<const double> xs(x.data(), static_cast<std::size_t>(p.dim));
        const Jet<double> jet = fd_jet(p.exact, xs, p.dim, 1e-4, h2);
        CHECK(std::abs(p.residual(xs, jet)) <= tol);
    }
}

int count_points(const SampleBuild& build, LossTerm term, ConstraintKind kind) {
    int n = 0;
    for (const ConstraintGroup& g : build.groups)
        if (g.term == term && g.kind == kind) n += g.size();
    return n;
}

}  // namespace

TEST_CASE("registry lists the benchmarks and rejects strangers") {
    const std::vector<std::string> names = problem_names();
    for (const char* want :
         {"data1", "data2", "physics1", "helmholtz", "wave", "ml-laplacian"})
        CHECK(std::find(names.begin(), names.end(), want) != names.end());
    CHECK_THROWS_AS(make_problem("poisson"), std::invalid_argument);
    CHECK_THROWS_AS(make_problem("ml-laplacian", {{"M", 0.0}}), std::invalid_argument);
}

TEST_CASE("data test 1 matches an independent transcription") {
    const ProblemSpec p = make_problem("data1");
    CHECK(p.dim == 1);
    CHECK(p.lo[0] == 0.0);
    CHECK(p.hi[0] == 8.0);
    CHECK_FALSE(p.has_residual());

    const double zero = 0.0;
    CHECK(p.exact(std::span<const double>(&zero, 1)) == doctest::Approx(1.0).epsilon(1e-15));

    RngStream rng(17, "data1-exact");
    for (int i = 0; i < 5; ++i) {
        const double x = rng.next_uniform(0.0, 8.0);
        const double reference = std::exp(std::sin(0.3 * kPi * x * x));
        CHECK(p.exact(std::span<const double>(&x, 1)) ==
              doctest::Approx(reference).epsilon(1e-14));
    }
    for (int i = 0; i <= 400; ++i) {
        const double x = 8.0 * i / 400.0;
        const double v = p.exact(std::span<const double>(&x, 1));
        CHECK(v >= std::exp(-1.0) - 1e-12);
        CHECK(v <= std::exp(1.0) + 1e-12);
    }

    CHECK(p.defaults.widths == std::vector<int>{1, 5, 1});
    CHECK(p.defaults.degree == 3);
    CHECK(p.defaults.lr == doctest::Approx(0.04));
    CHECK(p.defaults.iterations == 4000);
    CHECK(p.defaults.counts.n_data == 1200);
    CHECK(p.defaults.weights.lambda_data > 0.0);
}

TEST_CASE("data test 2 exact surface") {
    const ProblemSpec p = make_problem("data2");
    CHECK(p.dim == 2);
    for (double y : {0.0, 0.3, 0.9}) {
        const std::array<double, 2> x{0.0, y};
        CHECK(p.exact(std::span<const double>(x.data(), 2)) ==
              doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    }
    const std::array<double, 2> mid{0.5, 0.5};
    CHECK(p.exact(std::span<const double>(mid.data(), 2)) ==
          doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    RngStream rng(18, "data2-bound");
    for (int i = 0; i < 300; ++i) {
        const std::array<double, 2> x{rng.next_uniform(0.0, 1.0), rng.next_uniform(0.0, 1.0)};
        CHECK(std::abs(p.exact(std::span<const double>(x.data(), 2))) <= 1.0 + 1e-12);
    }

    CHECK(p.defaults.widths == std::vector<int>{2, 10, 1});
    CHECK(p.defaults.iterations == 2400);
    CHECK(p.defaults.lr == doctest::Approx(0.02));
    CHECK(p.defaults.counts.n_data == 10000);
    CHECK(p.defaults.level_totals == std::vector<int>{4});
}

TEST_CASE("physics test 1 residual and initial condition") {
    const ProblemSpec p = make_problem("physics1");
    CHECK(p.dim == 1);
    CHECK(p.lo[0] == -4.0);
    CHECK(p.hi[0] == 4.0);

    const double zero = 0.0;
    CHECK(p.exact(std::span<const double>(&zero, 1)) == doctest::Approx(0.0).scale(1.0));
    const double x8 = kPi / 8.0;
    CHECK(p.exact(std::span<const double>(&x8, 1)) == doctest::Approx(1.0).epsilon(1e-12));

    check_self_consistency(p, 1e-8, 21);
    check_forcing_fd(p, 5e-3, 22);

    CHECK(p.defaults.widths == std::vector<int>{1, 10, 1});
    CHECK(p.defaults.counts.n_r == 400);
    CHECK(p.defaults.counts.n_ic == 1);
    CHECK(p.defaults.weights.lambda_r == doctest::Approx(1.0 / 40.0));
    CHECK(p.defaults.weights.lambda_ic == doctest::Approx(1.0));
    CHECK(p.defaults.resample_residual);
    CHECK(p.defaults.grid_values == std::vector<int>{5, 10, 15, 20});
    CHECK(p.defaults.grid_iterations == std::vector<int>{0, 1000, 2000, 3000});

    const SampleBuild samples = make_sample_set(p, 0);
    CHECK(count_points(samples, LossTerm::Residual, ConstraintKind::Jet) == 400);
    CHECK(count_points(samples, LossTerm::Ic, ConstraintKind::Value) == 1);
    for (const ConstraintGroup& g : samples.groups)
        if (g.term == LossTerm::Ic) {
            CHECK(g.points == std::vector<double>{0.0});
            CHECK(g.aux.empty());  // empty targets mean zeros
        }
}

TEST_CASE("helmholtz exact solution and variants") {
    const ProblemSpec p44 = make_problem("helmholtz");
    CHECK(p44.dim == 2);
    for (double t : {-1.0, -0.25, 0.5, 1.0}) {
        for (const std::array<double, 2> edge :
             {std::array<double, 2>{-1.0, t}, std::array<double, 2>{1.0, t},
              std::array<double, 2>{t, -1.0}, std::array<double, 2>{t, 1.0}})
            CHECK(std::abs(p44.exact(std::span<const double>(edge.data(), 2))) <= 1e-12);
    }
    check_self_consistency(p44, 1e-8, 23);
    check_forcing_fd(p44, 2e-2, 24);

    const ProblemSpec p14 =
        make_problem("helmholtz", {{"a1", 1.0}, {"a2", 4.0}});
    const std::array<double, 2> probe{0.5, 0.125};
    CHECK(p14.exact(std::span<const double>(probe.data(), 2)) ==
          doctest::Approx(1.0).epsilon(1e-12));
    check_self_consistency(p14, 1e-8, 25);

    check_self_consistency(make_problem("helmholtz", {{"a1", 6.0}, {"a2", 6.0}}), 1e-7, 26);
    check_self_consistency(make_problem("helmholtz", {{"a1", 8.0}, {"a2", 8.0}}), 1e-7, 27);

    CHECK(p44.defaults.counts.n_r == 800);
    CHECK(p44.defaults.counts.n_bc == 400);
    CHECK(p44.defaults.weights.lambda_r == doctest::Approx(0.01));
    CHECK(p44.defaults.weights.lambda_bc == doctest::Approx(1.0));
    CHECK(p44.defaults.lr == doctest::Approx(0.005));
    CHECK(p44.defaults.degree == 5);
    CHECK(p44.defaults.iterations == 10000);
    CHECK(make_problem("helmholtz", {{"a1", 6.0}, {"a2", 6.0}}).defaults.iterations == 30000);

    const SampleBuild samples = make_sample_set(p44, 1);
    CHECK(count_points(samples, LossTerm::Residual, ConstraintKind::Jet) == 800);
    CHECK(count_points(samples, LossTerm::Bc, ConstraintKind::Value) == 400);
    for (const ConstraintGroup& g : samples.groups)
        if (g.term == LossTerm::Bc)
            for (int i = 0; i < g.size(); ++i) {
                const double bx = g.points[static_cast<std::size_t>(i) * 2];
                const double by = g.points[static_cast<std::size_t>(i) * 2 + 1];
                const bool on_edge = std::abs(std::abs(bx) - 1.0) <= 1e-12 ||
                                     std::abs(std::abs(by) - 1.0) <= 1e-12;
                CHECK(on_edge);
            }
}

TEST_CASE("wave equation constraints") {
    const ProblemSpec p = make_problem("wave");
    CHECK(p.dim == 2);
    check_self_consistency(p, 1e-7, 28);
    check_forcing_fd(p, 5e-3, 29);

    // f(x, 0) equals the stated profile, f_t(x, 0) vanishes
    RngStream rng(30, "wave-ic");
    for (int i = 0; i < 50; ++i) {
        const std::array<double, 2> x{rng.next_uniform(0.0, 1.0), 0.0};
        const std::span<const double> xs(x.data(), 2);
        const double profile = std::sin(kPi * x[0]) + 0.5 * std::sin(4.0 * kPi * x[0]);
        CHECK(p.exact(xs) == doctest::Approx(profile).epsilon(1e-12).scale(1.0));
        CHECK(p.exact_jet(xs).first[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }

    CHECK(p.defaults.widths == std::vector<int>{2, 10, 1});
    CHECK(p.defaults.degree == 5);
    CHECK(p.defaults.grid_values == std::vector<int>{10});
    CHECK(p.defaults.lr == doctest::Approx(0.001));
    CHECK(p.defaults.iterations == 60000);
    CHECK(p.defaults.counts.n_r == 1000);
    CHECK(p.defaults.counts.n_ic == 100);
    CHECK(p.defaults.counts.n_bc == 200);

    const ProblemSpec fast = make_problem("wave", {{"c", 2.0}});
    CHECK(fast.defaults.widths == std::vector<int>{2, 10, 10, 1});
    CHECK(fast.defaults.lr == doctest::Approx(0.0005));
    CHECK(fast.defaults.iterations == 120000);
    CHECK(fast.defaults.counts.n_r == 1200);
    check_self_consistency(fast, 1e-7, 31);

    const SampleBuild samples = make_sample_set(p, 2);
    CHECK(count_points(samples, LossTerm::Residual, ConstraintKind::Jet) == 1000);
    CHECK(count_points(samples, LossTerm::Bc, ConstraintKind::Value) == 200);
    CHECK(count_points(samples, LossTerm::Ic, ConstraintKind::Value) == 100);
    CHECK(count_points(samples, LossTerm::Ic, ConstraintKind::Jet) == 100);
    for (const ConstraintGroup& g : samples.groups) {
        if (g.term == LossTerm::Ic) {
            for (int i = 0; i < g.size(); ++i)
                CHECK(g.points[static_cast<std::size_t>(i) * 2 + 1] == 0.0);
            if (g.kind == ConstraintKind::Jet) {
                REQUIRE(g.fn.valid());
                // the rate functional annihilates the exact jet at t = 0
                for (int i = 0; i < g.size(); ++i) {
                    const std::span<const double> xs(
                        g.points.data() + static_cast<std::size_t>(i) * 2, 2);
                    CHECK(std::abs(g.fn(xs, to_jet(p.exact_jet(xs), 2))) <= 1e-12);
                }
            }
        }
        if (g.term == LossTerm::Bc)
            for (int i = 0; i < g.size(); ++i) {
                const double bx = g.points[static_cast<std::size_t>(i) * 2];
                CHECK((std::abs(bx) <= 1e-12 || std::abs(bx - 1.0) <= 1e-12));
            }
    }
}

TEST_CASE("multiscale laplacian family") {
    const ProblemSpec p5 = make_problem("ml-laplacian", {{"M", 5.0}});
    check_self_consistency(p5, 1e-6, 32);
    // the 32-pi mode needs a finer stencil to keep the h^2 truncation small
    check_forcing_fd(p5, 5e-2, 33, 5e-5);

    RngStream rng(34, "ml-edge");
    for (int i = 0; i < 40; ++i) {
        const double t = rng.next_uniform(0.0, 1.0);
        for (const std::array<double, 2> edge :
             {std::array<double, 2>{0.0, t}, std::array<double, 2>{1.0, t},
              std::array<double, 2>{t, 0.0}, std::array<double, 2>{t, 1.0}})
            CHECK(std::abs(p5.exact(std::span<const double>(edge.data(), 2))) <= 1e-12);
    }

    const ProblemSpec p1 = make_problem("ml-laplacian", {{"M", 1.0}});
    const std::array<double, 2> q{0.25, 0.25};
    CHECK(p1.exact(std::span<const double>(q.data(), 2)) ==
          doctest::Approx(1.0).epsilon(1e-12));

    CHECK(p5.defaults.widths == std::vector<int>{2, 10, 1});
    CHECK(p5.defaults.degree == 5);
    CHECK(p5.defaults.lr == doctest::Approx(0.005));
    CHECK(p5.defaults.iterations == 30000);
    CHECK(p5.defaults.counts.n_r == 800);
    CHECK(p5.defaults.counts.n_bc == 400);
    CHECK(p5.defaults.weights.lambda_r == doctest::Approx(0.001));
    CHECK(p5.defaults.weights.lambda_bc == doctest::Approx(1.0));
}

TEST_CASE("problem models follow the defaults") {
    const ProblemSpec data1 = make_problem("data1");
    const FbkanModel m1 = build_problem_model(data1, 0);
    CHECK(m1.param_count() == 400);  // 4 subdomains x [1,5,1] with g=5, k=3
    CHECK(m1.input_dim() == 1);
    CHECK(m1.decomposition.levels.size() == 1);
    CHECK(m1.decomposition.levels[0].subdomain_count() == 4);

    const ProblemSpec helm = make_problem("helmholtz");
    const FbkanModel m2 = build_problem_model(helm, 0);
    // per network: 20 edges of 12 params in layer 0, 10 edges in layer 1
    CHECK(m2.param_count() == 1440);
    CHECK(m2.decomposition.levels[0].dims[0].centers.size() == 2);
    CHECK(m2.decomposition.levels[0].dims[1].centers.size() == 2);

    ProblemSpec multi = make_problem("ml-laplacian", {{"M", 5.0}});
    multi.defaults.level_totals = {1, 4, 16};
    const FbkanModel m3 = build_problem_model(multi, 0);
    REQUIRE(m3.decomposition.levels.size() == 3);
    CHECK(m3.decomposition.levels[0].subdomain_count() == 1);
    CHECK(m3.decomposition.levels[1].subdomain_count() == 4);
    CHECK(m3.decomposition.levels[2].subdomain_count() == 16);
}

TEST_CASE("test grids cover the domain") {
    const ProblemSpec d1 = make_problem("data1");
    const std::vector<double> g1 = test_grid(d1);
    REQUIRE(g1.size() == 1000);
    CHECK(g1.front() == doctest::Approx(0.0).scale(1.0));
    CHECK(g1.back() == doctest::Approx(8.0));
    CHECK(std::is_sorted(g1.begin(), g1.end()));

    const ProblemSpec helm = make_problem("helmholtz");
    const std::vector<double> g2 = test_grid(helm);
    REQUIRE(g2.size() == 2 * 100 * 100);
    for (std::size_t i = 0; i < g2.size(); ++i) {
        CHECK(g2[i] >= -1.0 - 1e-12);
        CHECK(g2[i] <= 1.0 + 1e-12);
    }
}

TEST_CASE("sample sets are deterministic and noise is reported") {
    const ProblemSpec clean = make_problem("data1");
    const SampleBuild a = make_sample_set(clean, 4);
    const SampleBuild b = make_sample_set(clean, 4);
    REQUIRE(a.groups.size() == b.groups.size());
    for (std::size_t i = 0; i < a.groups.size(); ++i) {
        CHECK(a.groups[i].points == b.groups[i].points);
        CHECK(a.groups[i].aux == b.groups[i].aux);
    }
    CHECK(a.mean_relative_noise == 0.0);

    const SampleBuild c = make_sample_set(clean, 5);
    CHECK(c.groups[0].points != a.groups[0].points);

    ProblemSpec noisy = make_problem("data1");
    noisy.defaults.noise_sigma = 0.5;
    const SampleBuild d = make_sample_set(noisy, 4);
    CHECK(d.mean_relative_noise > 0.0);
    CHECK(d.groups[0].points == a.groups[0].points);  // noise only moves targets
    CHECK(d.groups[0].aux != a.groups[0].aux);
}

TEST_CASE("residual resampling leaves other groups alone") {
    const ProblemSpec p = make_problem("physics1");
    SampleBuild build = make_sample_set(p, 6);
    std::vector<ConstraintGroup> groups = build.groups;

    resample_residual_points(p, groups, 6, 12);
    std::vector<double> first_draw;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].term == LossTerm::Residual) {
            CHECK(groups[i].points != build.groups[i].points);
            CHECK(groups[i].size() == build.groups[i].size());
            first_draw = groups[i].points;
        } else {
            CHECK(groups[i].points == build.groups[i].points);
            CHECK(groups[i].aux == build.groups[i].aux);
        }
    }

    std::vector<ConstraintGroup> again = build.groups;
    resample_residual_points(p, again, 6, 12);
    for (std::size_t i = 0; i < again.size(); ++i)
        if (again[i].term == LossTerm::Residual) CHECK(again[i].points == first_draw);

    std::vector<ConstraintGroup> other = build.groups;
    resample_residual_points(p, other, 6, 13);
    for (std::size_t i = 0; i < other.size(); ++i)
        if (other[i].term == LossTerm::Residual) CHECK(other[i].points != first_draw);
}
