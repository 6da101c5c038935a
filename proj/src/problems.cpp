#include "fbkan/problems.hpp"

#include <cmath>
#include <stdexcept>

#include "fbkan/errors.hpp"

namespace fbkan {

namespace {

constexpr double kPi = 3.14159265358979323846;

JetValue jet1(double v, double d1, double d2) {
    JetValue j;
    j.value = v;
    j.first = {d1};
    j.second_diag = {d2};
    return j;
}

JetValue jet2(double v, double dx, double dy, double dxx, double dyy) {
    JetValue j;
    j.value = v;
    j.first = {dx, dy};
    j.second_diag = {dxx, dyy};
    return j;
}

// Uniform sampler over a fixed box, shared by interior and data constraints.
std::function<void(int, RngStream&, std::vector<double>&)> box_sampler(
    int dim, std::array<double, kMaxDim> lo, std::array<double, kMaxDim> hi) {
    return [dim, lo, hi](int n, RngStream& rng, std::vector<double>& pts) {
        pts.resize(static_cast<std::size_t>(n) * dim);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < dim; ++a)
                pts[static_cast<std::size_t>(i) * dim + a] =
                    rng.next_uniform(lo[static_cast<std::size_t>(a)], hi[static_cast<std::size_t>(a)]);
    };
}

// Points on the four edges of a 2D box, cycling over edges so every edge gets
// an equal share; the free coordinate is uniform.
std::function<void(int, RngStream&, std::vector<double>&)> box_edge_sampler(
    std::array<double, kMaxDim> lo, std::array<double, kMaxDim> hi) {
    return [lo, hi](int n, RngStream& rng, std::vector<double>& pts) {
        pts.resize(static_cast<std::size_t>(n) * 2);
        for (int i = 0; i < n; ++i) {
            double* p = pts.data() + static_cast<std::size_t>(i) * 2;
            const int edge = i % 4;
            switch (edge) {
                case 0: p[0] = lo[0]; p[1] = rng.next_uniform(lo[1], hi[1]); break;
                case 1: p[0] = hi[0]; p[1] = rng.next_uniform(lo[1], hi[1]); break;
                case 2: p[1] = lo[1]; p[0] = rng.next_uniform(lo[0], hi[0]); break;
                default: p[1] = hi[1]; p[0] = rng.next_uniform(lo[0], hi[0]); break;
            }
        }
    };
}

int count_for(const ProblemSpec& p, LossTerm term) {
    switch (term) {
        case LossTerm::Ic: return p.defaults.counts.n_ic;
        case LossTerm::Bc: return p.defaults.counts.n_bc;
        case LossTerm::Residual: return p.defaults.counts.n_r;
        case LossTerm::Data: return p.defaults.counts.n_data;
    }
    return 0;
}

}  // namespace

ProblemSpec data_test_1() {
    ProblemSpec p;
    p.name = "data1";
    p.dim = 1;
    p.lo = {0.0};
    p.hi = {8.0};
    p.exact = [](std::span<const double> x) { return std::exp(std::sin(0.3 * kPi * x[0] * x[0])); };
    p.exact_jet = [](std::span<const double> x) {
        const double u = 0.3 * kPi * x[0] * x[0];
        const double du = 0.6 * kPi * x[0];
        const double ddu = 0.6 * kPi;
        const double s = std::sin(u);
        const double c = std::cos(u);
        const double f = std::exp(s);
        const double f1 = f * c * du;
        const double f2 = f * (c * du * c * du - s * du * du + c * ddu);
        return jet1(f, f1, f2);
    };
    ConstraintDef data;
    data.term = LossTerm::Data;
    data.kind = ConstraintKind::Value;
    data.sample = box_sampler(1, p.lo, p.hi);
    data.target = p.exact;
    p.constraints.push_back(std::move(data));

    p.defaults.widths = {1, 5, 1};
    p.defaults.degree = 3;
    p.defaults.grid_values = {5};
    p.defaults.grid_iterations = {0};
    p.defaults.lr = 0.04;
    p.defaults.iterations = 4000;
    p.defaults.weights.lambda_data = 1.0;
    p.defaults.counts.n_data = 1200;
    p.defaults.level_totals = {4};
    return p;
}

ProblemSpec data_test_2() {
    ProblemSpec p;
    p.name = "data2";
    p.dim = 2;
    p.lo = {0.0, 0.0};
    p.hi = {1.0, 1.0};
    p.exact = [](std::span<const double> x) {
        return std::sin(6.0 * kPi * x[0] * x[0]) * std::sin(8.0 * kPi * x[1] * x[1]);
    };
    p.exact_jet = [](std::span<const double> x) {
        const double ux = 6.0 * kPi * x[0] * x[0];
        const double uy = 8.0 * kPi * x[1] * x[1];
        const double dux = 12.0 * kPi * x[0];
        const double duy = 16.0 * kPi * x[1];
        const double g = std::sin(ux);
        const double g1 = std::cos(ux) * dux;
        const double g2 = -std::sin(ux) * dux * dux + std::cos(ux) * 12.0 * kPi;
        const double h = std::sin(uy);
        const double h1 = std::cos(uy) * duy;
        const double h2 = -std::sin(uy) * duy * duy + std::cos(uy) * 16.0 * kPi;
        return jet2(g * h, g1 * h, g * h1, g2 * h, g * h2);
    };
    ConstraintDef data;
    data.term = LossTerm::Data;
    data.kind = ConstraintKind::Value;
    data.sample = box_sampler(2, p.lo, p.hi);
    data.target = p.exact;
    p.constraints.push_back(std::move(data));

    p.defaults.widths = {2, 10, 1};
    p.defaults.degree = 3;
    p.defaults.grid_values = {5};
    p.defaults.grid_iterations = {0};
    p.defaults.lr = 0.02;
    p.defaults.lr_scale = 0.8;
    p.defaults.iterations = 2400;
    p.defaults.weights.lambda_data = 1.0;
    p.defaults.counts.n_data = 10000;
    p.defaults.level_totals = {4};
    return p;
}

ProblemSpec physics_test_1() {
    ProblemSpec p;
    p.name = "physics1";
    p.dim = 1;
    p.lo = {-4.0};
    p.hi = {4.0};
    p.exact = [](std::span<const double> x) { return std::sin(4.0 * x[0]) + std::sin(40.0 * x[0]); };
    p.exact_jet = [](std::span<const double> x) {
        return jet1(std::sin(4.0 * x[0]) + std::sin(40.0 * x[0]),
                    4.0 * std::cos(4.0 * x[0]) + 40.0 * std::cos(40.0 * x[0]),
                    -16.0 * std::sin(4.0 * x[0]) - 1600.0 * std::sin(40.0 * x[0]));
    };
    p.residual = JetFunction([](std::span<const double> x, const auto& j) {
        return j.first[0] - (4.0 * std::cos(4.0 * x[0]) + 40.0 * std::cos(40.0 * x[0]));
    });
    ConstraintDef ic;
    ic.term = LossTerm::Ic;
    ic.kind = ConstraintKind::Value;
    ic.sample = [](int n, RngStream&, std::vector<double>& pts) {
        pts.assign(static_cast<std::size_t>(n), 0.0);
    };
    ic.target = nullptr;  // f(0) = 0
    p.constraints.push_back(std::move(ic));

    p.defaults.widths = {1, 10, 1};
    p.defaults.degree = 3;
    p.defaults.grid_values = {5, 10, 15, 20};
    p.defaults.grid_iterations = {0, 1000, 2000, 3000};
    p.defaults.lr = 0.01;
    p.defaults.lr_scale = 0.8;
    p.defaults.iterations = 4000;
    p.defaults.weights.lambda_r = 1.0 / 40.0;
    p.defaults.weights.lambda_ic = 1.0;
    p.defaults.counts.n_r = 400;
    p.defaults.counts.n_ic = 1;
    p.defaults.resample_residual = true;
    p.defaults.level_totals = {4};
    return p;
}

ProblemSpec physics_test_2(double a1, double a2, double kh) {
    ProblemSpec p;
    p.name = "helmholtz";
    p.dim = 2;
    p.lo = {-1.0, -1.0};
    p.hi = {1.0, 1.0};
    const double w1 = a1 * kPi;
    const double w2 = a2 * kPi;
    p.exact = [w1, w2](std::span<const double> x) {
        return std::sin(w1 * x[0]) * std::sin(w2 * x[1]);
    };
    p.exact_jet = [w1, w2](std::span<const double> x) {
        const double sx = std::sin(w1 * x[0]);
        const double cx = std::cos(w1 * x[0]);
        const double sy = std::sin(w2 * x[1]);
        const double cy = std::cos(w2 * x[1]);
        return jet2(sx * sy, w1 * cx * sy, w2 * sx * cy, -w1 * w1 * sx * sy, -w2 * w2 * sx * sy);
    };
    // forcing built from the exact field, so the residual of the exact
    // solution vanishes identically
    const double kh2 = kh * kh;
    p.residual = JetFunction([w1, w2, kh2](std::span<const double> x, const auto& j) {
        const double q = (kh2 - w1 * w1 - w2 * w2) * std::sin(w1 * x[0]) * std::sin(w2 * x[1]);
        return j.second[1] + j.second[0] + kh2 * j.value - q;
    });
    ConstraintDef bc;
    bc.term = LossTerm::Bc;
    bc.kind = ConstraintKind::Value;
    bc.sample = box_edge_sampler(p.lo, p.hi);
    bc.target = nullptr;  // homogeneous Dirichlet
    p.constraints.push_back(std::move(bc));

    p.defaults.widths = {2, 10, 1};
    p.defaults.degree = 5;
    p.defaults.grid_values = {5};
    p.defaults.grid_iterations = {0};
    p.defaults.lr = 0.005;
    p.defaults.lr_scale = 0.8;
    p.defaults.iterations = (a1 == 6.0 && a2 == 6.0) ? 30000 : 10000;
    p.defaults.weights.lambda_r = 0.01;
    p.defaults.weights.lambda_bc = 1.0;
    p.defaults.counts.n_r = 800;
    p.defaults.counts.n_bc = 400;
    p.defaults.level_totals = {4};
    return p;
}

ProblemSpec physics_test_3(double c) {
    ProblemSpec p;
    p.name = "wave";
    p.dim = 2;  // (x, t)
    p.lo = {0.0, 0.0};
    p.hi = {1.0, 1.0};
    const double cp = c * kPi;
    p.exact = [cp](std::span<const double> x) {
        return std::sin(kPi * x[0]) * std::cos(cp * x[1]) +
               0.5 * std::sin(4.0 * kPi * x[0]) * std::cos(4.0 * cp * x[1]);
    };
    p.exact_jet = [cp](std::span<const double> x) {
        const double s1 = std::sin(kPi * x[0]);
        const double c1 = std::cos(kPi * x[0]);
        const double s4 = std::sin(4.0 * kPi * x[0]);
        const double c4 = std::cos(4.0 * kPi * x[0]);
        const double t1 = std::cos(cp * x[1]);
        const double u1 = std::sin(cp * x[1]);
        const double t4 = std::cos(4.0 * cp * x[1]);
        const double u4 = std::sin(4.0 * cp * x[1]);
        const double v = s1 * t1 + 0.5 * s4 * t4;
        const double dx = kPi * c1 * t1 + 2.0 * kPi * c4 * t4;
        const double dt = -cp * s1 * u1 - 2.0 * cp * s4 * u4;
        const double dxx = -kPi * kPi * s1 * t1 - 8.0 * kPi * kPi * s4 * t4;
        const double dtt = -cp * cp * s1 * t1 - 8.0 * cp * cp * s4 * t4;
        return jet2(v, dx, dt, dxx, dtt);
    };
    const double c2 = c * c;
    p.residual = JetFunction([c2](std::span<const double>, const auto& j) {
        return j.second[1] - c2 * j.second[0];
    });

    ConstraintDef ic_value;
    ic_value.term = LossTerm::Ic;
    ic_value.kind = ConstraintKind::Value;
    ic_value.sample = [](int n, RngStream& rng, std::vector<double>& pts) {
        pts.resize(static_cast<std::size_t>(n) * 2);
        for (int i = 0; i < n; ++i) {
            pts[static_cast<std::size_t>(i) * 2] = rng.next_uniform(0.0, 1.0);
            pts[static_cast<std::size_t>(i) * 2 + 1] = 0.0;
        }
    };
    ic_value.target = [](std::span<const double> x) {
        return std::sin(kPi * x[0]) + 0.5 * std::sin(4.0 * kPi * x[0]);
    };
    p.constraints.push_back(std::move(ic_value));

    ConstraintDef ic_rate;  // df/dt = 0 at t = 0
    ic_rate.term = LossTerm::Ic;
    ic_rate.kind = ConstraintKind::Jet;
    ic_rate.fn = JetFunction([](std::span<const double>, const auto& j) { return j.first[1]; });
    ic_rate.sample = [](int n, RngStream& rng, std::vector<double>& pts) {
        pts.resize(static_cast<std::size_t>(n) * 2);
        for (int i = 0; i < n; ++i) {
            pts[static_cast<std::size_t>(i) * 2] = rng.next_uniform(0.0, 1.0);
            pts[static_cast<std::size_t>(i) * 2 + 1] = 0.0;
        }
    };
    ic_rate.target = nullptr;
    p.constraints.push_back(std::move(ic_rate));

    ConstraintDef bc;  // f(0, t) = f(1, t) = 0
    bc.term = LossTerm::Bc;
    bc.kind = ConstraintKind::Value;
    bc.sample = [](int n, RngStream& rng, std::vector<double>& pts) {
        pts.resize(static_cast<std::size_t>(n) * 2);
        for (int i = 0; i < n; ++i) {
            pts[static_cast<std::size_t>(i) * 2] = (i % 2 == 0) ? 0.0 : 1.0;
            pts[static_cast<std::size_t>(i) * 2 + 1] = rng.next_uniform(0.0, 1.0);
        }
    };
    bc.target = nullptr;
    p.constraints.push_back(std::move(bc));

    const bool deep = c >= 1.75;  // the c = 2 configuration
    p.defaults.widths = deep ? std::vector<int>{2, 10, 10, 1} : std::vector<int>{2, 10, 1};
    p.defaults.degree = 5;
    p.defaults.grid_values = {10};
    p.defaults.grid_iterations = {0};
    p.defaults.lr = deep ? 0.0005 : 0.001;
    p.defaults.iterations = deep ? 120000 : 60000;
    p.defaults.weights.lambda_r = 0.01;
    p.defaults.weights.lambda_ic = 1.0;
    p.defaults.weights.lambda_bc = 1.0;
    p.defaults.counts.n_r = deep ? 1200 : 1000;
    p.defaults.counts.n_ic = 100;
    p.defaults.counts.n_bc = 200;
    p.defaults.level_totals = {4};
    return p;
}

ProblemSpec ml_physics_test_2(int m_scales) {
    if (m_scales < 1) throw std::invalid_argument("ml_physics_test_2: M must be positive");
    ProblemSpec p;
    p.name = "ml-laplacian";
    p.dim = 2;
    p.lo = {0.0, 0.0};
    p.hi = {1.0, 1.0};
    const int m = m_scales;
    p.exact = [m](std::span<const double> x) {
        double v = 0.0;
        for (int i = 1; i <= m; ++i) {
            const double w = std::ldexp(1.0, i) * kPi;  // 2^i * pi
            v += std::sin(w * x[0]) * std::sin(w * x[1]);
        }
        return v / m;
    };
    p.exact_jet = [m](std::span<const double> x) {
        double v = 0.0, dx = 0.0, dy = 0.0, dxx = 0.0, dyy = 0.0;
        for (int i = 1; i <= m; ++i) {
            const double w = std::ldexp(1.0, i) * kPi;
            const double sx = std::sin(w * x[0]);
            const double cx = std::cos(w * x[0]);
            const double sy = std::sin(w * x[1]);
            const double cy = std::cos(w * x[1]);
            v += sx * sy;
            dx += w * cx * sy;
            dy += w * sx * cy;
            dxx += -w * w * sx * sy;
            dyy += -w * w * sx * sy;
        }
        return jet2(v / m, dx / m, dy / m, dxx / m, dyy / m);
    };
    p.residual = JetFunction([m](std::span<const double> x, const auto& j) {
        double f = 0.0;
        for (int i = 1; i <= m; ++i) {
            const double w = std::ldexp(1.0, i) * kPi;
            f += w * w * std::sin(w * x[0]) * std::sin(w * x[1]);
        }
        f *= 2.0 / m;
        return -(j.second[0] + j.second[1]) - f;
    });
    ConstraintDef bc;
    bc.term = LossTerm::Bc;
    bc.kind = ConstraintKind::Value;
    bc.sample = box_edge_sampler(p.lo, p.hi);
    bc.target = nullptr;
    p.constraints.push_back(std::move(bc));

    p.defaults.widths = {2, 10, 1};
    p.defaults.degree = 5;
    p.defaults.grid_values = {5};
    p.defaults.grid_iterations = {0};
    p.defaults.lr = 0.005;
    p.defaults.iterations = 30000;
    p.defaults.weights.lambda_r = 0.001;
    p.defaults.weights.lambda_bc = 1.0;
    p.defaults.counts.n_r = 800;
    p.defaults.counts.n_bc = 400;
    p.defaults.level_totals = {4};
    return p;
}

ProblemSpec make_problem(const std::string& name, const std::map<std::string, double>& params) {
    auto get = [&params](const std::string& key, double fallback) {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (name == "data1") return data_test_1();
    if (name == "data2") return data_test_2();
    if (name == "physics1") return physics_test_1();
    if (name == "helmholtz")
        return physics_test_2(get("a1", 4.0), get("a2", 4.0), get("kh", 1.0));
    if (name == "wave") return physics_test_3(get("c", std::sqrt(2.0)));
    if (name == "ml-laplacian")
        return ml_physics_test_2(static_cast<int>(get("M", 5.0)));
    throw std::invalid_argument("unknown problem '" + name + "'");
}

std::vector<std::string> problem_names() {
    return {"data1", "data2", "physics1", "helmholtz", "wave", "ml-laplacian"};
}

FbkanModel build_problem_model(const ProblemSpec& problem, std::uint64_t seed) {
    MultilevelDecomposition dec;
    for (int total : problem.defaults.level_totals) {
        const std::vector<int> counts = per_dimension_counts(total, problem.dim);
        const std::span<const double> lo(problem.lo.data(), static_cast<std::size_t>(problem.dim));
        const std::span<const double> hi(problem.hi.data(), static_cast<std::size_t>(problem.dim));
        dec.levels.push_back(make_tensor_decomposition(lo, hi, counts, problem.defaults.overlap));
    }
    FbkanBuildOptions options;
    options.widths = problem.defaults.widths;
    options.grid_intervals = problem.defaults.grid_values.front();
    options.degree = problem.defaults.degree;
    options.hidden_grid = problem.defaults.hidden;
    options.overlap = problem.defaults.overlap;
    return build_fbkan(dec, options, seed);
}

std::vector<double> sample_interior(const ProblemSpec& problem, int n, RngStream& rng) {
    std::vector<double> pts;
    box_sampler(problem.dim, problem.lo, problem.hi)(n, rng, pts);
    return pts;
}

std::vector<double> test_grid(const ProblemSpec& problem) {
    std::vector<double> pts;
    if (problem.dim == 1) {
        const int n = 1000;
        pts.resize(n);
        for (int i = 0; i < n; ++i)
            pts[static_cast<std::size_t>(i)] =
                problem.lo[0] + (problem.hi[0] - problem.lo[0]) * i / (n - 1);
    } else if (problem.dim == 2) {
        const int n = 100;
        pts.resize(static_cast<std::size_t>(n) * n * 2);
        std::size_t k = 0;
        for (int i = 0; i < n; ++i) {
            const double x = problem.lo[0] + (problem.hi[0] - problem.lo[0]) * i / (n - 1);
            for (int j = 0; j < n; ++j) {
                const double y = problem.lo[1] + (problem.hi[1] - problem.lo[1]) * j / (n - 1);
                pts[k++] = x;
                pts[k++] = y;
            }
        }
    } else {
        throw std::invalid_argument("test_grid: unsupported dimension");
    }
    return pts;
}

SampleBuild make_sample_set(const ProblemSpec& problem, std::uint64_t seed) {
    SampleBuild build;
    if (problem.has_residual()) {
        ConstraintGroup group;
        group.term = LossTerm::Residual;
        group.kind = ConstraintKind::Jet;
        group.dim = problem.dim;
        group.fn = problem.residual;
        RngStream rng(seed, "points-r", 0);
        group.points = sample_interior(problem, problem.defaults.counts.n_r, rng);
        build.groups.push_back(std::move(group));
    }

    int index = 0;
    for (const ConstraintDef& def : problem.constraints) {
        ConstraintGroup group;
        group.term = def.term;
        group.kind = def.kind;
        group.dim = problem.dim;
        group.fn = def.fn;
        const int n = count_for(problem, def.term);
        const std::string label =
            std::string("points-") + loss_term_name(def.term) + "-" + std::to_string(index);
        RngStream rng(seed, label);
        def.sample(n, rng, group.points);
        if (def.target) {
            group.aux.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                group.aux[static_cast<std::size_t>(i)] = def.target(
                    std::span<const double>(group.points.data() + static_cast<std::size_t>(i) * problem.dim,
                                            static_cast<std::size_t>(problem.dim)));
        }
        if (def.term == LossTerm::Data && problem.defaults.noise_sigma > 0.0 &&
            !group.aux.empty()) {
            RngStream noise_rng(seed, "noise");
            double abs_clean = 0.0;
            double abs_noise = 0.0;
            for (double& t : group.aux) {
                const double eps = problem.defaults.noise_sigma * noise_rng.next_normal();
                abs_clean += std::abs(t);
                abs_noise += std::abs(eps);
                t += eps;
            }
            if (abs_clean > 0.0) build.mean_relative_noise = abs_noise / abs_clean;
        }
        build.groups.push_back(std::move(group));
        ++index;
    }
    return build;
}

void resample_residual_points(const ProblemSpec& problem, std::vector<ConstraintGroup>& groups,
                              std::uint64_t seed, int iteration) {
    for (ConstraintGroup& group : groups) {
        if (group.term != LossTerm::Residual) continue;
        RngStream rng(seed, "points-r", static_cast<std::uint64_t>(iteration));
        group.points = sample_interior(problem, group.size(), rng);
        return;
    }
}

}  // namespace fbkan
