#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fbkan/decomposition.hpp"

namespace fbkan {

// Value plus exact first and diagonal second input derivatives of a scalar
// model output. Mixed partials are never needed by the benchmark operators
// and are not tracked.
struct JetValue {
    double value = 0.0;
    std::vector<double> first;
    std::vector<double> second_diag;
};

inline constexpr int kJetSlots = 1 + 2 * kMaxDim;

// Fixed-width forward-mode dual: value plus derivatives with respect to up to
// kJetSlots independent seeds. Used to differentiate residual functionals with
// respect to the jet entries they consume; all slots are carried uncondition-
// ally, which keeps the arithmetic branch-free.
struct DualN {
    double v = 0.0;
    std::array<double, kJetSlots> g{};

    DualN() = default;
    DualN(double value) : v(value) {}
    static DualN seeded(double value, int slot) {
        DualN d(value);
        d.g[static_cast<std::size_t>(slot)] = 1.0;
        return d;
    }
};

inline DualN operator+(const DualN& a, const DualN& b) {
    DualN r(a.v + b.v);
    for (int i = 0; i < kJetSlots; ++i) r.g[i] = a.g[i] + b.g[i];
    return r;
}
inline DualN operator-(const DualN& a, const DualN& b) {
    DualN r(a.v - b.v);
    for (int i = 0; i < kJetSlots; ++i) r.g[i] = a.g[i] - b.g[i];
    return r;
}
inline DualN operator-(const DualN& a) {
    DualN r(-a.v);
    for (int i = 0; i < kJetSlots; ++i) r.g[i] = -a.g[i];
    return r;
}
inline DualN operator*(const DualN& a, const DualN& b) {
    DualN r(a.v * b.v);
    for (int i = 0; i < kJetSlots; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return r;
}
inline DualN operator/(const DualN& a, const DualN& b) {
    DualN r(a.v / b.v);
    const double inv = 1.0 / b.v;
    for (int i = 0; i < kJetSlots; ++i) r.g[i] = (a.g[i] - r.v * b.g[i]) * inv;
    return r;
}
inline DualN operator+(const DualN& a, double b) { return a + DualN(b); }
inline DualN operator+(double a, const DualN& b) { return DualN(a) + b; }
inline DualN operator-(const DualN& a, double b) { return a - DualN(b); }
inline DualN operator-(double a, const DualN& b) { return DualN(a) - b; }
inline DualN operator*(const DualN& a, double b) {
    DualN r(a.v * b);
    for (int i = 0; i < kJetSlots; ++i) r.g[i] = a.g[i] * b;
    return r;
}
inline DualN operator*(double a, const DualN& b) { return b * a; }
inline DualN operator/(const DualN& a, double b) { return a * (1.0 / b); }
inline DualN operator/(double a, const DualN& b) { return DualN(a) / b; }

DualN sin(const DualN& a);
DualN cos(const DualN& a);
DualN exp(const DualN& a);

// Jet as seen by a residual functional; T is double for plain evaluation and
// DualN when differentiating the functional with respect to the jet.
template <class T>
struct Jet {
    int dim = 0;
    T value{};
    std::array<T, kMaxDim> first{};
    std::array<T, kMaxDim> second{};
};

// A scalar functional of (point, jet), e.g. a PDE residual. Constructed from
// one generic callable, instantiated for both scalar types so the same
// expression provides values and jet-derivatives.
class JetFunction {
public:
    JetFunction() = default;

    template <class F>
    explicit JetFunction(F f)
        : real_([f](std::span<const double> x, const Jet<double>& j) -> double { return f(x, j); }),
          dual_([f](std::span<const double> x, const Jet<DualN>& j) -> DualN { return f(x, j); }) {}

    bool valid() const { return static_cast<bool>(real_); }
    double operator()(std::span<const double> x, const Jet<double>& j) const { return real_(x, j); }
    DualN eval_dual(std::span<const double> x, const Jet<DualN>& j) const { return dual_(x, j); }

private:
    std::function<double(std::span<const double>, const Jet<double>&)> real_;
    std::function<DualN(std::span<const double>, const Jet<DualN>&)> dual_;
};

struct LossWeights {
    double lambda_ic = 0.0;
    double lambda_bc = 0.0;
    double lambda_r = 0.0;
    double lambda_data = 0.0;
};

enum class LossTerm { Ic, Bc, Residual, Data };
enum class ConstraintKind { Value, Jet };

const char* loss_term_name(LossTerm term);

// One homogeneous block of the loss: n points with targets, reduced as the
// mean of squared residuals. Value groups penalize (model - aux) directly;
// Jet groups apply `fn` to the model jet first.
struct ConstraintGroup {
    LossTerm term = LossTerm::Data;
    ConstraintKind kind = ConstraintKind::Value;
    int dim = 1;
    std::vector<double> points;  // n x dim, row-major
    std::vector<double> aux;     // n targets; empty means zeros
    JetFunction fn;              // required for Jet kind

    int size() const { return dim > 0 ? static_cast<int>(points.size()) / dim : 0; }
};

struct LossParts {
    double total = 0.0;
    double ic = 0.0;
    double bc = 0.0;
    double residual = 0.0;
    double data = 0.0;
};

// Anything the loss can be evaluated on: the trained model, or an analytic
// stand-in (exact solutions in tests). Implementations may keep scratch
// buffers, hence the non-const methods.
class ModelEval {
public:
    virtual ~ModelEval() = default;
    virtual int input_dim() const = 0;
    virtual double value(std::span<const double> x) = 0;
    virtual JetValue jet(std::span<const double> x) = 0;
};

class AnalyticEval final : public ModelEval {
public:
    AnalyticEval(int dim, std::function<JetValue(std::span<const double>)> jet_fn)
        : dim_(dim), jet_fn_(std::move(jet_fn)) {}

    int input_dim() const override { return dim_; }
    double value(std::span<const double> x) override { return jet_fn_(x).value; }
    JetValue jet(std::span<const double> x) override { return jet_fn_(x); }

private:
    int dim_;
    std::function<JetValue(std::span<const double>)> jet_fn_;
};

namespace detail {

// Reusable per-point evaluation state for one network shape. All vectors are
// sized on first use and reused afterwards; the training loop must not
// allocate per point.
struct NetTape {
    struct Layer {
        std::vector<double> basis;  // fan_in x orders x nb, unit-major
        std::vector<double> base;   // fan_in x orders
        std::vector<double> phi;    // edges x orders
        std::vector<double> svals;  // edges x orders
        std::vector<double> jets;   // fan_in x stride (this layer's input jets)
    };
    std::vector<Layer> layers;
    std::vector<double> out;    // width_last x stride
    std::vector<double> adj_a;  // adjoint ping-pong buffers
    std::vector<double> adj_b;
};

}  // namespace detail

// Scratch for repeated jet/gradient evaluation of one model. bind() must be
// called again whenever the model's shape changes (e.g. grid extension).
struct FbkanWorkspace {
    void bind(const FbkanModel& model);

    int dim = 0;
    int stride = 0;  // 1 + 2*dim
    std::vector<std::size_t> net_offsets;  // flat parameter offset per network
    std::size_t total_params = 0;

    struct Record {
        int level = 0;
        int sub = 0;
        int tape = 0;
        std::array<double, kJetSlots> omega{};
    };
    std::vector<detail::NetTape> tapes_jet;
    std::vector<detail::NetTape> tapes_val;
    std::vector<Record> records;
    std::vector<double> pou;
    std::vector<int> active;
    std::vector<double> model_jet;  // stride
    std::vector<std::vector<double>> group_buffers;
};

// Exact jet of the blended model at x. Scalar output models only.
JetValue eval_jet(const FbkanModel& model, std::span<const double> x);
JetValue eval_jet(const FbkanModel& model, std::span<const double> x, FbkanWorkspace& ws);

class FbkanEval final : public ModelEval {
public:
    explicit FbkanEval(const FbkanModel& model) : model_(&model) { ws_.bind(model); }

    int input_dim() const override { return model_->input_dim(); }
    double value(std::span<const double> x) override;
    JetValue jet(std::span<const double> x) override;

private:
    const FbkanModel* model_;
    FbkanWorkspace ws_;
};

// Weighted loss over the groups; parts are per-term means of squared
// residuals. Throws NumericalError naming the term if a part is non-finite.
LossParts compute_loss_parts(ModelEval& model, std::span<const ConstraintGroup> groups,
                             const LossWeights& weights);

// Loss plus its exact gradient with respect to every model parameter, laid
// out like FbkanModel::flat_parameters(). Group contributions are accumulated
// in isolated buffers and merged in group order, so gradients add exactly
// when group lists are concatenated.
LossParts loss_gradient(const FbkanModel& model, std::span<const ConstraintGroup> groups,
                        const LossWeights& weights, std::vector<double>& grad,
                        FbkanWorkspace& ws);

}  // namespace fbkan
