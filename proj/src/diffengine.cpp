#include "fbkan/diffengine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fbkan/errors.hpp"

namespace fbkan {

DualN sin(const DualN& a) {
    DualN r(std::sin(a.v));
    const double c = std::cos(a.v);
    for (int i = 0; i < kJetSlots; ++i) r.g[static_cast<std::size_t>(i)] = c * a.g[static_cast<std::size_t>(i)];
    return r;
}

DualN cos(const DualN& a) {
    DualN r(std::cos(a.v));
    const double s = -std::sin(a.v);
    for (int i = 0; i < kJetSlots; ++i) r.g[static_cast<std::size_t>(i)] = s * a.g[static_cast<std::size_t>(i)];
    return r;
}

DualN exp(const DualN& a) {
    DualN r(std::exp(a.v));
    for (int i = 0; i < kJetSlots; ++i) r.g[static_cast<std::size_t>(i)] = r.v * a.g[static_cast<std::size_t>(i)];
    return r;
}

const char* loss_term_name(LossTerm term) {
    switch (term) {
        case LossTerm::Ic: return "ic";
        case LossTerm::Bc: return "bc";
        case LossTerm::Residual: return "r";
        case LossTerm::Data: return "data";
    }
    return "?";
}

namespace {

// The jet pass carries basis/base derivative orders 0..3: the network output
// needs orders 0..2 of each activation and the backward pass one order more.
// The value pass carries orders 0..1 (order 1 only feeds the backward chain).
constexpr int kJetOrders = 4;
constexpr int kValueOrders = 2;

void prepare_tape(detail::NetTape& tape, const KanNetwork& net, int orders, int stride) {
    tape.layers.resize(net.layers.size());
    int max_width = net.widths.front();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const KanLayer& layer = net.layers[l];
        detail::NetTape::Layer& t = tape.layers[l];
        const int nb = layer.basis_count();
        t.basis.resize(static_cast<std::size_t>(layer.fan_in) * orders * nb);
        t.base.resize(static_cast<std::size_t>(layer.fan_in) * orders);
        t.phi.resize(static_cast<std::size_t>(layer.edge_count()) * orders);
        t.svals.resize(static_cast<std::size_t>(layer.edge_count()) * orders);
        t.jets.resize(static_cast<std::size_t>(layer.fan_in) * stride);
        max_width = std::max(max_width, layer.fan_out);
    }
    tape.out.resize(static_cast<std::size_t>(net.widths.back()) * stride);
    tape.adj_a.resize(static_cast<std::size_t>(max_width) * stride);
    tape.adj_b.resize(static_cast<std::size_t>(max_width) * stride);
}

// Forward pass carrying (value, df/dx_a, d2f/dx_a2) per unit. Writes each
// layer's input jets and per-edge activation derivatives into the tape; the
// network output jet lands in tape.out.
void net_forward_jet(const KanNetwork& net, std::span<const double> x, int d,
                     detail::NetTape& tape) {
    const int stride = 1 + 2 * d;
    prepare_tape(tape, net, kJetOrders, stride);

    double* jin = tape.layers.front().jets.data();
    std::fill(jin, jin + static_cast<std::size_t>(net.widths.front()) * stride, 0.0);
    for (int i = 0; i < net.widths.front(); ++i) {
        jin[i * stride] = x[static_cast<std::size_t>(i)];
        jin[i * stride + 1 + i] = 1.0;
    }

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const KanLayer& layer = net.layers[l];
        detail::NetTape::Layer& t = tape.layers[l];
        const int nb = layer.basis_count();
        const double* jcur = t.jets.data();
        double* jnext =
            (l + 1 < net.layers.size()) ? tape.layers[l + 1].jets.data() : tape.out.data();
        std::fill(jnext, jnext + static_cast<std::size_t>(layer.fan_out) * stride, 0.0);

        for (int i = 0; i < layer.fan_in; ++i) {
            const double u = jcur[i * stride];
            basis_values_all(layer.grids[static_cast<std::size_t>(i)], u, 3,
                             t.basis.data() + static_cast<std::size_t>(i) * kJetOrders * nb);
            base_function_derivs(u, t.base.data() + static_cast<std::size_t>(i) * kJetOrders);
        }

        for (int o = 0; o < layer.fan_out; ++o) {
            double* out = jnext + o * stride;
            for (int i = 0; i < layer.fan_in; ++i) {
                const int e = o * layer.fan_in + i;
                const double* p = net.params.data() + layer.edge_offset(o, i);
                const double wb = p[0];
                const double ws = p[1];
                const double* c = p + 2;
                const double* basis = t.basis.data() + static_cast<std::size_t>(i) * kJetOrders * nb;
                const double* bd = t.base.data() + static_cast<std::size_t>(i) * kJetOrders;
                double* phi = t.phi.data() + static_cast<std::size_t>(e) * kJetOrders;
                double* sv = t.svals.data() + static_cast<std::size_t>(e) * kJetOrders;
                for (int r = 0; r < kJetOrders; ++r) {
                    const double* row = basis + r * nb;
                    double s = 0.0;
                    for (int m = 0; m < nb; ++m) s += c[m] * row[m];
                    sv[r] = s;
                    phi[r] = wb * bd[r] + ws * s;
                }
                const double* j = jcur + i * stride;
                out[0] += phi[0];
                for (int a = 0; a < d; ++a) {
                    out[1 + a] += phi[1] * j[1 + a];
                    out[1 + d + a] += phi[1] * j[1 + d + a] + phi[2] * j[1 + a] * j[1 + a];
                }
            }
        }
    }
}

// Reverse pass. out_adj holds adjoints of the output jet (same layout as
// tape.out); parameter gradients accumulate into grad, which points at this
// network's slice of the model-wide gradient vector.
void net_backward_jet(const KanNetwork& net, int d, detail::NetTape& tape, const double* out_adj,
                      double* grad) {
    const int stride = 1 + 2 * d;
    double* ybar = tape.adj_a.data();
    double* xbar = tape.adj_b.data();
    std::copy(out_adj, out_adj + static_cast<std::size_t>(net.widths.back()) * stride, ybar);

    for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
        const KanLayer& layer = net.layers[static_cast<std::size_t>(l)];
        detail::NetTape::Layer& t = tape.layers[static_cast<std::size_t>(l)];
        const int nb = layer.basis_count();
        std::fill(xbar, xbar + static_cast<std::size_t>(layer.fan_in) * stride, 0.0);

        for (int o = 0; o < layer.fan_out; ++o) {
            const double* y = ybar + o * stride;
            for (int i = 0; i < layer.fan_in; ++i) {
                const int e = o * layer.fan_in + i;
                const double ws = net.params[layer.edge_offset(o, i) + 1];
                const double* basis = t.basis.data() + static_cast<std::size_t>(i) * kJetOrders * nb;
                const double* bd = t.base.data() + static_cast<std::size_t>(i) * kJetOrders;
                const double* phi = t.phi.data() + static_cast<std::size_t>(e) * kJetOrders;
                const double* sv = t.svals.data() + static_cast<std::size_t>(e) * kJetOrders;
                const double* j = t.jets.data() + i * stride;

                // G_r = adjoint of the r-th activation derivative phi_r
                const double g0 = y[0];
                double g1 = 0.0;
                double g2 = 0.0;
                for (int a = 0; a < d; ++a) {
                    g1 += y[1 + a] * j[1 + a] + y[1 + d + a] * j[1 + d + a];
                    g2 += y[1 + d + a] * j[1 + a] * j[1 + a];
                }

                double* gp = grad + layer.edge_offset(o, i);
                gp[0] += g0 * bd[0] + g1 * bd[1] + g2 * bd[2];
                gp[1] += g0 * sv[0] + g1 * sv[1] + g2 * sv[2];
                const double q0 = ws * g0;
                const double q1 = ws * g1;
                const double q2 = ws * g2;
                const double* b0 = basis;
                const double* b1 = basis + nb;
                const double* b2 = basis + 2 * nb;
                double* gc = gp + 2;
                for (int m = 0; m < nb; ++m) gc[m] += q0 * b0[m] + q1 * b1[m] + q2 * b2[m];

                double* xb = xbar + i * stride;
                xb[0] += g0 * phi[1] + g1 * phi[2] + g2 * phi[3];
                for (int a = 0; a < d; ++a) {
                    xb[1 + a] += y[1 + a] * phi[1] + y[1 + d + a] * 2.0 * phi[2] * j[1 + a];
                    xb[1 + d + a] += y[1 + d + a] * phi[1];
                }
            }
        }
        std::swap(ybar, xbar);
    }
}

// Value-only variants for loss terms that never consume input derivatives
// (data fits, Dirichlet conditions). Same tape structure with stride 1.
void net_forward_value(const KanNetwork& net, std::span<const double> x, detail::NetTape& tape) {
    prepare_tape(tape, net, kValueOrders, 1);

    double* vin = tape.layers.front().jets.data();
    for (int i = 0; i < net.widths.front(); ++i) vin[i] = x[static_cast<std::size_t>(i)];

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const KanLayer& layer = net.layers[l];
        detail::NetTape::Layer& t = tape.layers[l];
        const int nb = layer.basis_count();
        const double* vcur = t.jets.data();
        double* vnext =
            (l + 1 < net.layers.size()) ? tape.layers[l + 1].jets.data() : tape.out.data();
        std::fill(vnext, vnext + static_cast<std::size_t>(layer.fan_out), 0.0);

        for (int i = 0; i < layer.fan_in; ++i) {
            basis_values_all(layer.grids[static_cast<std::size_t>(i)], vcur[i], 1,
                             t.basis.data() + static_cast<std::size_t>(i) * kValueOrders * nb);
            double bd[4];
            base_function_derivs(vcur[i], bd);
            t.base[static_cast<std::size_t>(i) * kValueOrders] = bd[0];
            t.base[static_cast<std::size_t>(i) * kValueOrders + 1] = bd[1];
        }

        for (int o = 0; o < layer.fan_out; ++o) {
            for (int i = 0; i < layer.fan_in; ++i) {
                const int e = o * layer.fan_in + i;
                const double* p = net.params.data() + layer.edge_offset(o, i);
                const double wb = p[0];
                const double ws = p[1];
                const double* c = p + 2;
                const double* basis = t.basis.data() + static_cast<std::size_t>(i) * kValueOrders * nb;
                const double* bd = t.base.data() + static_cast<std::size_t>(i) * kValueOrders;
                double* phi = t.phi.data() + static_cast<std::size_t>(e) * kValueOrders;
                double* sv = t.svals.data() + static_cast<std::size_t>(e) * kValueOrders;
                for (int r = 0; r < kValueOrders; ++r) {
                    const double* row = basis + r * nb;
                    double s = 0.0;
                    for (int m = 0; m < nb; ++m) s += c[m] * row[m];
                    sv[r] = s;
                    phi[r] = wb * bd[r] + ws * s;
                }
                vnext[o] += phi[0];
            }
        }
    }
}

void net_backward_value(const KanNetwork& net, detail::NetTape& tape, const double* out_adj,
                        double* grad) {
    double* ybar = tape.adj_a.data();
    double* xbar = tape.adj_b.data();
    std::copy(out_adj, out_adj + static_cast<std::size_t>(net.widths.back()), ybar);

    for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
        const KanLayer& layer = net.layers[static_cast<std::size_t>(l)];
        detail::NetTape::Layer& t = tape.layers[static_cast<std::size_t>(l)];
        const int nb = layer.basis_count();
        std::fill(xbar, xbar + static_cast<std::size_t>(layer.fan_in), 0.0);

        for (int o = 0; o < layer.fan_out; ++o) {
            const double g0 = ybar[o];
            if (g0 == 0.0) continue;
            for (int i = 0; i < layer.fan_in; ++i) {
                const int e = o * layer.fan_in + i;
                const double ws = net.params[layer.edge_offset(o, i) + 1];
                const double* basis = t.basis.data() + static_cast<std::size_t>(i) * kValueOrders * nb;
                const double* bd = t.base.data() + static_cast<std::size_t>(i) * kValueOrders;
                const double* phi = t.phi.data() + static_cast<std::size_t>(e) * kValueOrders;
                const double* sv = t.svals.data() + static_cast<std::size_t>(e) * kValueOrders;

                double* gp = grad + layer.edge_offset(o, i);
                gp[0] += g0 * bd[0];
                gp[1] += g0 * sv[0];
                const double q0 = ws * g0;
                double* gc = gp + 2;
                for (int m = 0; m < nb; ++m) gc[m] += q0 * basis[m];
                xbar[i] += g0 * phi[1];
            }
        }
        std::swap(ybar, xbar);
    }
}

std::size_t flat_net_index(const FbkanModel& model, int level, int sub) {
    std::size_t base = 0;
    for (int l = 0; l < level; ++l) base += model.networks[static_cast<std::size_t>(l)].size();
    return base + static_cast<std::size_t>(sub);
}

void require_scalar_output(const FbkanModel& model) {
    if (model.output_dim() != 1)
        throw std::invalid_argument("jet evaluation requires a scalar-output model");
}

// Full jet of the blended model at one point. Leaves per-network tapes and
// weight snapshots in ws.records for a subsequent backward call.
void point_jet(const FbkanModel& model, std::span<const double> x, FbkanWorkspace& ws) {
    const int d = ws.dim;
    const int stride = ws.stride;
    ws.records.clear();
    std::fill(ws.model_jet.begin(), ws.model_jet.end(), 0.0);

    int tape_idx = 0;
    for (int l = 0; l < model.decomposition.level_count(); ++l) {
        const TensorDecomposition& level = model.decomposition.levels[static_cast<std::size_t>(l)];
        pou_weight_jets(level, x, ws.pou, ws.active);
        for (int j : ws.active) {
            if (static_cast<int>(ws.tapes_jet.size()) <= tape_idx) ws.tapes_jet.emplace_back();
            detail::NetTape& tape = ws.tapes_jet[static_cast<std::size_t>(tape_idx)];
            net_forward_jet(model.networks[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)],
                            x, d, tape);
            const double* k = tape.out.data();
            const double* w = ws.pou.data() + static_cast<std::size_t>(j) * stride;

            FbkanWorkspace::Record rec;
            rec.level = l;
            rec.sub = j;
            rec.tape = tape_idx;
            std::copy(w, w + stride, rec.omega.begin());
            ws.records.push_back(rec);

            // product rule for omega * K, diagonal second order
            double* m = ws.model_jet.data();
            m[0] += w[0] * k[0];
            for (int a = 0; a < d; ++a) {
                m[1 + a] += w[1 + a] * k[0] + w[0] * k[1 + a];
                m[1 + d + a] +=
                    w[1 + d + a] * k[0] + 2.0 * w[1 + a] * k[1 + a] + w[0] * k[1 + d + a];
            }
            ++tape_idx;
        }
    }
    const double inv_levels = 1.0 / model.decomposition.level_count();
    for (int c = 0; c < stride; ++c) ws.model_jet[static_cast<std::size_t>(c)] *= inv_levels;
}

void point_jet_backward(const FbkanModel& model, FbkanWorkspace& ws, const double* mbar,
                        double* grad) {
    const int d = ws.dim;
    const double inv_levels = 1.0 / model.decomposition.level_count();
    double kbar[kJetSlots];
    for (const FbkanWorkspace::Record& rec : ws.records) {
        const double* w = rec.omega.data();
        double kv = mbar[0] * w[0];
        for (int a = 0; a < d; ++a)
            kv += mbar[1 + a] * w[1 + a] + mbar[1 + d + a] * w[1 + d + a];
        kbar[0] = inv_levels * kv;
        for (int a = 0; a < d; ++a) {
            kbar[1 + a] = inv_levels * (mbar[1 + a] * w[0] + 2.0 * mbar[1 + d + a] * w[1 + a]);
            kbar[1 + d + a] = inv_levels * mbar[1 + d + a] * w[0];
        }
        const KanNetwork& net =
            model.networks[static_cast<std::size_t>(rec.level)][static_cast<std::size_t>(rec.sub)];
        double* slice = grad + ws.net_offsets[flat_net_index(model, rec.level, rec.sub)];
        net_backward_jet(net, d, ws.tapes_jet[static_cast<std::size_t>(rec.tape)], kbar, slice);
    }
}

double point_value(const FbkanModel& model, std::span<const double> x, FbkanWorkspace& ws) {
    const int stride = ws.stride;
    ws.records.clear();
    double val = 0.0;
    int tape_idx = 0;
    for (int l = 0; l < model.decomposition.level_count(); ++l) {
        const TensorDecomposition& level = model.decomposition.levels[static_cast<std::size_t>(l)];
        pou_weight_jets(level, x, ws.pou, ws.active);
        for (int j : ws.active) {
            const double wv = ws.pou[static_cast<std::size_t>(j) * stride];
            if (wv == 0.0) continue;  // support boundary: no value contribution
            if (static_cast<int>(ws.tapes_val.size()) <= tape_idx) ws.tapes_val.emplace_back();
            detail::NetTape& tape = ws.tapes_val[static_cast<std::size_t>(tape_idx)];
            net_forward_value(
                model.networks[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)], x, tape);
            val += wv * tape.out[0];

            FbkanWorkspace::Record rec;
            rec.level = l;
            rec.sub = j;
            rec.tape = tape_idx;
            rec.omega[0] = wv;
            ws.records.push_back(rec);
            ++tape_idx;
        }
    }
    return val / model.decomposition.level_count();
}

void point_value_backward(const FbkanModel& model, FbkanWorkspace& ws, double vbar, double* grad) {
    const double inv_levels = 1.0 / model.decomposition.level_count();
    for (const FbkanWorkspace::Record& rec : ws.records) {
        const double kbar = vbar * rec.omega[0] * inv_levels;
        const KanNetwork& net =
            model.networks[static_cast<std::size_t>(rec.level)][static_cast<std::size_t>(rec.sub)];
        double* slice = grad + ws.net_offsets[flat_net_index(model, rec.level, rec.sub)];
        net_backward_value(net, ws.tapes_val[static_cast<std::size_t>(rec.tape)], &kbar, slice);
    }
}

Jet<double> to_jet(const double* m, int d) {
    Jet<double> j;
    j.dim = d;
    j.value = m[0];
    for (int a = 0; a < d; ++a) {
        j.first[static_cast<std::size_t>(a)] = m[1 + a];
        j.second[static_cast<std::size_t>(a)] = m[1 + d + a];
    }
    return j;
}

Jet<double> to_jet(const JetValue& jv) {
    Jet<double> j;
    j.dim = static_cast<int>(jv.first.size());
    j.value = jv.value;
    for (int a = 0; a < j.dim; ++a) {
        j.first[static_cast<std::size_t>(a)] = jv.first[static_cast<std::size_t>(a)];
        j.second[static_cast<std::size_t>(a)] = jv.second_diag[static_cast<std::size_t>(a)];
    }
    return j;
}

// Derivatives of the functional with respect to the jet entries, by seeding
// one dual slot per entry.
void functional_jet_adjoint(const JetFunction& fn, std::span<const double> x,
                            const Jet<double>& j, double scale, double* mbar) {
    const int d = j.dim;
    Jet<DualN> jd;
    jd.dim = d;
    jd.value = DualN::seeded(j.value, 0);
    for (int a = 0; a < d; ++a) {
        jd.first[static_cast<std::size_t>(a)] =
            DualN::seeded(j.first[static_cast<std::size_t>(a)], 1 + a);
        jd.second[static_cast<std::size_t>(a)] =
            DualN::seeded(j.second[static_cast<std::size_t>(a)], 1 + d + a);
    }
    const DualN r = fn.eval_dual(x, jd);
    for (int s = 0; s < 1 + 2 * d; ++s)
        mbar[s] = scale * r.g[static_cast<std::size_t>(s)];
}

double weight_for(LossTerm term, const LossWeights& w) {
    switch (term) {
        case LossTerm::Ic: return w.lambda_ic;
        case LossTerm::Bc: return w.lambda_bc;
        case LossTerm::Residual: return w.lambda_r;
        case LossTerm::Data: return w.lambda_data;
    }
    return 0.0;
}

void add_part(LossParts& parts, LossTerm term, double value) {
    switch (term) {
        case LossTerm::Ic: parts.ic += value; break;
        case LossTerm::Bc: parts.bc += value; break;
        case LossTerm::Residual: parts.residual += value; break;
        case LossTerm::Data: parts.data += value; break;
    }
}

void check_part_finite(LossTerm term, double value) {
    if (!std::isfinite(value))
        throw NumericalError(std::string("loss term '") + loss_term_name(term) +
                             "' is non-finite");
}

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double v) {
        const double y = v - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

double finish_total(LossParts& parts, const LossWeights& weights) {
    parts.total = weights.lambda_ic * parts.ic + weights.lambda_bc * parts.bc +
                  weights.lambda_r * parts.residual + weights.lambda_data * parts.data;
    if (!std::isfinite(parts.total)) throw NumericalError("total loss is non-finite");
    return parts.total;
}

}  // namespace

void FbkanWorkspace::bind(const FbkanModel& model) {
    dim = model.input_dim();
    stride = 1 + 2 * dim;
    net_offsets.clear();
    std::size_t offset = 0;
    for (const auto& level : model.networks)
        for (const auto& net : level) {
            net_offsets.push_back(offset);
            offset += net.param_count();
        }
    total_params = offset;
    model_jet.assign(static_cast<std::size_t>(stride), 0.0);
}

JetValue eval_jet(const FbkanModel& model, std::span<const double> x, FbkanWorkspace& ws) {
    require_scalar_output(model);
    if (static_cast<int>(x.size()) != model.input_dim())
        throw std::invalid_argument("eval_jet: point dimension mismatch");
    if (ws.stride != 1 + 2 * model.input_dim() || ws.total_params != model.param_count())
        ws.bind(model);
    point_jet(model, x, ws);
    JetValue out;
    out.value = ws.model_jet[0];
    out.first.assign(ws.model_jet.begin() + 1, ws.model_jet.begin() + 1 + ws.dim);
    out.second_diag.assign(ws.model_jet.begin() + 1 + ws.dim,
                           ws.model_jet.begin() + 1 + 2 * ws.dim);
    return out;
}

JetValue eval_jet(const FbkanModel& model, std::span<const double> x) {
    FbkanWorkspace ws;
    ws.bind(model);
    return eval_jet(model, x, ws);
}

double FbkanEval::value(std::span<const double> x) {
    if (ws_.stride != 1 + 2 * model_->input_dim() || ws_.total_params != model_->param_count())
        ws_.bind(*model_);
    return point_value(*model_, x, ws_);
}

JetValue FbkanEval::jet(std::span<const double> x) { return eval_jet(*model_, x, ws_); }

LossParts compute_loss_parts(ModelEval& model, std::span<const ConstraintGroup> groups,
                             const LossWeights& weights) {
    LossParts parts;
    const int d = model.input_dim();
    for (const ConstraintGroup& group : groups) {
        if (group.dim != d)
            throw std::invalid_argument("compute_loss_parts: group dimension mismatch");
        const int n = group.size();
        if (n == 0) continue;
        if (!group.aux.empty() && static_cast<int>(group.aux.size()) != n)
            throw std::invalid_argument("compute_loss_parts: aux length mismatch");
        if (group.kind == ConstraintKind::Jet && !group.fn.valid())
            throw std::invalid_argument("compute_loss_parts: jet group lacks a functional");

        KahanSum sum;
        for (int i = 0; i < n; ++i) {
            const std::span<const double> x(group.points.data() +
                                                static_cast<std::size_t>(i) * d,
                                            static_cast<std::size_t>(d));
            const double target = group.aux.empty() ? 0.0 : group.aux[static_cast<std::size_t>(i)];
            double r;
            if (group.kind == ConstraintKind::Value) {
                r = model.value(x) - target;
            } else {
                const JetValue jv = model.jet(x);
                r = group.fn(x, to_jet(jv)) - target;
            }
            sum.add(r * r);
        }
        const double part = sum.sum / n;
        check_part_finite(group.term, part);
        add_part(parts, group.term, part);
    }
    finish_total(parts, weights);
    return parts;
}

LossParts loss_gradient(const FbkanModel& model, std::span<const ConstraintGroup> groups,
                        const LossWeights& weights, std::vector<double>& grad,
                        FbkanWorkspace& ws) {
    require_scalar_output(model);
    ws.bind(model);
    const int d = ws.dim;
    grad.assign(ws.total_params, 0.0);
    if (ws.group_buffers.size() < groups.size()) ws.group_buffers.resize(groups.size());

    LossParts parts;
    double mbar[kJetSlots];
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const ConstraintGroup& group = groups[gi];
        if (group.dim != d) throw std::invalid_argument("loss_gradient: group dimension mismatch");
        const int n = group.size();
        std::vector<double>& buf = ws.group_buffers[gi];
        buf.assign(ws.total_params, 0.0);
        if (n == 0) continue;
        if (!group.aux.empty() && static_cast<int>(group.aux.size()) != n)
            throw std::invalid_argument("loss_gradient: aux length mismatch");
        if (group.kind == ConstraintKind::Jet && !group.fn.valid())
            throw std::invalid_argument("loss_gradient: jet group lacks a functional");

        KahanSum sum;
        const double scale = 2.0 / n;
        for (int i = 0; i < n; ++i) {
            const std::span<const double> x(group.points.data() +
                                                static_cast<std::size_t>(i) * d,
                                            static_cast<std::size_t>(d));
            const double target = group.aux.empty() ? 0.0 : group.aux[static_cast<std::size_t>(i)];
            if (group.kind == ConstraintKind::Value) {
                const double r = point_value(model, x, ws) - target;
                sum.add(r * r);
                point_value_backward(model, ws, scale * r, buf.data());
            } else {
                point_jet(model, x, ws);
                const Jet<double> j = to_jet(ws.model_jet.data(), d);
                const double r = group.fn(x, j) - target;
                sum.add(r * r);
                functional_jet_adjoint(group.fn, x, j, scale * r, mbar);
                point_jet_backward(model, ws, mbar, buf.data());
            }
        }
        const double part = sum.sum / n;
        check_part_finite(group.term, part);
        add_part(parts, group.term, part);
    }

    // merge per-group buffers in group order so gradients of concatenated
    // group lists add exactly
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const double lambda = weight_for(groups[gi].term, weights);
        if (lambda == 0.0) continue;
        const std::vector<double>& buf = ws.group_buffers[gi];
        for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += lambda * buf[p];
    }
    finish_total(parts, weights);
    return parts;
}

}  // namespace fbkan
