#include "fbkan/decomposition.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

#include "fbkan/errors.hpp"
#include "fbkan/rng.hpp"

namespace fbkan {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBoundsThreshold = 1e-4;

// Raw cosine bump and its first two derivatives; zero (with zero derivatives)
// outside |x - mu| <= sigma. The clamped bump is C^2 across the boundary.
void raw_weight_derivs(double x, double mu, double sigma, double out[3]) {
    const double dx = x - mu;
    if (std::abs(dx) >= sigma) {
        out[0] = out[1] = out[2] = 0.0;
        return;
    }
    const double u = kPi * dx / sigma;
    const double c = std::cos(u);
    const double s = std::sin(u);
    const double du = kPi / sigma;
    out[0] = (1.0 + c) * (1.0 + c);
    out[1] = -2.0 * (1.0 + c) * s * du;
    out[2] = (2.0 * s * s - 2.0 * (1.0 + c) * c) * du * du;
}

double raw_weight(double x, double mu, double sigma) {
    const double dx = x - mu;
    if (std::abs(dx) >= sigma) return 0.0;
    const double c = std::cos(kPi * dx / sigma);
    return (1.0 + c) * (1.0 + c);
}

}  // namespace

Decomposition1D make_decomposition_1d(double lo, double hi, int count, double overlap) {
    if (!(hi > lo)) throw std::invalid_argument("make_decomposition_1d: hi must exceed lo");
    if (count < 1) throw std::invalid_argument("make_decomposition_1d: count must be positive");
    if (count > 1 && !(overlap > 1.0))
        throw std::invalid_argument("make_decomposition_1d: overlap ratio must exceed 1");

    Decomposition1D dec;
    dec.lo = lo;
    dec.hi = hi;
    dec.count = count;
    dec.overlap = overlap;
    const double l = hi - lo;
    if (count == 1) {
        dec.centers = {0.5 * (lo + hi)};
        dec.half_widths = {l};
    } else {
        for (int j = 0; j < count; ++j) {
            dec.centers.push_back(lo + l * j / (count - 1));
            dec.half_widths.push_back(0.5 * overlap * l / (count - 1));
        }
    }
    return dec;
}

int TensorDecomposition::subdomain_count() const {
    int n = 1;
    for (const auto& d : dims) n *= d.count;
    return n;
}

int TensorDecomposition::flat_index(std::span<const int> multi) const {
    int flat = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) flat = flat * dims[i].count + multi[i];
    return flat;
}

std::array<int, kMaxDim> TensorDecomposition::multi_index(int flat) const {
    std::array<int, kMaxDim> multi{};
    for (int i = dim() - 1; i >= 0; --i) {
        multi[static_cast<std::size_t>(i)] = flat % dims[static_cast<std::size_t>(i)].count;
        flat /= dims[static_cast<std::size_t>(i)].count;
    }
    return multi;
}

TensorDecomposition make_tensor_decomposition(std::span<const double> lo, std::span<const double> hi,
                                              std::span<const int> counts, double overlap) {
    if (lo.size() != hi.size() || lo.size() != counts.size() || lo.empty())
        throw std::invalid_argument("make_tensor_decomposition: inconsistent dimensions");
    if (static_cast<int>(lo.size()) > kMaxDim)
        throw std::invalid_argument("make_tensor_decomposition: dimension exceeds kMaxDim");
    TensorDecomposition dec;
    for (std::size_t i = 0; i < lo.size(); ++i)
        dec.dims.push_back(make_decomposition_1d(lo[i], hi[i], counts[i], overlap));
    return dec;
}

std::vector<int> per_dimension_counts(int total, int dim) {
    if (total < 1) throw std::invalid_argument("per_dimension_counts: total must be positive");
    if (dim == 1) return {total};
    const double root = std::pow(static_cast<double>(total), 1.0 / dim);
    const int n = static_cast<int>(std::lround(root));
    int check = 1;
    for (int i = 0; i < dim; ++i) check *= n;
    if (check != total)
        throw std::invalid_argument("per_dimension_counts: subdomain total " +
                                    std::to_string(total) + " is not a " + std::to_string(dim) +
                                    "-th power");
    return std::vector<int>(static_cast<std::size_t>(dim), n);
}

int MultilevelDecomposition::network_count() const {
    int n = 0;
    for (const auto& level : levels) n += level.subdomain_count();
    return n;
}

std::vector<double> pou_weights(const TensorDecomposition& dec, std::span<const double> x) {
    if (static_cast<int>(x.size()) != dec.dim())
        throw std::invalid_argument("pou_weights: point dimension mismatch");
    const int count = dec.subdomain_count();
    std::vector<double> weights(static_cast<std::size_t>(count), 1.0);

    // raw tensor-product weights, then one normalization over all subdomains
    for (int j = 0; j < count; ++j) {
        const auto multi = dec.multi_index(j);
        double w = 1.0;
        for (int i = 0; i < dec.dim(); ++i) {
            const Decomposition1D& d = dec.dims[static_cast<std::size_t>(i)];
            if (d.count == 1) continue;
            w *= raw_weight(x[static_cast<std::size_t>(i)],
                            d.centers[static_cast<std::size_t>(multi[static_cast<std::size_t>(i)])],
                            d.half_widths[static_cast<std::size_t>(multi[static_cast<std::size_t>(i)])]);
            if (w == 0.0) break;
        }
        weights[static_cast<std::size_t>(j)] = w;
    }
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0)
        throw CoverageError("pou_weights: point lies outside every subdomain support");
    for (double& w : weights) w /= total;
    return weights;
}

void pou_weight_jets(const TensorDecomposition& dec, std::span<const double> x,
                     std::vector<double>& out, std::vector<int>& active) {
    const int d = dec.dim();
    if (static_cast<int>(x.size()) != d)
        throw std::invalid_argument("pou_weight_jets: point dimension mismatch");
    const int count = dec.subdomain_count();
    const int stride = 1 + 2 * d;
    out.assign(static_cast<std::size_t>(count) * stride, 0.0);
    active.clear();

    // per-dimension raw bumps for every 1D subdomain
    std::array<std::vector<double>, kMaxDim> bumps;  // [dim][m*3 + order]
    for (int i = 0; i < d; ++i) {
        const Decomposition1D& dd = dec.dims[static_cast<std::size_t>(i)];
        bumps[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(dd.count) * 3);
        for (int m = 0; m < dd.count; ++m) {
            double* slot = bumps[static_cast<std::size_t>(i)].data() + 3 * m;
            if (dd.count == 1) {
                slot[0] = 1.0;
                slot[1] = slot[2] = 0.0;
            } else {
                raw_weight_derivs(x[static_cast<std::size_t>(i)],
                                  dd.centers[static_cast<std::size_t>(m)],
                                  dd.half_widths[static_cast<std::size_t>(m)], slot);
            }
        }
    }

    // raw product jets and their sum
    std::vector<double> total(static_cast<std::size_t>(stride), 0.0);
    for (int j = 0; j < count; ++j) {
        const auto multi = dec.multi_index(j);
        double vals[kMaxDim];
        const double* parts[kMaxDim];
        double prod = 1.0;
        for (int i = 0; i < d; ++i) {
            parts[i] = bumps[static_cast<std::size_t>(i)].data() +
                       3 * multi[static_cast<std::size_t>(i)];
            vals[i] = parts[i][0];
            prod *= vals[i];
        }
        double* slot = out.data() + static_cast<std::size_t>(j) * stride;
        slot[0] = prod;
        bool any = prod != 0.0;
        for (int a = 0; a < d; ++a) {
            double rest = 1.0;
            for (int i = 0; i < d; ++i)
                if (i != a) rest *= vals[i];
            slot[1 + a] = parts[a][1] * rest;
            slot[1 + d + a] = parts[a][2] * rest;
            any = any || slot[1 + a] != 0.0;
        }
        if (any) active.push_back(j);
        for (int c = 0; c < stride; ++c) total[static_cast<std::size_t>(c)] += slot[c];
    }
    if (total[0] <= 0.0)
        throw CoverageError("pou_weight_jets: point lies outside every subdomain support");

    // normalize: omega = raw / total, with quotient-rule jets
    const double tv = total[0];
    for (int j : active) {
        double* slot = out.data() + static_cast<std::size_t>(j) * stride;
        const double wv = slot[0] / tv;
        slot[0] = wv;
        for (int a = 0; a < d; ++a) {
            const double wf = (slot[1 + a] - wv * total[static_cast<std::size_t>(1 + a)]) / tv;
            slot[1 + a] = wf;
            slot[1 + d + a] = (slot[1 + d + a] - 2.0 * wf * total[static_cast<std::size_t>(1 + a)] -
                               wv * total[static_cast<std::size_t>(1 + d + a)]) /
                              tv;
        }
    }
}

SubdomainBounds subdomain_bounds(const TensorDecomposition& dec, int subdomain,
                                 int samples_per_dim) {
    if (subdomain < 0 || subdomain >= dec.subdomain_count())
        throw std::invalid_argument("subdomain_bounds: index out of range");
    if (samples_per_dim < 100)
        throw std::invalid_argument("subdomain_bounds: need at least 100 samples per dimension");

    const int d = dec.dim();
    const auto multi = dec.multi_index(subdomain);

    // Per-dimension normalized weight profiles. For a tensor grid the
    // normalizer factorizes, so the d-dimensional threshold scan reduces to
    // per-dimension scans against the other dimensions' maxima.
    std::array<std::vector<double>, kMaxDim> profiles;
    std::array<double, kMaxDim> profile_max{};
    for (int i = 0; i < d; ++i) {
        const Decomposition1D& dd = dec.dims[static_cast<std::size_t>(i)];
        auto& profile = profiles[static_cast<std::size_t>(i)];
        profile.resize(static_cast<std::size_t>(samples_per_dim));
        double pmax = 0.0;
        for (int s = 0; s < samples_per_dim; ++s) {
            const double x = dd.lo + (dd.hi - dd.lo) * s / (samples_per_dim - 1);
            double total = 0.0;
            double mine = 0.0;
            if (dd.count == 1) {
                total = mine = 1.0;
            } else {
                for (int m = 0; m < dd.count; ++m) {
                    const double w = raw_weight(x, dd.centers[static_cast<std::size_t>(m)],
                                                dd.half_widths[static_cast<std::size_t>(m)]);
                    total += w;
                    if (m == multi[static_cast<std::size_t>(i)]) mine = w;
                }
            }
            const double v = total > 0.0 ? mine / total : 0.0;
            profile[static_cast<std::size_t>(s)] = v;
            pmax = std::max(pmax, v);
        }
        profile_max[static_cast<std::size_t>(i)] = pmax;
    }

    SubdomainBounds bounds;
    for (int i = 0; i < d; ++i) {
        const Decomposition1D& dd = dec.dims[static_cast<std::size_t>(i)];
        double rest = 1.0;
        for (int i2 = 0; i2 < d; ++i2)
            if (i2 != i) rest *= profile_max[static_cast<std::size_t>(i2)];
        double lo = 0.0, hi = 0.0;
        bool found = false;
        for (int s = 0; s < samples_per_dim; ++s) {
            if (profiles[static_cast<std::size_t>(i)][static_cast<std::size_t>(s)] * rest >
                kBoundsThreshold) {
                const double x = dd.lo + (dd.hi - dd.lo) * s / (samples_per_dim - 1);
                if (!found) lo = x;
                hi = x;
                found = true;
            }
        }
        if (!found)
            throw CoverageError("subdomain_bounds: no sample exceeds the weight threshold");
        bounds.lo[static_cast<std::size_t>(i)] = lo;
        bounds.hi[static_cast<std::size_t>(i)] = hi;
    }
    return bounds;
}

std::size_t FbkanModel::param_count() const {
    std::size_t n = 0;
    for (const auto& level : networks)
        for (const auto& net : level) n += net.param_count();
    return n;
}

std::vector<double> FbkanModel::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& level : networks)
        for (const auto& net : level) flat.insert(flat.end(), net.params.begin(), net.params.end());
    return flat;
}

void FbkanModel::set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("set_flat_parameters: length mismatch");
    std::size_t offset = 0;
    for (auto& level : networks)
        for (auto& net : level) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                      flat.begin() + static_cast<std::ptrdiff_t>(offset + net.params.size()),
                      net.params.begin());
            offset += net.params.size();
        }
}

FbkanModel build_fbkan(const MultilevelDecomposition& dec, const FbkanBuildOptions& options,
                       std::uint64_t seed) {
    if (dec.levels.empty()) throw std::invalid_argument("build_fbkan: no decomposition levels");
    if (options.widths.size() < 2) throw std::invalid_argument("build_fbkan: need at least two widths");
    const int d = dec.levels.front().dim();
    if (options.widths.front() != d)
        throw std::invalid_argument("build_fbkan: first width must equal the domain dimension");

    FbkanModel model;
    model.decomposition = dec;
    model.bounds_samples = options.bounds_samples;
    GridSpec hidden = options.hidden_grid;
    hidden.intervals = options.grid_intervals;
    hidden.degree = options.degree;

    for (int l = 0; l < dec.level_count(); ++l) {
        const TensorDecomposition& level = dec.levels[static_cast<std::size_t>(l)];
        std::vector<KanNetwork> nets;
        for (int j = 0; j < level.subdomain_count(); ++j) {
            const SubdomainBounds bounds = subdomain_bounds(level, j, options.bounds_samples);
            std::vector<GridSpec> input_grids;
            for (int i = 0; i < d; ++i)
                input_grids.push_back(GridSpec{bounds.lo[static_cast<std::size_t>(i)],
                                               bounds.hi[static_cast<std::size_t>(i)],
                                               options.grid_intervals, options.degree});
            const std::uint64_t net_seed =
                mix64(seed ^ mix64((static_cast<std::uint64_t>(l + 1) << 32) |
                                   static_cast<std::uint64_t>(j + 1)));
            nets.push_back(init_network(options.widths, input_grids, hidden, net_seed));
        }
        model.networks.push_back(std::move(nets));
    }
    return model;
}

std::vector<double> fbkan_forward(const FbkanModel& model, std::span<const double> x) {
    const int levels = model.decomposition.level_count();
    std::vector<double> out(static_cast<std::size_t>(model.output_dim()), 0.0);
    for (int l = 0; l < levels; ++l) {
        const auto weights = pou_weights(model.decomposition.levels[static_cast<std::size_t>(l)], x);
        for (std::size_t j = 0; j < weights.size(); ++j) {
            if (weights[j] == 0.0) continue;
            const auto value = kan_forward(model.networks[static_cast<std::size_t>(l)][j], x);
            for (std::size_t o = 0; o < out.size(); ++o) out[o] += weights[j] * value[o];
        }
    }
    for (double& v : out) v /= levels;
    return out;
}

std::string serialize_model(const FbkanModel& model) {
    nlohmann::json doc;
    doc["format"] = "fbkan-checkpoint-v1";
    doc["bounds_samples"] = model.bounds_samples;
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& level : model.decomposition.levels) {
        nlohmann::json dims = nlohmann::json::array();
        for (const auto& d : level.dims)
            dims.push_back({{"lo", d.lo}, {"hi", d.hi}, {"count", d.count}, {"overlap", d.overlap}});
        levels.push_back({{"dims", dims}});
    }
    doc["decomposition"] = {{"levels", levels}};
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& level : model.networks) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& net : level) row.push_back(nlohmann::json::parse(serialize_network(net)));
        nets.push_back(row);
    }
    doc["networks"] = nets;
    return doc.dump();
}

FbkanModel deserialize_model(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    if (doc.value("format", "") != std::string("fbkan-checkpoint-v1"))
        throw std::invalid_argument("deserialize_model: unknown format tag");
    FbkanModel model;
    model.bounds_samples = doc.value("bounds_samples", 1000);
    for (const auto& jl : doc.at("decomposition").at("levels")) {
        TensorDecomposition level;
        for (const auto& jd : jl.at("dims"))
            level.dims.push_back(make_decomposition_1d(jd.at("lo").get<double>(),
                                                       jd.at("hi").get<double>(),
                                                       jd.at("count").get<int>(),
                                                       jd.at("overlap").get<double>()));
        model.decomposition.levels.push_back(std::move(level));
    }
    for (const auto& jrow : doc.at("networks")) {
        std::vector<KanNetwork> row;
        for (const auto& jnet : jrow) row.push_back(deserialize_network(jnet.dump()));
        model.networks.push_back(std::move(row));
    }
    if (model.networks.size() != model.decomposition.levels.size())
        throw std::invalid_argument("deserialize_model: level count mismatch");
    return model;
}

}  // namespace fbkan
