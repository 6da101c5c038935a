#include "fbkan/kan.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

#include "fbkan/errors.hpp"
#include "fbkan/rng.hpp"

namespace fbkan {

double base_function(double x) {
    if (x >= 0.0) return x * (1.0 / (1.0 + std::exp(-x)));
    const double e = std::exp(x);
    return x * (e / (1.0 + e));
}

void base_function_derivs(double x, double out[4]) {
    double sig;
    if (x >= 0.0) {
        sig = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        sig = e / (1.0 + e);
    }
    const double s1 = sig * (1.0 - sig);
    const double s2 = s1 * (1.0 - 2.0 * sig);
    const double s3 = s2 * (1.0 - 2.0 * sig) - 2.0 * s1 * s1;
    out[0] = x * sig;
    out[1] = sig + x * s1;
    out[2] = 2.0 * s1 + x * s2;
    out[3] = 3.0 * s2 + x * s3;
}

KanNetwork init_network(const std::vector<int>& widths,
                        const std::vector<std::vector<GridSpec>>& grid_specs, std::uint64_t seed) {
    if (widths.size() < 2) throw std::invalid_argument("init_network: need at least two widths");
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("init_network: widths must be positive");
    if (grid_specs.size() != widths.size() - 1)
        throw std::invalid_argument("init_network: one grid spec list per layer required");

    KanNetwork net;
    net.widths = widths;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        KanLayer layer;
        layer.fan_in = widths[l];
        layer.fan_out = widths[l + 1];
        const auto& specs = grid_specs[l];
        if (static_cast<int>(specs.size()) != layer.fan_in)
            throw std::invalid_argument("init_network: grid spec count must match layer fan-in");
        for (const GridSpec& s : specs) {
            if (s.intervals != specs.front().intervals || s.degree != specs.front().degree)
                throw std::invalid_argument(
                    "init_network: all grids of a layer must share (intervals, degree)");
            layer.grids.push_back(build_grid(s.lo, s.hi, s.intervals, s.degree));
        }
        layer.param_offset = offset;
        offset += layer.param_count();
        net.layers.push_back(std::move(layer));
    }

    net.params.assign(offset, 0.0);
    RngStream rng(seed, "kan-init");
    for (const KanLayer& layer : net.layers) {
        const int nb = layer.basis_count();
        const double wb_bound = std::sqrt(6.0 / (layer.fan_in + layer.fan_out));
        for (int e = 0; e < layer.edge_count(); ++e) {
            double* block = net.params.data() + layer.param_offset +
                            static_cast<std::size_t>(e) * layer.edge_stride();
            block[0] = rng.next_uniform(-wb_bound, wb_bound);  // w_b
            block[1] = 1.0;                                    // w_s
            for (int c = 0; c < nb; ++c) block[2 + c] = 0.1 * rng.next_normal();
        }
    }
    return net;
}

KanNetwork init_network(const std::vector<int>& widths, const std::vector<GridSpec>& input_grids,
                        const GridSpec& hidden_grid, std::uint64_t seed) {
    std::vector<std::vector<GridSpec>> specs;
    specs.push_back(input_grids);
    for (std::size_t l = 1; l + 1 < widths.size(); ++l)
        specs.emplace_back(static_cast<std::size_t>(widths[l]), hidden_grid);
    return init_network(widths, specs, seed);
}

std::vector<double> kan_forward(const KanNetwork& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.input_dim())
        throw std::invalid_argument("kan_forward: input dimension mismatch");

    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    std::vector<double> basis;
    for (const KanLayer& layer : net.layers) {
        const int nb = layer.basis_count();
        next.assign(static_cast<std::size_t>(layer.fan_out), 0.0);
        basis.resize(static_cast<std::size_t>(nb));
        for (int i = 0; i < layer.fan_in; ++i) {
            const double z = cur[static_cast<std::size_t>(i)];
            basis_values_all(layer.grids[static_cast<std::size_t>(i)], z, 0, basis.data());
            const double bz = base_function(z);
            for (int o = 0; o < layer.fan_out; ++o) {
                const double* block = net.params.data() + layer.edge_offset(o, i);
                double s = 0.0;
                for (int c = 0; c < nb; ++c) s += block[2 + c] * basis[static_cast<std::size_t>(c)];
                next[static_cast<std::size_t>(o)] += block[0] * bz + block[1] * s;
            }
        }
        cur.swap(next);
    }
    return cur;
}

std::size_t param_count(const KanNetwork& net) { return net.params.size(); }

void extend_network_grid(KanNetwork& net, int new_intervals) {
    KanNetwork out;
    out.widths = net.widths;
    std::size_t offset = 0;
    for (const KanLayer& layer : net.layers) {
        KanLayer fresh;
        fresh.fan_in = layer.fan_in;
        fresh.fan_out = layer.fan_out;
        for (const KnotGrid& g : layer.grids)
            fresh.grids.push_back(build_grid(g.lo, g.hi, new_intervals, g.degree));
        fresh.param_offset = offset;
        offset += fresh.param_count();
        out.layers.push_back(std::move(fresh));
    }
    out.params.assign(offset, 0.0);

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const KanLayer& old_layer = net.layers[l];
        const KanLayer& new_layer = out.layers[l];
        const int nb_old = old_layer.basis_count();
        const int nb_new = new_layer.basis_count();
        const int n = detail::refit_sample_count(nb_new);
        Eigen::MatrixXd design(n, nb_new);
        Eigen::MatrixXd old_design(n, nb_old);
        std::vector<double> row(static_cast<std::size_t>(std::max(nb_new, nb_old)));
        for (int i = 0; i < old_layer.fan_in; ++i) {
            const KnotGrid& og = old_layer.grids[static_cast<std::size_t>(i)];
            const KnotGrid& ng = new_layer.grids[static_cast<std::size_t>(i)];
            for (int r = 0; r < n; ++r) {
                const double x = og.lo + (og.hi - og.lo) * (r + 0.5) / n;
                basis_values_all(ng, x, 0, row.data());
                for (int c = 0; c < nb_new; ++c) design(r, c) = row[static_cast<std::size_t>(c)];
                basis_values_all(og, x, 0, row.data());
                for (int c = 0; c < nb_old; ++c) old_design(r, c) = row[static_cast<std::size_t>(c)];
            }
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
            if (qr.rank() < nb_new)
                throw NumericalError("extend_network_grid: rank-deficient refit system");
            for (int o = 0; o < old_layer.fan_out; ++o) {
                const double* old_block = net.params.data() + old_layer.edge_offset(o, i);
                double* new_block = out.params.data() + new_layer.edge_offset(o, i);
                new_block[0] = old_block[0];
                new_block[1] = old_block[1];
                Eigen::VectorXd old_coeffs =
                    Eigen::Map<const Eigen::VectorXd>(old_block + 2, nb_old);
                Eigen::VectorXd target = old_design * old_coeffs;
                Eigen::VectorXd refit = qr.solve(target);
                for (int c = 0; c < nb_new; ++c) new_block[2 + c] = refit(c);
            }
        }
    }
    net = std::move(out);
}

std::string serialize_network(const KanNetwork& net) {
    nlohmann::json doc;
    doc["format"] = "fbkan-network-v1";
    doc["widths"] = net.widths;
    nlohmann::json layers = nlohmann::json::array();
    for (const KanLayer& layer : net.layers) {
        nlohmann::json grids = nlohmann::json::array();
        for (const KnotGrid& g : layer.grids)
            grids.push_back({{"lo", g.lo}, {"hi", g.hi}, {"intervals", g.intervals}, {"degree", g.degree}});
        layers.push_back({{"fan_in", layer.fan_in}, {"fan_out", layer.fan_out}, {"grids", grids}});
    }
    doc["layers"] = layers;
    doc["params"] = net.params;
    return doc.dump();
}

KanNetwork deserialize_network(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    if (doc.value("format", "") != std::string("fbkan-network-v1"))
        throw std::invalid_argument("deserialize_network: unknown format tag");
    KanNetwork net;
    net.widths = doc.at("widths").get<std::vector<int>>();
    std::size_t offset = 0;
    for (const auto& jl : doc.at("layers")) {
        KanLayer layer;
        layer.fan_in = jl.at("fan_in").get<int>();
        layer.fan_out = jl.at("fan_out").get<int>();
        for (const auto& jg : jl.at("grids"))
            layer.grids.push_back(build_grid(jg.at("lo").get<double>(), jg.at("hi").get<double>(),
                                             jg.at("intervals").get<int>(),
                                             jg.at("degree").get<int>()));
        layer.param_offset = offset;
        offset += layer.param_count();
        net.layers.push_back(std::move(layer));
    }
    net.params = doc.at("params").get<std::vector<double>>();
    if (net.params.size() != offset)
        throw std::invalid_argument("deserialize_network: parameter count mismatch");
    return net;
}

}  // namespace fbkan
