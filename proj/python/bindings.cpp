#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbkan/bspline.hpp"
#include "fbkan/decomposition.hpp"
#include "fbkan/diffengine.hpp"
#include "fbkan/harness.hpp"
#include "fbkan/problems.hpp"

namespace py = pybind11;
using namespace fbkan;

namespace {

FbkanModel load_model(const std::string& checkpoint_path) {
    std::ifstream in(checkpoint_path);
    if (!in.good()) throw std::invalid_argument("cannot open " + checkpoint_path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    // accept either a bare model document or a run checkpoint wrapping one
    const auto key = text.find("\"fbkan-run-checkpoint-v1\"");
    if (key == std::string::npos) return deserialize_model(text);
    const auto model_key = text.find("\"model\"");
    if (model_key == std::string::npos)
        throw std::invalid_argument("checkpoint has no model document");
    const auto brace = text.find('{', model_key);
    int depth = 0;
    std::size_t end = brace;
    for (std::size_t i = brace; i < text.size(); ++i) {
        if (text[i] == '{') ++depth;
        if (text[i] == '}' && --depth == 0) {
            end = i;
            break;
        }
    }
    return deserialize_model(text.substr(brace, end - brace + 1));
}

std::vector<double> flatten_points(const std::vector<std::vector<double>>& points, int dim) {
    std::vector<double> flat;
    flat.reserve(points.size() * static_cast<std::size_t>(dim));
    for (const auto& p : points) {
        if (static_cast<int>(p.size()) != dim)
            throw std::invalid_argument("point dimension mismatch");
        flat.insert(flat.end(), p.begin(), p.end());
    }
    return flat;
}

py::dict summary_to_dict(const RunSummary& s) {
    py::dict d;
    d["problem"] = s.problem;
    d["seed"] = s.seed;
    d["iterations"] = s.iterations;
    d["final_rel_l2"] = s.final_rel_l2;
    d["loss_total"] = s.final_loss.total;
    d["loss_ic"] = s.final_loss.ic;
    d["loss_bc"] = s.final_loss.bc;
    d["loss_r"] = s.final_loss.residual;
    d["loss_data"] = s.final_loss.data;
    d["param_count"] = s.param_count;
    d["mean_relative_noise"] = s.mean_relative_noise;
    d["wall_seconds"] = s.wall_seconds;
    d["out_dir"] = s.out_dir;
    d["hash"] = s.hash;
    py::dict artifacts;
    for (const auto& [name, path] : s.artifacts) artifacts[py::str(name)] = path;
    d["artifacts"] = artifacts;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Finite-basis Kolmogorov-Arnold networks";

    m.def("problem_names", &problem_names, "Names of the built-in benchmark problems.");

    m.def(
        "basis_values",
        [](double lo, double hi, int intervals, int degree, double x, int order) {
            const KnotGrid grid = build_grid(lo, hi, intervals, degree);
            return basis_values(grid, x, order);
        },
        py::arg("lo"), py::arg("hi"), py::arg("intervals"), py::arg("degree"), py::arg("x"),
        py::arg("order") = 0,
        "B-spline basis values (or a derivative order) at x on a uniform grid.");

    m.def(
        "pou_weights",
        [](const std::vector<double>& lo, const std::vector<double>& hi,
           const std::vector<int>& counts, double overlap, const std::vector<double>& x) {
            if (lo.size() != hi.size() || lo.size() != counts.size())
                throw std::invalid_argument("lo/hi/counts must have equal length");
            const TensorDecomposition dec = make_tensor_decomposition(lo, hi, counts, overlap);
            if (x.size() != lo.size()) throw std::invalid_argument("point dimension mismatch");
            return pou_weights(dec, x);
        },
        py::arg("lo"), py::arg("hi"), py::arg("counts"), py::arg("overlap") = 1.9, py::arg("x"),
        "Partition-of-unity weights of a tensor decomposition at one point.");

    m.def(
        "run",
        [](const std::string& config, const std::vector<std::string>& overrides,
           std::uint64_t seed, const std::string& out, double fast_factor) {
            ConfigMap map = parse_config_file(find_preset(config));
            apply_overrides(map, overrides);
            map.set("run", "seed", std::to_string(seed));
            if (!out.empty()) map.set("run", "out", out);
            const RunConfig rc = resolve_config(map, fast_factor);
            return summary_to_dict(fbkan::run(rc));
        },
        py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = 0,
        py::arg("out") = std::string{}, py::arg("fast_factor") = 1.0,
        "Execute one training run from a preset name or config path.");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::vector<std::vector<double>>& points) {
            const FbkanModel model = load_model(checkpoint);
            const int dim = model.input_dim();
            const std::vector<double> flat = flatten_points(points, dim);
            std::vector<double> out(points.size());
            for (std::size_t i = 0; i < points.size(); ++i) {
                const std::span<const double> x(flat.data() + i * static_cast<std::size_t>(dim),
                                                static_cast<std::size_t>(dim));
                out[i] = fbkan_forward(model, x)[0];
            }
            return out;
        },
        py::arg("checkpoint"), py::arg("points"),
        "Evaluate a trained model (checkpoint.json or bare model document) at points.");

    m.def(
        "jet",
        [](const std::string& checkpoint, const std::vector<double>& x) {
            const FbkanModel model = load_model(checkpoint);
            if (static_cast<int>(x.size()) != model.input_dim())
                throw std::invalid_argument("point dimension mismatch");
            const JetValue j = eval_jet(model, x);
            py::dict d;
            d["value"] = j.value;
            d["first"] = j.first;
            d["second_diag"] = j.second_diag;
            return d;
        },
        py::arg("checkpoint"), py::arg("x"),
        "Value and input derivatives of a trained model at one point.");

    m.def(
        "sweep",
        [](const std::string& axis, const std::string& preset, const std::vector<double>& values,
           const std::string& out, std::uint64_t seed, double fast_factor,
           const std::vector<std::string>& overrides) {
            const SweepReport r =
                fbkan::sweep(axis, preset, values, out, seed, fast_factor, overrides);
            py::list rows;
            for (const SweepRow& row : r.rows) {
                py::dict d;
                d["value"] = row.value;
                d["rel_l2"] = row.rel_l2;
                d["mean_relative_noise"] = row.mean_relative_noise;
                rows.append(d);
            }
            return rows;
        },
        py::arg("axis"), py::arg("preset"), py::arg("values"), py::arg("out"),
        py::arg("seed") = 0, py::arg("fast_factor") = 1.0,
        py::arg("overrides") = std::vector<std::string>{},
        "Run a subdomain- or noise-axis sweep and return its rows.");
}
