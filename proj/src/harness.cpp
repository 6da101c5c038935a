#include "fbkan/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fbkan/errors.hpp"

#ifndef FBKAN_CONFIG_DIR
#define FBKAN_CONFIG_DIR "configs"
#endif

namespace fbkan {

namespace {

constexpr const char* kCodeVersion = "fbkan-1.0";
constexpr double kPi = 3.14159265358979323846;

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a number");
    }
}

int to_int(const std::string& key, const std::string& value) {
    const double v = to_double(key, value);
    const int i = static_cast<int>(std::llround(v));
    if (v != i) throw std::invalid_argument("config key '" + key + "': '" + value + "' is not an integer");
    return i;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_int(key, item));
    }
    if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema = {
        {"problem", {"name", "a1", "a2", "kh", "c", "M", "noise"}},
        {"model",
         {"widths", "degree", "subdomains", "levels", "overlap", "hidden_lo", "hidden_hi"}},
        {"training",
         {"lr", "lr_scale", "iterations", "grid_values", "grid_iterations", "lambda_ic",
          "lambda_bc", "lambda_r", "lambda_data", "n_r", "n_bc", "n_ic", "n_data",
          "resample_residual", "metric_every"}},
        {"run", {"seed", "out", "checkpoint"}},
    };
    return schema;
}

void validate_keys(const ConfigMap& config) {
    const auto& schema = config_schema();
    for (const auto& [section, keys] : config.sections) {
        const auto sit = schema.find(section);
        if (sit == schema.end())
            throw std::invalid_argument("unknown config section '[" + section + "]'");
        for (const auto& [key, value] : keys)
            if (!sit->second.count(key))
                throw std::invalid_argument("unknown config key '" + section + "." + key + "'");
    }
}

// Proportional rescale of the iteration schedule for --fast runs; grid events
// keep their relative position and stay strictly increasing.
void scale_schedule(ProblemDefaults& d, double factor) {
    if (factor == 1.0) return;
    d.iterations = std::max(1, static_cast<int>(std::lround(d.iterations * factor)));
    for (std::size_t i = 1; i < d.grid_iterations.size(); ++i) {
        int scaled = static_cast<int>(std::lround(d.grid_iterations[i] * factor));
        if (scaled <= d.grid_iterations[i - 1]) scaled = d.grid_iterations[i - 1] + 1;
        d.grid_iterations[i] = scaled;
    }
}

std::string canonical_echo(const ProblemSpec& p, const std::map<std::string, double>& params,
                           std::uint64_t seed, const std::string& out_dir,
                           const std::string& checkpoint) {
    std::ostringstream os;
    os << "[problem]\n";
    os << "name = " << p.name << "\n";
    for (const auto& [k, v] : params) os << k << " = " << fmt_double(v) << "\n";
    if (p.defaults.noise_sigma > 0.0) os << "noise = " << fmt_double(p.defaults.noise_sigma) << "\n";
    os << "[model]\n";
    os << "widths = " << join_ints(p.defaults.widths) << "\n";
    os << "degree = " << p.defaults.degree << "\n";
    os << "levels = " << join_ints(p.defaults.level_totals) << "\n";
    os << "overlap = " << fmt_double(p.defaults.overlap) << "\n";
    os << "hidden_lo = " << fmt_double(p.defaults.hidden.lo) << "\n";
    os << "hidden_hi = " << fmt_double(p.defaults.hidden.hi) << "\n";
    os << "[training]\n";
    os << "lr = " << fmt_double(p.defaults.lr) << "\n";
    os << "lr_scale = " << fmt_double(p.defaults.lr_scale) << "\n";
    os << "iterations = " << p.defaults.iterations << "\n";
    os << "grid_values = " << join_ints(p.defaults.grid_values) << "\n";
    os << "grid_iterations = " << join_ints(p.defaults.grid_iterations) << "\n";
    os << "lambda_ic = " << fmt_double(p.defaults.weights.lambda_ic) << "\n";
    os << "lambda_bc = " << fmt_double(p.defaults.weights.lambda_bc) << "\n";
    os << "lambda_r = " << fmt_double(p.defaults.weights.lambda_r) << "\n";
    os << "lambda_data = " << fmt_double(p.defaults.weights.lambda_data) << "\n";
    os << "n_r = " << p.defaults.counts.n_r << "\n";
    os << "n_bc = " << p.defaults.counts.n_bc << "\n";
    os << "n_ic = " << p.defaults.counts.n_ic << "\n";
    os << "n_data = " << p.defaults.counts.n_data << "\n";
    os << "resample_residual = " << (p.defaults.resample_residual ? "true" : "false") << "\n";
    os << "metric_every = " << p.defaults.metric_every << "\n";
    os << "[run]\n";
    os << "seed = " << seed << "\n";
    os << "out = " << out_dir << "\n";
    if (!checkpoint.empty()) os << "checkpoint = " << checkpoint << "\n";
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

const std::string* ConfigMap::find(const std::string& section, const std::string& key) const {
    const auto sit = sections.find(section);
    if (sit == sections.end()) return nullptr;
    const auto kit = sit->second.find(key);
    return kit == sit->second.end() ? nullptr : &kit->second;
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            config.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty() || key.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": key outside a section");
        config.sections[section][key] = value;
    }
    return config;
}

ConfigMap parse_config_file(const std::string& path) {
    return parse_config_text(read_text(path));
}

void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides) {
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        const auto dot = item.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw std::invalid_argument("override '" + item + "' is not section.key=value");
        config.set(trim(item.substr(0, dot)), trim(item.substr(dot + 1, eq - dot - 1)),
                   trim(item.substr(eq + 1)));
    }
}

RunConfig resolve_config(const ConfigMap& config, double fast_factor) {
    validate_keys(config);

    const std::string* name = config.find("problem", "name");
    if (!name) throw std::invalid_argument("config is missing problem.name");

    std::map<std::string, double> params;
    for (const char* key : {"a1", "a2", "kh", "c", "M"})
        if (const std::string* v = config.find("problem", key)) params[key] = to_double(key, *v);

    RunConfig rc;
    rc.problem = make_problem(*name, params);
    ProblemDefaults& d = rc.problem.defaults;

    if (const auto* v = config.find("problem", "noise")) d.noise_sigma = to_double("noise", *v);

    if (const auto* v = config.find("model", "widths")) d.widths = to_int_list("widths", *v);
    if (const auto* v = config.find("model", "degree")) d.degree = to_int("degree", *v);
    if (const auto* v = config.find("model", "subdomains"))
        d.level_totals = {to_int("subdomains", *v)};
    if (const auto* v = config.find("model", "levels")) d.level_totals = to_int_list("levels", *v);
    if (const auto* v = config.find("model", "overlap")) d.overlap = to_double("overlap", *v);
    if (const auto* v = config.find("model", "hidden_lo")) d.hidden.lo = to_double("hidden_lo", *v);
    if (const auto* v = config.find("model", "hidden_hi")) d.hidden.hi = to_double("hidden_hi", *v);

    if (const auto* v = config.find("training", "lr")) d.lr = to_double("lr", *v);
    if (const auto* v = config.find("training", "lr_scale")) d.lr_scale = to_double("lr_scale", *v);
    if (const auto* v = config.find("training", "iterations"))
        d.iterations = to_int("iterations", *v);
    if (const auto* v = config.find("training", "grid_values"))
        d.grid_values = to_int_list("grid_values", *v);
    if (const auto* v = config.find("training", "grid_iterations"))
        d.grid_iterations = to_int_list("grid_iterations", *v);
    if (const auto* v = config.find("training", "lambda_ic"))
        d.weights.lambda_ic = to_double("lambda_ic", *v);
    if (const auto* v = config.find("training", "lambda_bc"))
        d.weights.lambda_bc = to_double("lambda_bc", *v);
    if (const auto* v = config.find("training", "lambda_r"))
        d.weights.lambda_r = to_double("lambda_r", *v);
    if (const auto* v = config.find("training", "lambda_data"))
        d.weights.lambda_data = to_double("lambda_data", *v);
    if (const auto* v = config.find("training", "n_r")) d.counts.n_r = to_int("n_r", *v);
    if (const auto* v = config.find("training", "n_bc")) d.counts.n_bc = to_int("n_bc", *v);
    if (const auto* v = config.find("training", "n_ic")) d.counts.n_ic = to_int("n_ic", *v);
    if (const auto* v = config.find("training", "n_data")) d.counts.n_data = to_int("n_data", *v);
    if (const auto* v = config.find("training", "resample_residual"))
        d.resample_residual = to_bool("resample_residual", *v);
    if (const auto* v = config.find("training", "metric_every"))
        d.metric_every = to_int("metric_every", *v);

    if (d.grid_values.size() != d.grid_iterations.size())
        throw std::invalid_argument("grid_values and grid_iterations must have equal length");

    scale_schedule(d, fast_factor);

    if (const auto* v = config.find("run", "seed"))
        rc.seed = static_cast<std::uint64_t>(to_int("seed", *v));
    if (const auto* v = config.find("run", "out")) rc.out_dir = *v;
    if (const auto* v = config.find("run", "checkpoint")) rc.checkpoint = *v;

    rc.config_echo = canonical_echo(rc.problem, params, rc.seed, rc.out_dir, rc.checkpoint);
    return rc;
}

RunSummary run(const RunConfig& config) {
    namespace fs = std::filesystem;
    const ProblemSpec& problem = config.problem;
    fs::create_directories(config.out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    FbkanModel model;
    if (!config.checkpoint.empty()) {
        const nlohmann::json doc = nlohmann::json::parse(read_text(config.checkpoint));
        model = deserialize_model(doc.at("model").dump());
        if (model.input_dim() != problem.dim)
            throw std::invalid_argument("checkpoint dimension does not match the problem");
    } else {
        model = build_problem_model(problem, config.seed);
    }

    const std::string metrics_path = config.out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot write '" + metrics_path + "'");
    metrics << "iteration,lr,grid,loss_total,loss_ic,loss_bc,loss_r,loss_data,rel_l2\n";
    TrainCallbacks callbacks;
    callbacks.on_metric = [&metrics](const MetricRow& row) {
        metrics << row.iteration << ',' << fmt_double(row.lr) << ',' << row.grid << ','
                << fmt_double(row.loss_total) << ',' << fmt_double(row.loss_ic) << ','
                << fmt_double(row.loss_bc) << ',' << fmt_double(row.loss_r) << ','
                << fmt_double(row.loss_data) << ',';
        if (std::isfinite(row.rel_l2)) metrics << fmt_double(row.rel_l2);
        metrics << '\n';
    };

    const TrainSchedule schedule = schedule_from(problem.defaults);
    TrainResult result =
        train(model, problem, schedule, problem.defaults.weights, config.seed, callbacks);
    metrics.close();

    RunSummary summary;
    summary.problem = problem.name;
    summary.seed = config.seed;
    summary.iterations = schedule.iterations;
    summary.param_count = model.param_count();
    summary.mean_relative_noise = result.mean_relative_noise;
    summary.out_dir = config.out_dir;

    // prediction table over the evaluation grid (also supplies the error for
    // zero-iteration runs)
    const std::vector<double> grid = test_grid(problem);
    const int n = static_cast<int>(grid.size()) / problem.dim;
    std::vector<double> pred(static_cast<std::size_t>(n));
    std::vector<double> truth(static_cast<std::size_t>(n));
    {
        FbkanEval eval(model);
        const std::string pred_path = config.out_dir + "/predictions.csv";
        std::ofstream out(pred_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + pred_path + "'");
        out << (problem.dim == 1 ? "x,prediction,exact,abs_error\n"
                                 : "x,y,prediction,exact,abs_error\n");
        for (int i = 0; i < n; ++i) {
            const std::span<const double> x(grid.data() + static_cast<std::size_t>(i) * problem.dim,
                                            static_cast<std::size_t>(problem.dim));
            pred[static_cast<std::size_t>(i)] = eval.value(x);
            truth[static_cast<std::size_t>(i)] = problem.exact(x);
            for (int a = 0; a < problem.dim; ++a) out << fmt_double(x[static_cast<std::size_t>(a)]) << ',';
            out << fmt_double(pred[static_cast<std::size_t>(i)]) << ','
                << fmt_double(truth[static_cast<std::size_t>(i)]) << ','
                << fmt_double(std::abs(pred[static_cast<std::size_t>(i)] -
                                       truth[static_cast<std::size_t>(i)]))
                << '\n';
        }
        summary.artifacts["predictions"] = pred_path;
    }
    summary.final_rel_l2 =
        result.history.empty() ? relative_l2(pred, truth) : result.history.back().rel_l2;

    if (!result.history.empty()) {
        const MetricRow& last = result.history.back();
        summary.final_loss.total = last.loss_total;
        summary.final_loss.ic = last.loss_ic;
        summary.final_loss.bc = last.loss_bc;
        summary.final_loss.residual = last.loss_r;
        summary.final_loss.data = last.loss_data;
    }
    summary.artifacts["metrics"] = metrics_path;

    {
        nlohmann::json ckpt;
        ckpt["format"] = "fbkan-run-checkpoint-v1";
        ckpt["iterations"] = schedule.iterations;
        ckpt["seed"] = config.seed;
        ckpt["model"] = nlohmann::json::parse(serialize_model(model));
        const std::string path = config.out_dir + "/checkpoint.json";
        write_text(path, ckpt.dump());
        summary.artifacts["checkpoint"] = path;
    }

    // hash covers code version, the scientific part of the config and the
    // seed; output location and timing stay out of it
    const auto run_section = config.config_echo.find("[run]");
    summary.hash = hex64(fnv1a64(std::string(kCodeVersion) + "\n" +
                                 config.config_echo.substr(0, run_section) + "\n" +
                                 std::to_string(config.seed)));
    summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
        nlohmann::json doc;
        doc["format"] = "fbkan-summary-v1";
        doc["problem"] = summary.problem;
        doc["seed"] = summary.seed;
        doc["iterations"] = summary.iterations;
        doc["final_rel_l2"] = summary.final_rel_l2;
        doc["final_loss"] = {{"total", summary.final_loss.total},
                             {"ic", summary.final_loss.ic},
                             {"bc", summary.final_loss.bc},
                             {"r", summary.final_loss.residual},
                             {"data", summary.final_loss.data}};
        doc["param_count"] = summary.param_count;
        doc["mean_relative_noise"] = summary.mean_relative_noise;
        doc["wall_seconds"] = summary.wall_seconds;
        doc["config"] = config.config_echo;
        doc["artifacts"] = summary.artifacts;
        doc["hash"] = summary.hash;
        const std::string path = config.out_dir + "/summary.json";
        write_text(path, doc.dump(2));
        summary.artifacts["summary"] = path;
    }
    return summary;
}

RunSummary read_summary(const std::string& path) {
    const nlohmann::json doc = nlohmann::json::parse(read_text(path));
    if (doc.value("format", "") != std::string("fbkan-summary-v1"))
        throw std::invalid_argument("read_summary: unknown format tag");
    RunSummary s;
    s.problem = doc.at("problem").get<std::string>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.iterations = doc.at("iterations").get<int>();
    s.final_rel_l2 = doc.at("final_rel_l2").get<double>();
    s.final_loss.total = doc.at("final_loss").at("total").get<double>();
    s.final_loss.ic = doc.at("final_loss").at("ic").get<double>();
    s.final_loss.bc = doc.at("final_loss").at("bc").get<double>();
    s.final_loss.residual = doc.at("final_loss").at("r").get<double>();
    s.final_loss.data = doc.at("final_loss").at("data").get<double>();
    s.param_count = doc.at("param_count").get<std::size_t>();
    s.mean_relative_noise = doc.at("mean_relative_noise").get<double>();
    s.wall_seconds = doc.at("wall_seconds").get<double>();
    s.hash = doc.at("hash").get<std::string>();
    for (const auto& [k, v] : doc.at("artifacts").items()) s.artifacts[k] = v.get<std::string>();
    return s;
}

std::string find_preset(const std::string& name) {
    namespace fs = std::filesystem;
    const std::vector<std::string> candidates = {
        name,
        "configs/" + name + ".ini",
        "configs/" + name,
        std::string(FBKAN_CONFIG_DIR) + "/" + name + ".ini",
        std::string(FBKAN_CONFIG_DIR) + "/" + name,
    };
    for (const std::string& c : candidates)
        if (fs::exists(c) && fs::is_regular_file(c)) return c;
    throw std::invalid_argument("preset '" + name + "' not found (searched ./configs and " +
                                FBKAN_CONFIG_DIR ")");
}

namespace {

struct Cell {
    std::string id;
    std::string label;
    std::string preset;
    std::vector<std::string> overrides;
    double paper = 0.0;
    double upper = -1.0;  // pass if obtained <= upper (when >= 0)
    double lower = -1.0;  // pass if obtained >= lower (when >= 0)
    bool required = false;
};

struct Relation {
    std::string a;  // pass if err[a] <= factor * err[b]
    std::string b;
    double factor = 1.0;
    std::string note;
    bool required = false;
};

struct TableDef {
    std::vector<Cell> cells;
    std::vector<Relation> relations;
};

TableDef table_data2() {
    TableDef t;
    t.cells = {
        {"kan1", "KAN-1 (fixed grid)", "data2-kan1", {}, 2.36e-1, 2 * 2.36e-1, 2.36e-1 / 2, true},
        {"fbkan1", "FBKAN-1 (fixed grid, L=4)", "data2-fbkan1", {}, 7.43e-2, 2 * 7.43e-2,
         7.43e-2 / 2, true},
        {"kan2", "KAN-2 (grid extension)", "data2-kan2", {}, 8.10e-2, 2 * 8.10e-2, 8.10e-2 / 2,
         true},
        {"fbkan2", "FBKAN-2 (grid extension, L=4)", "data2-fbkan2", {}, 2.27e-2, 2 * 2.27e-2,
         2.27e-2 / 2, true},
    };
    t.relations = {
        {"fbkan1", "kan1", 1.0, "FBKAN-1 below KAN-1", true},
        {"fbkan2", "kan2", 1.0, "FBKAN-2 below KAN-2", true},
    };
    return t;
}

TableDef table_pi2() {
    TableDef t;
    struct Row {
        const char* id;
        const char* label;
        const char* preset;
        std::vector<std::string> extra;
        double paper[3];
    };
    const std::vector<Row> rows = {
        {"kan1", "KAN-1", "helmholtz-kan1", {}, {0.0259, 0.5465, 1.1254}},
        {"fbkan1-l4", "FBKAN-1, L=4", "helmholtz-fbkan1", {}, {0.0102, 0.0267, 0.1151}},
        {"fbkan1-l9", "FBKAN-1, L=9", "helmholtz-fbkan1", {"model.subdomains=9"},
         {0.0213, 0.0239, 0.0399}},
        {"fbkan1-l16", "FBKAN-1, L=16", "helmholtz-fbkan1", {"model.subdomains=16"},
         {0.0037, 0.0128, 0.0321}},
        {"kan2", "KAN-2", "helmholtz-kan2", {}, {0.0180, 0.2045, 0.5854}},
        {"fbkan2", "FBKAN-2, L=4", "helmholtz-fbkan2", {}, {0.0112, 0.0427, 0.2272}},
        {"kan3", "KAN-3", "helmholtz-kan3", {}, {0.3771, 0.5488, 1.2825}},
        {"fbkan3", "FBKAN-3, L=4", "helmholtz-fbkan3", {}, {0.0214, 0.2760, 0.9797}},
    };
    const std::vector<std::pair<std::string, std::array<int, 2>>> cols = {
        {"a1=1,a2=4", {1, 4}}, {"a1=4,a2=4", {4, 4}}, {"a1=6,a2=6", {6, 6}}};
    for (const Row& row : rows) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            Cell cell;
            cell.id = std::string(row.id) + "@" + std::to_string(cols[c].second[0]) +
                      std::to_string(cols[c].second[1]);
            cell.label = std::string(row.label) + ", " + cols[c].first;
            cell.preset = row.preset;
            cell.overrides = row.extra;
            cell.overrides.push_back("problem.a1=" + std::to_string(cols[c].second[0]));
            cell.overrides.push_back("problem.a2=" + std::to_string(cols[c].second[1]));
            cell.paper = row.paper[c];
            t.cells.push_back(cell);
        }
    }
    for (Cell& cell : t.cells) {
        if (cell.id == "fbkan1-l4@44") {
            cell.upper = 0.06;
            cell.required = true;
        } else if (cell.id == "kan1@44") {
            cell.lower = 0.30;
            cell.required = true;
        } else if (cell.id == "fbkan1-l16@14") {
            cell.upper = 0.02;
            cell.required = true;
        }
    }
    return t;
}

TableDef table_ml_pi() {
    TableDef t;
    struct Row {
        const char* id;
        const char* label;
        const char* preset;
        std::vector<std::string> extra;
        double paper[3];
    };
    const std::vector<Row> rows = {
        {"kan", "KAN", "mlpi-kan", {}, {0.89089, 0.92729, 1.08556}},
        {"fbkan-l4", "FBKAN, L=4", "mlpi-fbkan-l4", {}, {0.91962, 0.87100, 0.33474}},
        {"fbkan-l16", "FBKAN, L=16", "mlpi-fbkan-l16", {}, {0.28707, 0.72251, 0.04175}},
        {"fbkan-l36", "FBKAN, L=36", "mlpi-fbkan-l36", {}, {0.33562, 0.51766, 0.09343}},
        {"mlfbkan-n2", "MLFBKAN, N=2 (1,4)", "mlpi-mlfbkan-n2", {}, {0.24593, 0.87294, 0.10461}},
        {"mlfbkan-n3", "MLFBKAN, N=3 (1,4,16)", "mlpi-mlfbkan-n3", {},
         {0.06353, 0.27380, 0.02926}},
        {"mlfbkan-n4", "MLFBKAN, N=4 (1,4,16,36)", "mlpi-mlfbkan-n4", {},
         {0.04231, 0.12012, 0.03066}},
    };
    struct Col {
        const char* suffix;
        const char* label;
        std::vector<std::string> overrides;
    };
    const std::vector<Col> cols = {
        {"a8", "Helmholtz a1=a2=8", {"problem.a1=8", "problem.a2=8"}},
        {"a10", "Helmholtz a1=a2=10", {"problem.a1=10", "problem.a2=10"}},
        {"m5", "Laplacian M=5", {"problem.name=ml-laplacian", "problem.M=5"}},
    };
    for (const Row& row : rows) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            Cell cell;
            cell.id = std::string(row.id) + "@" + cols[c].suffix;
            cell.label = std::string(row.label) + ", " + cols[c].label;
            cell.preset = row.preset;
            cell.overrides = row.extra;
            for (const std::string& o : cols[c].overrides) cell.overrides.push_back(o);
            cell.paper = row.paper[c];
            t.cells.push_back(cell);
        }
    }
    for (Cell& cell : t.cells) {
        if (cell.id == "mlfbkan-n3@a8") {
            cell.upper = 0.15;
            cell.required = true;
        } else if (cell.id == "fbkan-l16@m5") {
            cell.upper = 0.10;
            cell.required = true;
        }
    }
    t.relations = {
        {"mlfbkan-n3@a8", "fbkan-l16@a8", 0.5, "MLFBKAN N=3 at most half of FBKAN L=16 (a=8)",
         true},
        {"mlfbkan-n3@m5", "fbkan-l4@m5", 1.0, "MLFBKAN N=3 below FBKAN L=4 (M=5)", true},
    };
    return t;
}

TableDef table_for(const std::string& table) {
    if (table == "data2") return table_data2();
    if (table == "pi2") return table_pi2();
    if (table == "ml-pi") return table_ml_pi();
    throw std::invalid_argument("unknown table '" + table + "' (expected data2, pi2 or ml-pi)");
}

}  // namespace

ReproduceReport reproduce(const std::string& table, const std::string& out_root,
                          std::uint64_t seed, double fast_factor,
                          const std::string& row_filter) {
    const TableDef def = table_for(table);
    ReproduceReport report;
    report.table = table;

    std::map<std::string, double> obtained;
    for (const Cell& cell : def.cells) {
        if (!row_filter.empty() && cell.id.find(row_filter) == std::string::npos) continue;
        ConfigMap config = parse_config_file(find_preset(cell.preset));
        apply_overrides(config, cell.overrides);
        config.set("run", "seed", std::to_string(seed));
        config.set("run", "out", out_root + "/" + table + "/" + cell.id);
        const RunConfig rc = resolve_config(config, fast_factor);
        std::printf("[reproduce %s] %-34s running...\n", table.c_str(), cell.label.c_str());
        std::fflush(stdout);
        const RunSummary summary = run(rc);

        CellResult res;
        res.id = cell.id;
        res.label = cell.label;
        res.paper = cell.paper;
        res.obtained = summary.final_rel_l2;
        res.ratio = cell.paper > 0.0 ? summary.final_rel_l2 / cell.paper : 0.0;
        res.required = cell.required;
        res.checked = cell.upper >= 0.0 || cell.lower >= 0.0;
        if (cell.upper >= 0.0 && res.obtained > cell.upper) res.passed = false;
        if (cell.lower >= 0.0 && res.obtained < cell.lower) res.passed = false;
        if (res.required && !res.passed) report.required_ok = false;
        obtained[cell.id] = res.obtained;
        report.cells.push_back(res);
    }

    for (const Relation& rel : def.relations) {
        const auto a = obtained.find(rel.a);
        const auto b = obtained.find(rel.b);
        if (a == obtained.end() || b == obtained.end()) continue;
        const bool ok = a->second <= rel.factor * b->second;
        report.relation_lines.push_back(rel.note + ": " + fmt_double(a->second) +
                                        (ok ? " <= " : " > ") + fmt_double(rel.factor * b->second) +
                                        (ok ? "  [pass]" : "  [FAIL]"));
        if (rel.required && !ok) report.required_ok = false;
    }

    std::filesystem::create_directories(out_root);
    std::ostringstream csv;
    csv << "id,label,paper,obtained,ratio,checked,required,passed\n";
    for (const CellResult& c : report.cells)
        csv << c.id << ",\"" << c.label << "\"," << fmt_double(c.paper) << ','
            << fmt_double(c.obtained) << ',' << fmt_double(c.ratio) << ','
            << (c.checked ? 1 : 0) << ',' << (c.required ? 1 : 0) << ',' << (c.passed ? 1 : 0)
            << '\n';
    write_text(out_root + "/reproduce-" + table + ".csv", csv.str());
    return report;
}

SweepReport sweep(const std::string& axis, const std::string& preset,
                  const std::vector<double>& values, const std::string& out_root,
                  std::uint64_t seed, double fast_factor,
                  const std::vector<std::string>& overrides) {
    if (axis != "subdomains" && axis != "noise")
        throw std::invalid_argument("unknown sweep axis '" + axis +
                                    "' (expected subdomains or noise)");
    if (values.empty()) throw std::invalid_argument("sweep: no values given");

    SweepReport report;
    report.axis = axis;

    // Noise levels are target mean-relative-noise fractions; the Gaussian
    // sigma giving that level in expectation is level * mean|f| * sqrt(pi/2).
    double abs_mean = 0.0;
    if (axis == "noise") {
        ConfigMap config = parse_config_file(find_preset(preset));
        apply_overrides(config, overrides);
        const RunConfig rc = resolve_config(config, fast_factor);
        const SampleBuild clean = make_sample_set(rc.problem, seed);
        double total = 0.0;
        std::size_t count = 0;
        for (const ConstraintGroup& g : clean.groups) {
            if (g.term != LossTerm::Data) continue;
            for (double v : g.aux) total += std::abs(v);
            count += g.aux.size();
        }
        if (count == 0) throw std::invalid_argument("noise sweep needs a data term");
        abs_mean = total / static_cast<double>(count);
    }

    for (double value : values) {
        ConfigMap config = parse_config_file(find_preset(preset));
        apply_overrides(config, overrides);
        std::string tag;
        if (axis == "subdomains") {
            const int l = static_cast<int>(std::llround(value));
            config.set("model", "subdomains", std::to_string(l));
            tag = "L" + std::to_string(l);
        } else {
            const double sigma = value * abs_mean * std::sqrt(kPi / 2.0);
            config.set("problem", "noise", fmt_double(sigma));
            tag = "noise" + fmt_double(value);
        }
        config.set("run", "seed", std::to_string(seed));
        config.set("run", "out", out_root + "/" + axis + "-" + tag);
        const RunConfig rc = resolve_config(config, fast_factor);
        std::printf("[sweep %s] %s = %s running...\n", axis.c_str(), axis.c_str(),
                    fmt_double(value).c_str());
        std::fflush(stdout);
        const RunSummary summary = run(rc);
        report.rows.push_back({value, summary.final_rel_l2, summary.mean_relative_noise});
    }

    std::filesystem::create_directories(out_root);
    std::ostringstream csv;
    csv << "value,rel_l2,mean_relative_noise\n";
    for (const SweepRow& row : report.rows)
        csv << fmt_double(row.value) << ',' << fmt_double(row.rel_l2) << ','
            << fmt_double(row.mean_relative_noise) << '\n';
    write_text(out_root + "/sweep-" + axis + ".csv", csv.str());
    return report;
}

}  // namespace fbkan
