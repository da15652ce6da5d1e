#include "sfid/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sfid/errors.hpp"

namespace sfid {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- parsing

namespace {

using Errors = std::vector<std::string>;

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed,
                Errors& errs) {
    if (!obj.is_object()) return;
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || item.key() == a;
        if (!ok) errs.push_back(path + item.key() + ": unknown key");
    }
}

template <class T>
T field(const json& obj, const std::string& key, T fallback, const std::string& path, Errors& errs) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        errs.push_back(path + key + ": wrong type");
        return fallback;
    }
}

template <class T>
T required(const json& obj, const std::string& key, T fallback, const std::string& path, Errors& errs) {
    if (!obj.is_object() || !obj.contains(key)) {
        errs.push_back(path + key + ": missing");
        return fallback;
    }
    return field<T>(obj, key, fallback, path, errs);
}

// Bound value: a number, or null for unbounded.
double bound(const json& obj, const std::string& key, double unbounded, const std::string& path,
             Errors& errs) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return unbounded;
    return field<double>(obj, key, unbounded, path, errs);
}

std::pair<double, double> bound_pair(const json& obj, const std::string& key,
                                     const std::string& path, Errors& errs) {
    constexpr double inf = InputSignal::kInf;
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) return {-inf, inf};
    const json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2) {
        errs.push_back(path + key + ": expected [lower, upper]");
        return {-inf, inf};
    }
    auto one = [&](const json& x, double fallback) {
        if (x.is_null()) return fallback;
        if (!x.is_number()) {
            errs.push_back(path + key + ": bounds must be numbers or null");
            return fallback;
        }
        return x.get<double>();
    };
    return {one(v[0], -inf), one(v[1], inf)};
}

Vector vector_field(const json& obj, const std::string& key, const std::string& path, Errors& errs,
                    bool must = true) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
        if (must) errs.push_back(path + key + ": missing");
        return {};
    }
    const json& v = obj.at(key);
    if (!v.is_array()) {
        errs.push_back(path + key + ": expected an array of numbers");
        return {};
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
            errs.push_back(path + key + ": expected an array of numbers");
            return {};
        }
        out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    return out;
}

Matrix matrix_field(const json& obj, const std::string& key, const std::string& path, Errors& errs) {
    if (!obj.is_object() || !obj.contains(key)) {
        errs.push_back(path + key + ": missing");
        return {};
    }
    const json& v = obj.at(key);
    if (!v.is_array() || v.empty() || !v[0].is_array()) {
        errs.push_back(path + key + ": expected a non-empty array of rows");
        return {};
    }
    const std::size_t cols = v[0].size();
    Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
        if (!v[r].is_array() || v[r].size() != cols) {
            errs.push_back(path + key + ": rows have different lengths");
            return {};
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!v[r][c].is_number()) {
                errs.push_back(path + key + ": expected numbers");
                return {};
            }
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
        }
    }
    return out;
}

InitSpec init_field(const json& obj, const std::string& key, InitSpec fallback,
                    const std::string& path, Errors& errs) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    const json& j = obj.at(key);
    const std::string p = path + key + ".";
    if (!j.is_object()) {
        errs.push_back(path + key + ": expected an object");
        return fallback;
    }
    const auto dist = required<std::string>(j, "distribution", "normal", p, errs);
    InitSpec out;
    if (dist == "normal") {
        check_keys(j, p, {"distribution", "mean", "stddev"}, errs);
        out = {InitSpec::Kind::normal, field<double>(j, "mean", 0.0, p, errs),
               field<double>(j, "stddev", 1.0, p, errs)};
    } else if (dist == "uniform") {
        check_keys(j, p, {"distribution", "low", "high"}, errs);
        out = {InitSpec::Kind::uniform, required<double>(j, "low", 0.0, p, errs),
               required<double>(j, "high", 1.0, p, errs)};
    } else if (dist == "constant") {
        check_keys(j, p, {"distribution", "value"}, errs);
        out = {InitSpec::Kind::constant, required<double>(j, "value", 0.0, p, errs), 0.0};
    } else {
        errs.push_back(p + "distribution: expected normal, uniform or constant");
    }
    return out;
}

json bound_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

json matrix_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
    return out;
}

json init_json(const InitSpec& s) {
    switch (s.kind) {
        case InitSpec::Kind::normal: return {{"distribution", "normal"}, {"mean", s.a}, {"stddev", s.b}};
        case InitSpec::Kind::uniform: return {{"distribution", "uniform"}, {"low", s.a}, {"high", s.b}};
        case InitSpec::Kind::constant: return {{"distribution", "constant"}, {"value", s.a}};
    }
    return nullptr;
}

void validate_init(const InitSpec& s, const std::string& path, Errors& errs) {
    if (!std::isfinite(s.a) || !std::isfinite(s.b)) errs.push_back(path + ": non-finite parameter");
    if (s.kind == InitSpec::Kind::normal && !(s.b >= 0.0))
        errs.push_back(path + ": stddev must be >= 0");
    if (s.kind == InitSpec::Kind::uniform && !(s.a < s.b))
        errs.push_back(path + ": need low < high");
}

std::string coordinate_name(int c, int n_x) {
    return c < n_x ? "x" + std::to_string(c + 1) : "u" + std::to_string(c - n_x + 1);
}

}  // namespace

int SystemSpec::n_x() const { return kind == Kind::lti ? static_cast<int>(a.rows()) : 2; }
int SystemSpec::n_u() const { return kind == Kind::lti ? static_cast<int>(b.cols()) : 1; }

int ExperimentConfig::joint_dim() const {
    return joint_coordinates.empty() ? system.n_x() + system.n_u()
                                     : static_cast<int>(joint_coordinates.size());
}

ExperimentConfig config_from_json(const json& j) {
    Errors errs;
    ExperimentConfig cfg;
    if (!j.is_object()) throw ConfigError({"top level: expected an object"});
    check_keys(j, "",
               {"name", "system", "x0", "u0", "n", "joint_coordinates", "input", "region", "metric_q",
                "eval_points_per_dim", "anchor_sets", "kernel", "optimizer", "runs", "seed",
                "output_dir", "jobs"},
               errs);
    cfg.name = field<std::string>(j, "name", "experiment", "", errs);

    const json sys = j.value("system", json::object());
    const std::string type = required<std::string>(sys, "type", "lti", "system.", errs);
    if (type == "lti") {
        check_keys(sys, "system.", {"type", "a", "b", "sample_time"}, errs);
        cfg.system.kind = SystemSpec::Kind::lti;
        cfg.system.a = matrix_field(sys, "a", "system.", errs);
        cfg.system.b = matrix_field(sys, "b", "system.", errs);
        cfg.system.sample_time = required<double>(sys, "sample_time", 1.0, "system.", errs);
    } else if (type == "msd") {
        check_keys(sys, "system.", {"type", "l", "a", "m", "b", "c", "dt", "substeps"}, errs);
        cfg.system.kind = SystemSpec::Kind::msd;
        MsdParams& p = cfg.system.msd;
        p.l = field<double>(sys, "l", p.l, "system.", errs);
        p.a = field<double>(sys, "a", p.a, "system.", errs);
        p.m = field<double>(sys, "m", p.m, "system.", errs);
        p.b = field<double>(sys, "b", p.b, "system.", errs);
        p.c = field<double>(sys, "c", p.c, "system.", errs);
        cfg.system.dt = field<double>(sys, "dt", cfg.system.dt, "system.", errs);
        cfg.system.substeps = field<int>(sys, "substeps", 1, "system.", errs);
    } else {
        errs.push_back("system.type: expected lti or msd");
    }

    cfg.x0 = vector_field(j, "x0", "", errs, false);
    if (cfg.x0.size() == 0) cfg.x0 = Vector::Zero(cfg.system.n_x());
    cfg.u0 = vector_field(j, "u0", "", errs, false);
    if (cfg.u0.size() == 0) cfg.u0 = Vector::Zero(cfg.system.n_u());
    cfg.n = required<long>(j, "n", 0, "", errs);
    cfg.joint_coordinates = field<std::vector<int>>(j, "joint_coordinates", {}, "", errs);

    const json in = j.value("input", json::object());
    InputSpec& s = cfg.input;
    const std::string fam = required<std::string>(in, "family", "free_form", "input.", errs);
    try {
        s.family = input_family_from_string(fam);
    } catch (const InvalidArgument&) {
        errs.push_back("input.family: expected free_form, multisine or piecewise_constant");
    }
    s.first = field<long>(in, "first", 1, "input.", errs);
    s.last = field<long>(in, "last", cfg.n, "input.", errs);
    if (s.family == InputFamily::multisine) {
        check_keys(in, "input.",
                   {"family", "first", "last", "bins", "f0_over_fs", "gain", "shared_amplitude",
                    "amplitude_bounds", "phase_bounds", "amplitude_init", "phase_init",
                    "schroeder_amplitude"},
                   errs);
        const auto bins = required<std::vector<int>>(in, "bins", {1, 1}, "input.", errs);
        if (bins.size() == 2) {
            s.bin_min = bins[0];
            s.bin_max = bins[1];
        } else {
            errs.push_back("input.bins: expected [k_min, k_max]");
        }
        s.f0_over_fs = required<double>(in, "f0_over_fs", 0.0, "input.", errs);
        s.gain = field<double>(in, "gain", 1.0, "input.", errs);
        s.shared_amplitude = field<bool>(in, "shared_amplitude", false, "input.", errs);
        std::tie(s.lower, s.upper) = bound_pair(in, "amplitude_bounds", "input.", errs);
        std::tie(s.phase_lower, s.phase_upper) = bound_pair(in, "phase_bounds", "input.", errs);
        s.amplitude_init = init_field(in, "amplitude_init", s.amplitude_init, "input.", errs);
        s.phase_init = init_field(in, "phase_init", s.phase_init, "input.", errs);
        s.schroeder_amplitude = field<double>(in, "schroeder_amplitude", s.amplitude_init.a, "input.", errs);
    } else {
        check_keys(in, "input.", {"family", "first", "last", "lower", "upper", "init", "switching"},
                   errs);
        s.lower = bound(in, "lower", -InputSignal::kInf, "input.", errs);
        s.upper = bound(in, "upper", InputSignal::kInf, "input.", errs);
        s.init = init_field(in, "init", s.init, "input.", errs);
        if (s.family == InputFamily::piecewise_constant)
            s.switching = required<std::vector<long>>(in, "switching", {}, "input.", errs);
    }

    const json region = j.value("region", json::object());
    check_keys(region, "region.", {"lower", "upper"}, errs);
    cfg.region.lower = vector_field(region, "lower", "region.", errs);
    cfg.region.upper = vector_field(region, "upper", "region.", errs);
    cfg.metric.q = vector_field(j, "metric_q", "", errs, false);
    if (cfg.metric.q.size() == 0) cfg.metric.q = Vector::Ones(cfg.joint_dim());
    cfg.eval_points_per_dim = field<int>(j, "eval_points_per_dim", kDefaultEvalPointsPerDim, "", errs);

    if (!j.contains("anchor_sets") || !j.at("anchor_sets").is_array()) {
        errs.push_back("anchor_sets: missing or not an array");
    } else {
        const json& sets = j.at("anchor_sets");
        for (std::size_t i = 0; i < sets.size(); ++i) {
            const std::string p = "anchor_sets[" + std::to_string(i) + "].";
            check_keys(sets[i], p, {"points_per_dim", "lengthscales"}, errs);
            AnchorSetSpec a;
            a.points_per_dim = required<std::vector<int>>(sets[i], "points_per_dim", {}, p, errs);
            if (sets[i].is_object() && sets[i].contains("lengthscales"))
                a.lengthscales = vector_field(sets[i], "lengthscales", p, errs);
            cfg.anchor_sets.push_back(std::move(a));
        }
    }

    const json kern = j.value("kernel", json::object());
    check_keys(kern, "kernel.", {"signal_variance", "lengthscales", "jitter"}, errs);
    cfg.signal_variance = required<double>(kern, "signal_variance", 1.0, "kernel.", errs);
    cfg.lengthscales = vector_field(kern, "lengthscales", "kernel.", errs);
    if (kern.is_object() && kern.contains("jitter") && !kern.at("jitter").is_null())
        cfg.jitter = field<double>(kern, "jitter", 0.0, "kernel.", errs);

    const json opt = j.value("optimizer", json::object());
    check_keys(opt, "optimizer.",
               {"step", "scaling", "alpha0", "shrink", "armijo_c", "growth", "min_step", "delta",
                "max_iterations", "plateau_window", "plateau_tol", "gradient"},
               errs);
    OptimizerConfig& oc = cfg.optimizer;
    const std::string step = field<std::string>(opt, "step", "backtracking", "optimizer.", errs);
    if (step == "backtracking") oc.step.kind = StepPolicy::Kind::backtracking;
    else if (step == "fixed") oc.step.kind = StepPolicy::Kind::fixed;
    else errs.push_back("optimizer.step: expected backtracking or fixed");
    try {
        oc.scaling = scaling_from_string(field<std::string>(opt, "scaling", "none", "optimizer.", errs));
    } catch (const InvalidArgument&) {
        errs.push_back("optimizer.scaling: expected none or bounds");
    }
    oc.step.alpha0 = field<double>(opt, "alpha0", oc.step.alpha0, "optimizer.", errs);
    oc.step.shrink = field<double>(opt, "shrink", oc.step.shrink, "optimizer.", errs);
    oc.step.armijo_c = field<double>(opt, "armijo_c", oc.step.armijo_c, "optimizer.", errs);
    oc.step.growth = field<double>(opt, "growth", oc.step.growth, "optimizer.", errs);
    oc.step.min_step = field<double>(opt, "min_step", oc.step.min_step, "optimizer.", errs);
    oc.delta = field<double>(opt, "delta", oc.delta, "optimizer.", errs);
    oc.max_iterations = field<int>(opt, "max_iterations", oc.max_iterations, "optimizer.", errs);
    oc.plateau_window = field<int>(opt, "plateau_window", oc.plateau_window, "optimizer.", errs);
    oc.plateau_tol = field<double>(opt, "plateau_tol", oc.plateau_tol, "optimizer.", errs);
    try {
        oc.gradient_method = gradient_method_from_string(
            field<std::string>(opt, "gradient", "analytic", "optimizer.", errs));
    } catch (const InvalidArgument&) {
        errs.push_back("optimizer.gradient: expected analytic or central_fd");
    }

    cfg.runs = field<int>(j, "runs", 1, "", errs);
    cfg.seed = field<std::uint64_t>(j, "seed", 0, "", errs);
    cfg.output_dir = field<std::string>(j, "output_dir", "out", "", errs);
    cfg.jobs = field<int>(j, "jobs", 1, "", errs);

    if (!errs.empty()) throw ConfigError(std::move(errs));
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    Errors errs;
    const int nx = system.n_x();
    const int nu = system.n_u();
    if (system.kind == SystemSpec::Kind::lti) {
        if (system.a.rows() == 0 || system.a.rows() != system.a.cols())
            errs.push_back("system.a: must be square and non-empty");
        if (system.b.rows() != system.a.rows() || system.b.cols() == 0)
            errs.push_back("system.b: must have as many rows as system.a and at least one column");
        if (!(system.sample_time > 0.0)) errs.push_back("system.sample_time: must be positive");
    } else {
        try {
            system.msd.validate();
        } catch (const Error& e) {
            errs.push_back(std::string("system: ") + e.what());
        }
        if (!(system.dt > 0.0)) errs.push_back("system.dt: must be positive");
        if (system.substeps < 1) errs.push_back("system.substeps: must be >= 1");
    }
    if (x0.size() != nx) errs.push_back("x0: expected " + std::to_string(nx) + " entries");
    if (u0.size() != nu) errs.push_back("u0: expected " + std::to_string(nu) + " entries");
    if (n < 1) errs.push_back("n: must be >= 1");

    std::set<int> seen;
    for (int c : joint_coordinates) {
        if (c < 0 || c >= nx + nu)
            errs.push_back("joint_coordinates: " + std::to_string(c) + " out of range [0, " +
                           std::to_string(nx + nu) + ")");
        if (!seen.insert(c).second)
            errs.push_back("joint_coordinates: " + std::to_string(c) + " repeated");
    }
    const Eigen::Index d = joint_dim();

    const InputSpec& s = input;
    if (s.first > 1 || s.last < n)
        errs.push_back("input: horizon [first, last] must cover 1..n");
    if (s.lower > s.upper) errs.push_back("input: lower bound above upper bound");
    switch (s.family) {
        case InputFamily::free_form:
            validate_init(s.init, "input.init", errs);
            break;
        case InputFamily::multisine:
            if (s.bin_min < 1 || s.bin_max < s.bin_min)
                errs.push_back("input.bins: need 1 <= k_min <= k_max");
            if (!(s.f0_over_fs > 0.0)) errs.push_back("input.f0_over_fs: must be positive");
            if (!std::isfinite(s.gain)) errs.push_back("input.gain: must be finite");
            if (s.phase_lower > s.phase_upper) errs.push_back("input.phase_bounds: lower above upper");
            validate_init(s.amplitude_init, "input.amplitude_init", errs);
            validate_init(s.phase_init, "input.phase_init", errs);
            if (!std::isfinite(s.schroeder_amplitude))
                errs.push_back("input.schroeder_amplitude: must be finite");
            break;
        case InputFamily::piecewise_constant:
            validate_init(s.init, "input.init", errs);
            if (s.switching.size() < 2)
                errs.push_back("input.switching: need at least two switching instants");
            for (std::size_t i = 1; i < s.switching.size(); ++i)
                if (s.switching[i] <= s.switching[i - 1])
                    errs.push_back("input.switching: must be strictly increasing");
            break;
    }

    if (region.lower.size() != d || region.upper.size() != d) {
        errs.push_back("region: expected " + std::to_string(d) + "-dimensional lower/upper");
    } else {
        for (Eigen::Index i = 0; i < d; ++i)
            if (!(region.lower[i] < region.upper[i]) || !std::isfinite(region.lower[i]) ||
                !std::isfinite(region.upper[i]))
                errs.push_back("region: need finite lower < upper in dimension " + std::to_string(i));
    }
    if (metric.q.size() != d) errs.push_back("metric_q: expected " + std::to_string(d) + " entries");
    for (Eigen::Index i = 0; i < metric.q.size(); ++i)
        if (!(metric.q[i] > 0.0) || !std::isfinite(metric.q[i]))
            errs.push_back("metric_q: entries must be positive");
    if (eval_points_per_dim < 2) errs.push_back("eval_points_per_dim: must be >= 2");

    auto check_ls = [&](const Vector& ls, const std::string& path) {
        if (ls.size() != d) errs.push_back(path + ": expected " + std::to_string(d) + " entries");
        for (Eigen::Index i = 0; i < ls.size(); ++i)
            if (!(ls[i] > 0.0) || !std::isfinite(ls[i])) errs.push_back(path + ": entries must be positive");
    };
    if (anchor_sets.empty()) errs.push_back("anchor_sets: at least one set is required");
    for (std::size_t i = 0; i < anchor_sets.size(); ++i) {
        const std::string p = "anchor_sets[" + std::to_string(i) + "]";
        if (static_cast<Eigen::Index>(anchor_sets[i].points_per_dim.size()) != d)
            errs.push_back(p + ".points_per_dim: expected " + std::to_string(d) + " entries");
        for (int c : anchor_sets[i].points_per_dim)
            if (c < 2) errs.push_back(p + ".points_per_dim: entries must be >= 2");
        if (anchor_sets[i].lengthscales) check_ls(*anchor_sets[i].lengthscales, p + ".lengthscales");
    }
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
        errs.push_back("kernel.signal_variance: must be positive");
    check_ls(lengthscales, "kernel.lengthscales");
    if (jitter && !(*jitter >= 0.0)) errs.push_back("kernel.jitter: must be >= 0");

    try {
        optimizer.validate();
    } catch (const Error& e) {
        errs.push_back(e.what());
    }
    if (runs < 0) errs.push_back("runs: must be >= 0");
    if (jobs < 1) errs.push_back("jobs: must be >= 1");
    if (output_dir.empty()) errs.push_back("output_dir: must not be empty");

    if (!errs.empty()) throw ConfigError(std::move(errs));
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    if (cfg.system.kind == SystemSpec::Kind::lti) {
        j["system"] = {{"type", "lti"},
                       {"a", matrix_json(cfg.system.a)},
                       {"b", matrix_json(cfg.system.b)},
                       {"sample_time", cfg.system.sample_time}};
    } else {
        const MsdParams& p = cfg.system.msd;
        j["system"] = {{"type", "msd"}, {"l", p.l}, {"a", p.a}, {"m", p.m}, {"b", p.b}, {"c", p.c},
                       {"dt", cfg.system.dt}, {"substeps", cfg.system.substeps}};
    }
    j["x0"] = vector_json(cfg.x0);
    j["u0"] = vector_json(cfg.u0);
    j["n"] = cfg.n;
    j["joint_coordinates"] = cfg.joint_coordinates;

    const InputSpec& s = cfg.input;
    json in;
    in["family"] = to_string(s.family);
    in["first"] = s.first;
    in["last"] = s.last;
    if (s.family == InputFamily::multisine) {
        in["bins"] = {s.bin_min, s.bin_max};
        in["f0_over_fs"] = s.f0_over_fs;
        in["gain"] = s.gain;
        in["shared_amplitude"] = s.shared_amplitude;
        in["amplitude_bounds"] = {bound_json(s.lower), bound_json(s.upper)};
        in["phase_bounds"] = {bound_json(s.phase_lower), bound_json(s.phase_upper)};
        in["amplitude_init"] = init_json(s.amplitude_init);
        in["phase_init"] = init_json(s.phase_init);
        in["schroeder_amplitude"] = s.schroeder_amplitude;
    } else {
        in["lower"] = bound_json(s.lower);
        in["upper"] = bound_json(s.upper);
        in["init"] = init_json(s.init);
        if (s.family == InputFamily::piecewise_constant) in["switching"] = s.switching;
    }
    j["input"] = in;

    j["region"] = {{"lower", vector_json(cfg.region.lower)}, {"upper", vector_json(cfg.region.upper)}};
    j["metric_q"] = vector_json(cfg.metric.q);
    j["eval_points_per_dim"] = cfg.eval_points_per_dim;
    json sets = json::array();
    for (const auto& a : cfg.anchor_sets) {
        json e = {{"points_per_dim", a.points_per_dim}};
        if (a.lengthscales) e["lengthscales"] = vector_json(*a.lengthscales);
        sets.push_back(e);
    }
    j["anchor_sets"] = sets;
    j["kernel"] = {{"signal_variance", cfg.signal_variance},
                   {"lengthscales", vector_json(cfg.lengthscales)},
                   {"jitter", cfg.jitter.value_or(KernelConfig::default_jitter(cfg.signal_variance))}};
    const OptimizerConfig& oc = cfg.optimizer;
    j["optimizer"] = {{"step", oc.step.kind == StepPolicy::Kind::fixed ? "fixed" : "backtracking"},
                      {"scaling", to_string(oc.scaling)},
                      {"alpha0", oc.step.alpha0},
                      {"shrink", oc.step.shrink},
                      {"armijo_c", oc.step.armijo_c},
                      {"growth", oc.step.growth},
                      {"min_step", oc.step.min_step},
                      {"delta", oc.delta},
                      {"max_iterations", oc.max_iterations},
                      {"plateau_window", oc.plateau_window},
                      {"plateau_tol", oc.plateau_tol},
                      {"gradient", to_string(oc.gradient_method)}};
    j["runs"] = cfg.runs;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["jobs"] = cfg.jobs;
    return j;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open config file '" + path.string() + "'"});
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        // byte offset -> line number
        std::ifstream again(path);
        std::string text((std::istreambuf_iterator<char>(again)), std::istreambuf_iterator<char>());
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
        throw ParseError(line, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------- builders

SystemModel build_system(const SystemSpec& spec) {
    if (spec.kind == SystemSpec::Kind::lti)
        return make_lti_system(zoh_discretize(spec.a, spec.b, spec.sample_time), spec.sample_time, "lti");
    return make_rk4_system(make_msd_model(spec.msd), spec.dt, spec.substeps, "msd");
}

KernelConfig build_kernel(const ExperimentConfig& cfg, std::size_t anchor_set) {
    KernelConfig k;
    k.signal_variance = cfg.signal_variance;
    const auto& override_ls = cfg.anchor_sets.at(anchor_set).lengthscales;
    k.lengthscales = override_ls ? *override_ls : cfg.lengthscales;
    k.jitter = cfg.jitter.value_or(KernelConfig::default_jitter(cfg.signal_variance));
    return k;
}

AnchorSet build_anchors(const ExperimentConfig& cfg, std::size_t anchor_set) {
    return uniform_anchor_grid(cfg.region, cfg.anchor_sets.at(anchor_set).points_per_dim, cfg.metric,
                               cfg.eval_points_per_dim);
}

InputSignal build_signal(const ExperimentConfig& cfg) {
    const InputSpec& s = cfg.input;
    const int nu = cfg.system.n_u();
    switch (s.family) {
        case InputFamily::free_form: {
            const long len = s.last - s.first + 1;
            return InputSignal::free_form(nu, s.first, len, Vector::Zero(len * nu), s.lower, s.upper);
        }
        case InputFamily::multisine: {
            const auto bins = bin_range(s.bin_min, s.bin_max);
            const auto n = static_cast<Eigen::Index>(bins.size()) * nu;
            const double a0 = s.amplitude_init.kind == InitSpec::Kind::constant ? s.amplitude_init.a : 0.0;
            auto sig = InputSignal::multisine(nu, bins, s.f0_over_fs, Vector::Constant(n, a0),
                                              Vector::Zero(n), s.first, s.last);
            sig.set_amplitude_bounds(s.lower, s.upper);
            sig.set_phase_bounds(s.phase_lower, s.phase_upper);
            sig.set_gain(s.gain);
            sig.set_shared_amplitude(s.shared_amplitude);
            return sig;
        }
        case InputFamily::piecewise_constant: {
            const auto levels = static_cast<Eigen::Index>(s.switching.size() - 1) * nu;
            auto sig = InputSignal::piecewise_constant(nu, s.switching, Vector::Zero(levels), s.first,
                                                       s.last);
            sig.set_bounds(Vector::Constant(levels, s.lower), Vector::Constant(levels, s.upper));
            return sig;
        }
    }
    throw InvalidArgument("unknown input family");
}

DesignProblem build_problem(const ExperimentConfig& cfg, std::size_t anchor_set) {
    DesignProblem p;
    p.system = build_system(cfg.system);
    p.signal = build_signal(cfg);
    p.x0 = cfg.x0;
    p.u0 = cfg.u0;
    p.n = cfg.n;
    p.anchors = build_anchors(cfg, anchor_set);
    p.kernel = build_kernel(cfg, anchor_set);
    p.joint_coordinates = cfg.joint_coordinates;
    p.validate();
    return p;
}

std::uint64_t run_seed(std::uint64_t master, std::size_t anchor_set, std::size_t run) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(anchor_set), static_cast<std::uint32_t>(run)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

double draw(const InitSpec& s, std::mt19937_64& rng) {
    switch (s.kind) {
        case InitSpec::Kind::normal: return std::normal_distribution<double>(s.a, s.b)(rng);
        case InitSpec::Kind::uniform: return std::uniform_real_distribution<double>(s.a, s.b)(rng);
        case InitSpec::Kind::constant: return s.a;
    }
    return 0.0;
}

}  // namespace

Vector draw_initial_theta(const InputSignal& tmpl, const InputSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Vector theta(tmpl.n_theta());
    if (tmpl.family() != InputFamily::multisine) {
        for (auto& v : theta) v = draw(spec.init, rng);
        return tmpl.project(theta);
    }
    const auto n = theta.size() / 2;
    const int nu = tmpl.n_u();
    if (tmpl.shared_amplitude()) {
        for (int c = 0; c < nu; ++c) {
            const double a = draw(spec.amplitude_init, rng);
            for (Eigen::Index i = c; i < n; i += nu) theta[i] = a;
        }
    } else {
        for (Eigen::Index i = 0; i < n; ++i) theta[i] = draw(spec.amplitude_init, rng);
    }
    for (Eigen::Index i = n; i < 2 * n; ++i) theta[i] = draw(spec.phase_init, rng);
    return tmpl.project(theta);
}

// ---------------------------------------------------------------- statistics

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw EmptyDataset("quantile of an empty sample");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Aggregates aggregate(const std::vector<RunRecord>& runs, double epsilon) {
    Aggregates a;
    std::vector<double> fin;
    std::vector<double> init;
    for (const auto& r : runs) {
        if (r.final_rho) {
            fin.push_back(*r.final_rho);
            if (*r.final_rho < epsilon) ++a.below_epsilon;
        }
        if (r.initial_rho) init.push_back(*r.initial_rho);
    }
    a.count = static_cast<int>(fin.size());
    if (!fin.empty()) {
        // mean in run order, then sort for the quantiles
        a.mean_final_rho = std::accumulate(fin.begin(), fin.end(), 0.0) / static_cast<double>(fin.size());
        std::sort(fin.begin(), fin.end());
        a.min = fin.front();
        a.max = fin.back();
        a.q1 = quantile_sorted(fin, 0.25);
        a.median = quantile_sorted(fin, 0.5);
        a.q3 = quantile_sorted(fin, 0.75);
    }
    if (!init.empty())
        a.mean_initial_rho = std::accumulate(init.begin(), init.end(), 0.0) / static_cast<double>(init.size());
    return a;
}

bool ExperimentReport::all_diverged() const {
    std::size_t total = 0;
    for (const auto& s : sets) {
        for (const auto& r : s.runs) {
            ++total;
            if (r.final_rho) return false;
        }
    }
    return total > 0;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json report_to_json(const ExperimentReport& report) {
    json j;
    j["config"] = report.config;
    json sets = json::array();
    for (const auto& s : report.sets) {
        json e;
        e["points_per_dim"] = s.points_per_dim;
        e["m"] = s.m;
        e["epsilon"] = s.epsilon;
        e["lengthscales"] = vector_json(s.lengthscales);
        json agg;
        agg["count"] = s.stats.count;
        agg["below_epsilon"] = s.stats.below_epsilon;
        const bool any = s.stats.count > 0;
        agg["mean_final_rho"] = any ? json(s.stats.mean_final_rho) : json(nullptr);
        agg["min"] = any ? json(s.stats.min) : json(nullptr);
        agg["q1"] = any ? json(s.stats.q1) : json(nullptr);
        agg["median"] = any ? json(s.stats.median) : json(nullptr);
        agg["q3"] = any ? json(s.stats.q3) : json(nullptr);
        agg["max"] = any ? json(s.stats.max) : json(nullptr);
        const bool any_init = std::any_of(s.runs.begin(), s.runs.end(),
                                          [](const RunRecord& r) { return r.initial_rho.has_value(); });
        agg["mean_initial_rho"] = any_init ? json(s.stats.mean_initial_rho) : json(nullptr);
        e["aggregates"] = agg;
        json runs = json::array();
        for (const auto& r : s.runs) {
            runs.push_back({{"run", r.run},
                            {"seed", r.seed},
                            {"status", r.status},
                            {"message", r.message},
                            {"iterations", r.iterations},
                            {"initial_cost", opt_json(r.initial_cost)},
                            {"final_cost", opt_json(r.final_cost)},
                            {"initial_rho", opt_json(r.initial_rho)},
                            {"final_rho", opt_json(r.final_rho)}});
        }
        e["runs"] = runs;
        sets.push_back(e);
    }
    j["anchor_sets"] = sets;
    return j;
}

// ---------------------------------------------------------------- running

namespace {

std::vector<std::string> dataset_header(const ExperimentConfig& cfg) {
    const int nx = cfg.system.n_x();
    std::vector<std::string> h;
    if (cfg.joint_coordinates.empty()) {
        for (int c = 0; c < nx + cfg.system.n_u(); ++c) h.push_back(coordinate_name(c, nx));
    } else {
        for (int c : cfg.joint_coordinates) h.push_back(coordinate_name(c, nx));
    }
    return h;
}

std::string set_label(const AnchorSet& a) { return "M" + std::to_string(a.size()); }

template <class F>
void write_file(const fs::path& path, F&& body) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    body(os);
}

RunRecord run_one(const ExperimentConfig& cfg, const DesignProblem& problem, std::size_t set, int run,
                  const fs::path& dir, bool write_files) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.run = run;
    rec.seed = run_seed(cfg.seed, set, static_cast<std::size_t>(run));
    const Vector theta0 = draw_initial_theta(problem.signal, cfg.input, rec.seed);
    const std::string tag = "run_" + std::to_string(run);
    const auto header = dataset_header(cfg);
    try {
        const WEvaluation w0 = cost_w(theta0, problem);
        rec.initial_cost = w0.cost;
        rec.initial_rho = filling_distance(w0.dataset, cfg.region, cfg.metric, cfg.eval_points_per_dim);
        if (write_files)
            write_file(dir / (tag + "_initial_dataset.csv"),
                       [&](std::ostream& os) { write_points_csv(os, w0.dataset.points, header); });
    } catch (const TrajectoryDiverged& e) {
        rec.status = "diverged";
        rec.message = e.what();
        return rec;
    }

    const OptimizeResult res = optimize(theta0, problem, cfg.optimizer);
    rec.status = to_string(res.trace.status);
    rec.message = res.trace.message;
    rec.iterations = res.trace.iterations();
    if (std::isfinite(res.cost)) {
        const WEvaluation wf = cost_w(res.theta_hat, problem);
        rec.final_cost = wf.cost;
        rec.final_rho = filling_distance(wf.dataset, cfg.region, cfg.metric, cfg.eval_points_per_dim);
        if (write_files) {
            write_file(dir / (tag + "_trajectory.csv"),
                       [&](std::ostream& os) { write_trajectory_csv(os, wf.trajectory); });
            write_file(dir / (tag + "_dataset.csv"),
                       [&](std::ostream& os) { write_points_csv(os, wf.dataset.points, header); });
            write_file(dir / ("theta_hat_" + std::to_string(run) + ".csv"),
                       [&](std::ostream& os) { write_theta_csv(os, res.theta_hat); });
        }
    }
    if (write_files)
        write_file(dir / (tag + "_trace.csv"), [&](std::ostream& os) { write_trace_csv(os, res.trace); });
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.config = config_to_json(cfg);
    // execution settings, not part of the result
    report.config.erase("output_dir");
    report.config.erase("jobs");
    const fs::path out = cfg.output_dir;
    if (opts.write_files) fs::create_directories(out);

    std::vector<std::size_t> set_ids;
    for (std::size_t s = 0; s < cfg.anchor_sets.size(); ++s)
        if (!opts.only_set || *opts.only_set == s) set_ids.push_back(s);
    if (opts.only_set && set_ids.empty())
        throw InvalidArgument("anchor set index " + std::to_string(*opts.only_set) + " out of range");

    std::vector<DesignProblem> problems;
    std::vector<fs::path> dirs;
    for (std::size_t s : set_ids) {
        problems.push_back(build_problem(cfg, s));
        const DesignProblem& p = problems.back();
        AnchorSetResult r;
        r.points_per_dim = cfg.anchor_sets[s].points_per_dim;
        r.m = p.anchors.size();
        r.epsilon = p.anchors.epsilon;
        r.lengthscales = p.kernel.lengthscales;
        report.sets.push_back(std::move(r));
        dirs.push_back(out / set_label(p.anchors));
        if (opts.write_files) {
            fs::create_directories(dirs.back());
            write_file(dirs.back() / "anchors.csv", [&](std::ostream& os) {
                write_points_csv(os, p.anchors.points, dataset_header(cfg));
            });
        }
    }

    struct Task {
        std::size_t slot;  // index into report.sets
        int run;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < set_ids.size(); ++i) {
        if (opts.only_run) {
            tasks.push_back({i, *opts.only_run});
        } else {
            for (int r = 0; r < cfg.runs; ++r) tasks.push_back({i, r});
        }
    }
    std::vector<RunRecord> records(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) {
            const Task& task = tasks[t];
            const std::size_t set = set_ids[task.slot];
            try {
                records[t] = run_one(cfg, problems[task.slot], set, task.run, dirs[task.slot],
                                     opts.write_files);
            } catch (const std::exception& e) {
                // Recorded, not fatal: the batch carries on with the other runs.
                records[t].run = task.run;
                records[t].seed = run_seed(cfg.seed, set, static_cast<std::size_t>(task.run));
                records[t].status = "failed";
                records[t].message = e.what();
            }
            if (opts.log) {
                std::lock_guard<std::mutex> lock(log_mutex);
                const RunRecord& r = records[t];
                *opts.log << "M=" << report.sets[task.slot].m << " run " << r.run << ": " << r.status;
                if (r.initial_rho) *opts.log << "  rho " << *r.initial_rho;
                if (r.final_rho) *opts.log << " -> " << *r.final_rho;
                *opts.log << "  (" << r.iterations << " iterations, " << r.wall_seconds << " s)\n";
                opts.log->flush();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(tasks.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }

    for (std::size_t t = 0; t < tasks.size(); ++t)
        report.sets[tasks[t].slot].runs.push_back(std::move(records[t]));
    for (auto& s : report.sets) s.stats = aggregate(s.runs, s.epsilon);

    if (opts.write_files) {
        write_file(out / "report.json", [&](std::ostream& os) { os << report_to_json(report).dump(2) << '\n'; });
        write_file(out / "boxplot.csv", [&](std::ostream& os) {
            os << "m,epsilon,count,min,q1,median,q3,max,mean\n";
            os.precision(17);
            for (const auto& s : report.sets) {
                os << s.m << ',' << s.epsilon << ',' << s.stats.count;
                if (s.stats.count > 0)
                    os << ',' << s.stats.min << ',' << s.stats.q1 << ',' << s.stats.median << ','
                       << s.stats.q3 << ',' << s.stats.max << ',' << s.stats.mean_final_rho;
                else
                    os << ",,,,,,";
                os << '\n';
            }
        });
        json timing;
        timing["total_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        json sets = json::array();
        for (const auto& s : report.sets) {
            json runs = json::array();
            for (const auto& r : s.runs) runs.push_back({{"run", r.run}, {"wall_seconds", r.wall_seconds}});
            sets.push_back({{"m", s.m}, {"runs", runs}});
        }
        timing["anchor_sets"] = sets;
        timing["jobs"] = cfg.jobs;
        timing["output_dir"] = cfg.output_dir;
        write_file(out / "timing.json", [&](std::ostream& os) { os << timing.dump(2) << '\n'; });
    }
    return report;
}

// ---------------------------------------------------------------- standalone tools

DatasetEvaluation evaluate_dataset(const Matrix& points, const RegionOfInterest& region,
                                   const MetricWeight& metric, int eval_points_per_dim) {
    if (points.rows() == 0) throw EmptyDataset("dataset contains no points");
    if (points.cols() != region.dim())
        throw InvalidArgument("dataset has " + std::to_string(points.cols()) +
                              " columns, region is " + std::to_string(region.dim()) + "-dimensional");
    const EmptyBall ball = largest_empty_ball(points, region, metric, eval_points_per_dim);
    return {static_cast<long>(points.rows()), ball.radius, ball.center};
}

DatasetEvaluation evaluate_dataset(std::istream& csv, const RegionOfInterest& region,
                                   const MetricWeight& metric, int eval_points_per_dim) {
    return evaluate_dataset(read_points_csv(csv), region, metric, eval_points_per_dim);
}

BaselineResult schroeder_baseline(const ExperimentConfig& cfg, std::optional<double> amplitude) {
    cfg.validate();
    const InputSpec& s = cfg.input;
    if (s.family != InputFamily::multisine)
        throw InvalidArgument("the Schroeder baseline needs a multisine input configuration");
    if (cfg.system.n_u() != 1)
        throw InvalidArgument("the Schroeder baseline supports single-input systems only");
    BaselineResult out;
    out.amplitude = amplitude.value_or(s.schroeder_amplitude);
    const auto bins = bin_range(s.bin_min, s.bin_max);
    const InputSignal sig = schroeder_multisine(static_cast<int>(bins.size()), out.amplitude, bins,
                                                s.f0_over_fs, s.first, s.last, s.gain);
    for (std::size_t a = 0; a < cfg.anchor_sets.size(); ++a) {
        DesignProblem p = build_problem(cfg, a);
        p.signal = sig;
        WEvaluation w = cost_w(sig.theta(), p);
        out.costs.push_back(w.cost);
        if (a == 0) {
            out.dataset = std::move(w.dataset);
            out.trajectory = std::move(w.trajectory);
        }
    }
    out.rho = filling_distance(out.dataset, cfg.region, cfg.metric, cfg.eval_points_per_dim);
    return out;
}

}  // namespace sfid
