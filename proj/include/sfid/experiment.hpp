#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfid/anchors_metrics.hpp"
#include "sfid/design_problem.hpp"
#include "sfid/optimizer.hpp"

namespace sfid {

using json = nlohmann::json;

struct SystemSpec {
    enum class Kind { lti, msd };
    Kind kind = Kind::lti;
    // lti: continuous-time (A, B), discretized with ZOH at sample_time
    Matrix a;
    Matrix b;
    double sample_time = 1.0;
    // msd: RK4 with `substeps` steps of length dt / substeps per sample
    MsdParams msd;
    double dt = 0.01;
    int substeps = 1;

    int n_x() const;
    int n_u() const;
};

// How theta(0) is drawn for each Monte-Carlo run.
struct InitSpec {
    enum class Kind { normal, uniform, constant };
    Kind kind = Kind::normal;
    double a = 0.0;  // mean / lower bound / value
    double b = 1.0;  // stddev / upper bound
};

struct InputSpec {
    InputFamily family = InputFamily::free_form;
    long first = 1;
    long last = 0;  // free-form: first + N - 1 when 0
    double lower = -InputSignal::kInf;
    double upper = InputSignal::kInf;
    InitSpec init;  // free-form values, piecewise amplitudes

    // multisine
    int bin_min = 1;
    int bin_max = 1;
    double f0_over_fs = 0.0;
    double gain = 1.0;
    bool shared_amplitude = false;
    double phase_lower = -InputSignal::kInf;
    double phase_upper = InputSignal::kInf;
    InitSpec amplitude_init{InitSpec::Kind::constant, 1.0, 0.0};
    InitSpec phase_init{InitSpec::Kind::uniform, 0.0, 6.283185307179586};
    double schroeder_amplitude = 0.0;  // baseline amplitude, 0 = use amplitude_init.a

    // piecewise
    std::vector<long> switching;
};

struct AnchorSetSpec {
    std::vector<int> points_per_dim;
    std::optional<Vector> lengthscales;  // overrides the kernel's for this set
};

struct ExperimentConfig {
    std::string name;
    SystemSpec system;
    Vector x0;
    Vector u0;
    long n = 0;
    std::vector<int> joint_coordinates;
    InputSpec input;
    RegionOfInterest region;
    MetricWeight metric;
    int eval_points_per_dim = kDefaultEvalPointsPerDim;
    std::vector<AnchorSetSpec> anchor_sets;
    double signal_variance = 1.0;
    Vector lengthscales;
    std::optional<double> jitter;  // default: 1e-8 * signal_variance
    OptimizerConfig optimizer;
    int runs = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int jobs = 1;

    // Collects every violation and throws ConfigError if there is any.
    void validate() const;
    int joint_dim() const;
};

ExperimentConfig config_from_json(const json& j);
// Fully resolved config, every default spelled out.
json config_to_json(const ExperimentConfig& cfg);
// Reads JSON with // and /* */ comments. Throws ConfigError / ParseError.
ExperimentConfig load_config(const std::filesystem::path& path);

SystemModel build_system(const SystemSpec& spec);
KernelConfig build_kernel(const ExperimentConfig& cfg, std::size_t anchor_set);
AnchorSet build_anchors(const ExperimentConfig& cfg, std::size_t anchor_set);
// Signal template with theta set to the deterministic part of the init rule.
InputSignal build_signal(const ExperimentConfig& cfg);
DesignProblem build_problem(const ExperimentConfig& cfg, std::size_t anchor_set);

// Independent per-run generator seed from (master, anchor set, run).
std::uint64_t run_seed(std::uint64_t master, std::size_t anchor_set, std::size_t run);
Vector draw_initial_theta(const InputSignal& tmpl, const InputSpec& spec, std::uint64_t seed);

struct RunRecord {
    int run = 0;
    std::uint64_t seed = 0;
    std::string status;  // converged / max_iters / diverged
    std::string message;
    std::optional<double> initial_cost;
    std::optional<double> final_cost;
    std::optional<double> initial_rho;
    std::optional<double> final_rho;
    int iterations = 0;
    double wall_seconds = 0.0;  // kept out of report.json
};

struct Aggregates {
    int count = 0;  // runs with a final rho
    double mean_final_rho = 0.0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean_initial_rho = 0.0;
    int below_epsilon = 0;
};

// Linear-interpolation quantile of sorted values, p in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double p);
Aggregates aggregate(const std::vector<RunRecord>& runs, double epsilon);

struct AnchorSetResult {
    std::vector<int> points_per_dim;
    long m = 0;
    double epsilon = 0.0;
    Vector lengthscales;
    std::vector<RunRecord> runs;
    Aggregates stats;
};

struct ExperimentReport {
    json config;
    std::vector<AnchorSetResult> sets;

    bool all_diverged() const;
};

json report_to_json(const ExperimentReport& report);

struct RunOptions {
    bool write_files = true;
    // Restrict to one anchor set / a single run (the `design` subcommand).
    std::optional<std::size_t> only_set;
    std::optional<int> only_run;
    std::ostream* log = nullptr;
};

// Monte-Carlo batch: for each anchor set and run, draw theta(0), optimize,
// evaluate rho before and after. Writes report.json, timing.json,
// boxplot.csv and per-run CSVs under cfg.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct DatasetEvaluation {
    long count = 0;
    double rho = 0.0;
    JointPoint center;
};

DatasetEvaluation evaluate_dataset(std::istream& csv, const RegionOfInterest& region,
                                   const MetricWeight& metric,
                                   int eval_points_per_dim = kDefaultEvalPointsPerDim);
DatasetEvaluation evaluate_dataset(const Matrix& points, const RegionOfInterest& region,
                                   const MetricWeight& metric,
                                   int eval_points_per_dim = kDefaultEvalPointsPerDim);

struct BaselineResult {
    double amplitude = 0.0;
    double rho = 0.0;
    std::vector<double> costs;  // W per anchor set
    Trajectory trajectory;
    Dataset dataset;
};

// Schroeder-phase multisine over the configured bins at a shared amplitude;
// no optimization.
BaselineResult schroeder_baseline(const ExperimentConfig& cfg, std::optional<double> amplitude = {});

}  // namespace sfid
