// Command-line front end: design / mc / eval / gradcheck / baseline.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sfid/errors.hpp"
#include "sfid/experiment.hpp"

namespace {

using namespace sfid;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitDiverged = 2;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> runs;
    std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "experiment config (JSON, comments allowed)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "override the master seed");
    cmd->add_option("--out", o.out, "override the output directory");
}

ExperimentConfig load(const Overrides& o) {
    ExperimentConfig cfg = load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.output_dir = *o.out;
    if (o.runs) cfg.runs = *o.runs;
    if (o.jobs) cfg.jobs = *o.jobs;
    cfg.validate();
    return cfg;
}

void print_summary(const ExperimentReport& report) {
    std::cout << "M      eps       runs  below  min       q1        median    q3        max       "
                 "mean(init)\n";
    for (const auto& s : report.sets) {
        std::printf("%-6ld %-9.4f %-5d %-6d", s.m, s.epsilon, s.stats.count, s.stats.below_epsilon);
        if (s.stats.count > 0)
            std::printf(" %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f %.4f\n", s.stats.min, s.stats.q1,
                        s.stats.median, s.stats.q3, s.stats.max, s.stats.mean_initial_rho);
        else
            std::printf(" (no completed runs)\n");
    }
}

int finish(const ExperimentReport& report, const ExperimentConfig& cfg) {
    print_summary(report);
    std::cout << "wrote " << (std::filesystem::path(cfg.output_dir) / "report.json").string() << '\n';
    return report.all_diverged() ? kExitDiverged : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GP posterior-variance space-filling input design"};
    app.require_subcommand(1);

    Overrides design_o;
    std::size_t design_set = 0;
    int design_run = 0;
    auto* design = app.add_subcommand("design", "optimize one run of a config");
    add_common(design, design_o);
    design->add_option("--anchor-set", design_set, "anchor set index")->capture_default_str();
    design->add_option("--run", design_run, "run index (selects the initial draw)")->capture_default_str();

    Overrides mc_o;
    auto* mc = app.add_subcommand("mc", "Monte-Carlo batch over every anchor set");
    add_common(mc, mc_o);
    mc->add_option("--runs", mc_o.runs, "override the run count");
    mc->add_option("--jobs", mc_o.jobs, "concurrent runs");

    std::string eval_data;
    std::optional<std::string> eval_config;
    std::vector<double> eval_lower, eval_upper, eval_q;
    int eval_points = kDefaultEvalPointsPerDim;
    auto* eval = app.add_subcommand("eval", "filling distance of a dataset CSV");
    eval->add_option("--data", eval_data, "CSV, one point per row")->required()->check(CLI::ExistingFile);
    eval->add_option("--config", eval_config, "take region, Q and resolution from a config");
    eval->add_option("--lower", eval_lower, "region lower corner");
    eval->add_option("--upper", eval_upper, "region upper corner");
    eval->add_option("--q", eval_q, "diagonal of Q (default identity)");
    eval->add_option("--eval-points", eval_points, "evaluation points per dimension")->capture_default_str();

    Overrides gc_o;
    int gc_samples = 20;
    std::size_t gc_set = 0;
    std::optional<double> gc_tol;
    auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs central-difference gradient of W");
    add_common(gradcheck, gc_o);
    gradcheck->add_option("--samples", gc_samples, "random parameter vectors")->capture_default_str();
    gradcheck->add_option("--anchor-set", gc_set, "anchor set index")->capture_default_str();
    gradcheck->add_option("--tol", gc_tol, "fail (exit 1) above this relative error");

    Overrides bl_o;
    std::vector<double> bl_amplitudes;
    auto* baseline = app.add_subcommand("baseline", "Schroeder-phase multisine, no optimization");
    add_common(baseline, bl_o);
    baseline->add_option("--amplitude", bl_amplitudes, "shared amplitude(s); default from config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*design) {
            const ExperimentConfig cfg = load(design_o);
            RunOptions opts;
            opts.only_set = design_set;
            opts.only_run = design_run;
            opts.log = &std::cout;
            return finish(run_experiment(cfg, opts), cfg);
        }
        if (*mc) {
            const ExperimentConfig cfg = load(mc_o);
            RunOptions opts;
            opts.log = &std::cout;
            return finish(run_experiment(cfg, opts), cfg);
        }
        if (*eval) {
            RegionOfInterest region;
            MetricWeight metric;
            if (eval_config) {
                const ExperimentConfig cfg = load_config(*eval_config);
                region = cfg.region;
                metric = cfg.metric;
                if (eval->count("--eval-points") == 0) eval_points = cfg.eval_points_per_dim;
            } else {
                if (eval_lower.empty() || eval_lower.size() != eval_upper.size())
                    throw InvalidArgument("eval: give --config, or --lower and --upper of equal length");
                region.lower = Eigen::Map<const Vector>(eval_lower.data(), static_cast<Eigen::Index>(eval_lower.size()));
                region.upper = Eigen::Map<const Vector>(eval_upper.data(), static_cast<Eigen::Index>(eval_upper.size()));
                metric = MetricWeight::identity(region.dim());
            }
            if (!eval_q.empty())
                metric.q = Eigen::Map<const Vector>(eval_q.data(), static_cast<Eigen::Index>(eval_q.size()));
            std::ifstream in(eval_data);
            const DatasetEvaluation r = evaluate_dataset(in, region, metric, eval_points);
            std::cout.precision(10);
            std::cout << "points " << r.count << "\nrho " << r.rho << "\ncenter";
            for (Eigen::Index i = 0; i < r.center.size(); ++i) std::cout << ' ' << r.center[i];
            std::cout << '\n';
            return kExitOk;
        }
        if (*gradcheck) {
            const ExperimentConfig cfg = load(gc_o);
            if (gc_set >= cfg.anchor_sets.size())
                throw InvalidArgument("anchor set index out of range");
            const DesignProblem problem = build_problem(cfg, gc_set);
            double worst = 0.0;
            for (int i = 0; i < gc_samples; ++i) {
                const Vector theta =
                    draw_initial_theta(problem.signal, cfg.input, run_seed(cfg.seed, gc_set, static_cast<std::size_t>(i)));
                const double err = gradient_check(theta, problem);
                worst = std::max(worst, err);
                std::cout << "sample " << i << "  relative error " << err << '\n';
            }
            std::cout << "max relative error " << worst << '\n';
            return gc_tol && worst > *gc_tol ? kExitInvalid : kExitOk;
        }
        if (*baseline) {
            const ExperimentConfig cfg = load(bl_o);
            std::vector<std::optional<double>> amps;
            for (double a : bl_amplitudes) amps.emplace_back(a);
            if (amps.empty()) amps.emplace_back(std::nullopt);
            const bool write = static_cast<bool>(bl_o.out);
            if (write) std::filesystem::create_directories(cfg.output_dir);
            for (std::size_t i = 0; i < amps.size(); ++i) {
                const BaselineResult r = schroeder_baseline(cfg, amps[i]);
                std::cout << "amplitude " << r.amplitude << "  rho " << r.rho << "  W";
                for (double c : r.costs) std::cout << ' ' << c;
                std::cout << '\n';
                if (write) {
                    const auto base = std::filesystem::path(cfg.output_dir) /
                                      ("schroeder_" + std::to_string(i));
                    std::ofstream t(base.string() + "_trajectory.csv");
                    write_trajectory_csv(t, r.trajectory);
                    std::ofstream d(base.string() + "_dataset.csv");
                    write_points_csv(d, r.dataset.points);
                }
            }
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitInvalid;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const TrajectoryDiverged& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitOk;
}
