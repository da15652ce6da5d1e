// Acceptance gate. One line per criterion:
//   criterion <k>: PASS|FAIL  <details>  [<seconds> s / limit <s> s]
// `acceptance` runs all of them; `acceptance --criterion k` runs one.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sfid/anchors_metrics.hpp"
#include "sfid/errors.hpp"
#include "sfid/experiment.hpp"
#include "sfid/gp_core.hpp"

namespace fs = std::filesystem;
using namespace sfid;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string sci(double v) {
    std::ostringstream os;
    os.precision(2);
    os << std::scientific << v;
    return os.str();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

fs::path preset(const std::string& name) { return fs::path(SFID_CONFIG_DIR) / name; }
fs::path scratch(const std::string& name) { return fs::path(SFID_ACCEPT_OUT) / name; }

// Up to n random points in [-1, 1]^d, no two closer than `sep` in
// lengthscale units (fewer when the box runs out of room).
Matrix separated_points(std::mt19937_64& rng, int n, int d, const Vector& ell, double sep) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix pts(n, d);
    int have = 0;
    for (int tries = 0; have < n && tries < 100 * n; ++tries) {
        Vector p(d);
        for (auto& v : p) v = u(rng);
        bool ok = true;
        for (int i = 0; i < have && ok; ++i)
            ok = (pts.row(i).transpose() - p).cwiseQuotient(ell).norm() >= sep;
        if (ok) pts.row(have++) = p.transpose();
    }
    return pts.topRows(have);
}

double min_scaled_distance(const Vector& q, const Matrix& pts, const Vector& ell) {
    double best = INFINITY;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        best = std::min(best, (pts.row(i).transpose() - q).cwiseQuotient(ell).norm());
    return best;
}

Outcome criterion1() {
    const RegionOfInterest r{Vector::Constant(2, -2.0), Vector::Constant(2, 2.0)};
    const double expect[] = {2.83, 1.41, 0.943};
    Outcome o{true, "eps"};
    for (int k = 0; k < 3; ++k) {
        const double e = uniform_anchor_grid(r, {k + 2, k + 2}, MetricWeight::identity(2)).epsilon;
        o.pass = o.pass && std::abs(e - expect[k]) <= 0.05;
        o.detail += " " + fmt(e) + " (" + fmt(expect[k], 3) + ")";
    }
    return o;
}

Outcome criterion2() {
    const ExperimentConfig cfg = load_config(preset("msd_table1.json"));
    const double expect[] = {0.2449, 0.3429, 0.4286};
    Outcome o{true, "rho(anchors)"};
    for (std::size_t s = 0; s < 3; ++s) {
        const AnchorSet a = build_anchors(cfg, s);
        const double rho = filling_distance(a.points, cfg.region, cfg.metric, cfg.eval_points_per_dim);
        o.pass = o.pass && std::abs(rho - expect[s]) <= 0.01;
        o.detail += " M=" + std::to_string(a.size()) + ":" + fmt(rho) + " (" + fmt(expect[s]) + ")";
    }
    return o;
}

Outcome criterion3() {
    ExperimentConfig cfg = load_config(preset("lti_fig1.json"));
    cfg.output_dir = scratch("lti_fig1").string();
    const ExperimentReport rep = run_experiment(cfg);
    Outcome o{true, ""};
    for (const auto& s : rep.sets) {
        const int total = static_cast<int>(s.runs.size());
        const bool share = s.stats.below_epsilon >= std::ceil(0.95 * total);
        const bool median = s.stats.count > 0 && s.stats.median < 0.8 * s.epsilon;
        o.pass = o.pass && share && median && total == 20;
        o.detail += " M=" + std::to_string(s.m) + ": " + std::to_string(s.stats.below_epsilon) + "/" +
                    std::to_string(total) + " below eps " + fmt(s.epsilon) + (share ? "" : " [share]") +
                    ", median " + fmt(s.stats.median) + " vs 0.8eps " + fmt(0.8 * s.epsilon) +
                    (median ? "" : " [median]") + ";";
    }
    return o;
}

Outcome criterion4() {
    ExperimentConfig cfg = load_config(preset("msd_table1.json"));
    cfg.output_dir = scratch("msd_table1").string();
    if (const char* jobs = std::getenv("SFID_JOBS")) cfg.jobs = std::max(1, std::atoi(jobs));
    RunOptions opts;
    opts.log = &std::cerr;
    const ExperimentReport rep = run_experiment(cfg, opts);
    Outcome o{true, ""};
    for (const auto& s : rep.sets) {
        double lo = 0.28, hi = 0.48;
        if (s.m == 512) lo = 0.24, hi = 0.46;
        if (s.m == 216) lo = 0.26, hi = 0.46;
        const bool init = s.stats.mean_initial_rho >= 1.15 && s.stats.mean_initial_rho <= 1.40;
        const bool fin = s.stats.count == cfg.runs && s.stats.mean_final_rho >= lo && s.stats.mean_final_rho <= hi;
        o.pass = o.pass && init && fin;
        o.detail += " M=" + std::to_string(s.m) + ": init " + fmt(s.stats.mean_initial_rho) +
                    (init ? "" : " [out of 1.15..1.40]") + ", final " + fmt(s.stats.mean_final_rho) +
                    (fin ? "" : " [out of " + fmt(lo, 2) + ".." + fmt(hi, 2) + "]") + " (" +
                    std::to_string(s.stats.count) + " runs);";
    }
    return o;
}

Outcome criterion5() {
    const ExperimentConfig cfg = load_config(preset("msd_table1.json"));
    const BaselineResult b = schroeder_baseline(cfg, 100.0);
    return {b.rho >= 1.03 && b.rho <= 1.33, "rho(schroeder, A=100) " + fmt(b.rho) + " in [1.03, 1.33]"};
}

Outcome criterion6() {
    std::mt19937_64 rng(606);
    std::uniform_int_distribution<int> dim(1, 4), count(1, 20);
    std::uniform_real_distribution<double> ls(0.3, 0.8), sf(0.5, 5.0), u(-1.0, 1.0);
    int fail_train = 0, fail_query = 0, fail_anchor = 0;
    double worst_train = 0.0;
    for (int t = 0; t < 200; ++t) {
        const int d = dim(rng);
        const int n = count(rng);
        Vector ell(d);
        for (auto& v : ell) v = ls(rng);
        const KernelConfig k{sf(rng), ell, 0.0};
        const Dataset data(separated_points(rng, n, d, ell, 0.5));
        for (Eigen::Index i = 0; i < data.size(); ++i) {
            const double v = posterior_variance(data.point(i), data, k);
            worst_train = std::max(worst_train, v / k.signal_variance);
            if (v > 1e-10 * k.signal_variance) ++fail_train;
        }
        for (int q = 0; q < 10; ++q) {
            Vector x(d);
            do {
                for (auto& v : x) v = u(rng);
            } while (min_scaled_distance(x, data.points, ell) < 0.05);
            if (!(posterior_variance(x, data, k) > 0.0)) ++fail_query;
        }

        // anchors contained in the data: zero cost and rho bounded by eps
        const int ad = std::min(d, 3);
        const int ppd = ad == 1 ? 5 : (ad == 2 ? 4 : 3);
        const int eval = ad == 3 ? 30 : 100;
        const RegionOfInterest r{Vector::Constant(ad, -1.0), Vector::Constant(ad, 1.0)};
        const AnchorSet anchors =
            uniform_anchor_grid(r, std::vector<int>(static_cast<std::size_t>(ad), ppd), MetricWeight::identity(ad), eval);
        const Vector aell = Vector::Constant(ad, 0.3 * 2.0 / (ppd - 1));
        Matrix pts = anchors.points;
        const Matrix extra = separated_points(rng, n, ad, aell, 0.5);
        for (Eigen::Index i = 0; i < extra.rows(); ++i)
            if (min_scaled_distance(extra.row(i).transpose(), pts, aell) >= 0.5) {
                pts.conservativeResize(pts.rows() + 1, Eigen::NoChange);
                pts.row(pts.rows() - 1) = extra.row(i);
            }
        const KernelConfig ak{1.0, aell, 0.0};
        const double cost = cost_v(Dataset(pts), anchors, ak);
        const double rho = filling_distance(pts, r, MetricWeight::identity(ad), eval);
        if (!(cost <= 1e-10) || !(rho <= anchors.epsilon)) ++fail_anchor;
    }
    const bool pass = fail_train == 0 && fail_query == 0 && fail_anchor == 0;
    return {pass, "200 instances: training-point failures " + std::to_string(fail_train) +
                      " (worst " + sci(worst_train) + " sf2), non-training failures " +
                      std::to_string(fail_query) + ", anchors-in-data failures " + std::to_string(fail_anchor)};
}

Outcome criterion7() {
    Outcome o{true, ""};
    {
        const ExperimentConfig cfg = load_config(preset("lti_fig1.json"));
        double worst = 0.0;
        for (std::size_t s = 0; s < cfg.anchor_sets.size(); ++s) {
            const DesignProblem p = build_problem(cfg, s);
            for (int i = 0; i < 20; ++i) {
                const Vector theta = draw_initial_theta(p.signal, cfg.input, run_seed(77, s, static_cast<std::size_t>(i)));
                worst = std::max(worst, gradient_check(theta, p));
            }
        }
        o.pass = worst < 1e-4;
        o.detail = "LTI worst " + sci(worst) + " (< 1e-4, 3 sets x 20);";
    }
    {
        const ExperimentConfig cfg = load_config(preset("msd_table1.json"));
        const std::size_t set = 2;  // M = 125, the cheapest Gram
        const DesignProblem p = build_problem(cfg, set);
        std::mt19937_64 rng(707);
        std::uniform_real_distribution<double> amp(20.0, 200.0);
        const Eigen::Index nf = p.signal.n_theta() / 2;
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            Vector theta = draw_initial_theta(p.signal, cfg.input, run_seed(77, set, static_cast<std::size_t>(i)));
            theta.head(nf).setConstant(amp(rng));
            worst = std::max(worst, gradient_check(theta, p));
        }
        const bool ok = worst < 1e-3;
        o.pass = o.pass && ok;
        o.detail += " MSD worst " + sci(worst) + " (< 1e-3, M=125 x 20)";
    }
    return o;
}

Outcome criterion8() {
    std::mt19937_64 rng(808);
    std::uniform_int_distribution<int> dim(1, 4), count(1, 19);
    std::uniform_real_distribution<double> ls(0.2, 1.5), sf(0.5, 5.0), u(-1.0, 1.0);
    int failures = 0;
    double worst = -INFINITY;
    for (int t = 0; t < 200; ++t) {
        const int d = dim(rng);
        const int n = count(rng);
        Vector ell(d);
        for (auto& v : ell) v = ls(rng);
        const KernelConfig k = KernelConfig::with_default_jitter(sf(rng), ell);
        Matrix pts(n, d);
        for (auto& v : pts.reshaped()) v = u(rng);
        Matrix more(n + 1, d);
        more.topRows(n) = pts;
        for (Eigen::Index c = 0; c < d; ++c) more(n, c) = u(rng);
        const Dataset a(pts), b(more);
        for (int q = 0; q < 10; ++q) {
            Vector x(d);
            for (auto& v : x) v = u(rng);
            const double rise = posterior_variance(x, b, k) - posterior_variance(x, a, k);
            worst = std::max(worst, rise / k.signal_variance);
            if (rise > 1e-9 * k.signal_variance) ++failures;
        }
    }
    return {failures == 0, "2000 queries, increases beyond 1e-9 sf2: " + std::to_string(failures) +
                               " (largest change " + sci(worst) + " sf2)"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome criterion9() {
    const fs::path a = scratch("determinism_a"), b = scratch("determinism_b");
    fs::remove_all(a);
    fs::remove_all(b);
    auto mc = [](const fs::path& out, int jobs) {
        const std::string cmd = std::string("\"") + SFID_CLI + "\" mc --config \"" +
                                preset("lti_fig1.json").string() + "\" --runs 3 --jobs " +
                                std::to_string(jobs) + " --out \"" + out.string() + "\" > /dev/null";
        return std::system(cmd.c_str());
    };
    const int ra = mc(a, 1);
    const int rb = mc(b, 2);
    if (ra != 0 || rb != 0) return {false, "sfid mc exited with " + std::to_string(ra) + " / " + std::to_string(rb)};
    const std::string ja = slurp(a / "report.json"), jb = slurp(b / "report.json");
    const bool same = !ja.empty() && ja == jb;
    return {same, "report.json " + std::to_string(ja.size()) + " bytes, " +
                      (same ? "byte-identical" : "differs") + " across two runs (--jobs 1 vs 2)"};
}

struct Criterion {
    int id;
    double limit_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    app.add_option("--criterion", only, "criterion number(s) to run (default: all)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all = {
        {1, 1, criterion1},   {2, 30, criterion2},  {3, 600, criterion3},
        {4, 3600, criterion4}, {5, 30, criterion5}, {6, 600, criterion6},
        {7, 1800, criterion7}, {8, 600, criterion8}, {9, 600, criterion9},
    };
    fs::create_directories(SFID_ACCEPT_OUT);
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failed;
        std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
                  << fmt(secs, 1) << " s / limit " << fmt(c.limit_seconds, 0) << " s"
                  << (in_time ? "" : ", too slow") << "]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
