// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance [--out DIR] [--configs DIR] [--only 3,5,11]
//
// Sweep configs are read from --configs (default: the source tree), their CSV
// and summary outputs are redirected into --out. Sweeps shared by several
// criteria run once.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include "oracles.hpp"
#include "saclab/block_param.hpp"
#include "saclab/experiments/sweep.hpp"
#include "saclab/io.hpp"
#include "saclab/problem_gen.hpp"
#include "saclab/rng.hpp"
#include "saclab/solvers.hpp"
#include "saclab/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace saclab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Two binomial standard errors at p = 1/2: allowed dip below the isotonic fit.
double monotone_tol(double trials) { return 2.0 * std::sqrt(0.25 / trials); }

class Sweeps {
public:
    Sweeps(fs::path configs, fs::path out) : configs_(std::move(configs)), out_(std::move(out)) {}

    SweepSpec load(const std::string& name) const {
        std::vector<std::string> errs;
        auto spec = sweep_spec_from_json(read_json_file(configs_ / (name + ".json")), errs);
        if (!errs.empty()) throw std::runtime_error(name + ".json: " + json(errs).dump());
        spec.output_path = (out_ / (name + ".csv")).string();
        spec.summary_path = (out_ / (name + "_summary.json")).string();
        return spec;
    }

    /// Runs the named config once, after an optional adjustment, and writes its files.
    const SweepResult& get(const std::string& name, const std::function<void(SweepSpec&)>& adjust = {}) {
        if (auto it = cache_.find(name); it != cache_.end()) return it->second;
        auto spec = load(name);
        if (adjust) adjust(spec);
        auto res = run_sweep(spec);
        write_sweep(spec, res);
        return cache_.emplace(name, std::move(res)).first->second;
    }

    const std::map<std::string, SweepResult>& all() const { return cache_; }
    const fs::path& out() const { return out_; }

private:
    fs::path configs_, out_;
    std::map<std::string, SweepResult> cache_;
};

// ---------------------------------------------------------------------------

Outcome prox_oracle() {
    std::mt19937_64 rng(derive_seed(2024, "prox"));
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t M = 1 + rng() % 6, q = 1 + rng() % 4;
        std::vector<double> z(M * q);
        const double scale = 0.2 + 2.0 * u(rng);
        for (double& x : z) x = scale * n(rng);
        const double tau = u(rng);
        const auto got = block_soft_threshold(BlockParam(M, q, z), tau);
        const auto want = oracle::numeric_prox(z, oracle::block_terms(M, q, tau));
        for (std::size_t c = 0; c < want.size(); ++c) worst = std::max(worst, std::abs(got.values()[c] - want[c]));
    }
    return {worst <= 1e-8, "max |prox - numeric| = " + fmt(worst, 3) + " (<= 1e-8) over 1000 pairs"};
}

Eigen::MatrixXd dense(const ProblemInstance& inst) {
    Eigen::MatrixXd w(inst.T(), inst.dim());
    for (std::size_t t = 0; t < inst.T(); ++t)
        for (std::size_t c = 0; c < inst.dim(); ++c) w(t, c) = inst.w(t, c);
    return w;
}

Eigen::VectorXd as_vec(std::span<const double> v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Lasso KKT residual recomputed from the raw data, q = 1.
double kkt_from_data(const ProblemInstance& inst, const Eigen::VectorXd& theta, double lambda) {
    const Eigen::MatrixXd w = dense(inst);
    const Eigen::VectorXd g = w.transpose() * (w * theta - as_vec(inst.y)) / static_cast<double>(inst.T());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double r = theta[j] != 0.0 ? std::abs(g[j] + lambda * (theta[j] > 0 ? 1.0 : -1.0))
                                         : std::max(0.0, std::abs(g[j]) - lambda);
        worst = std::max(worst, r);
    }
    return worst;
}

Outcome solver_correctness() {
    Rng rng(derive_seed(2024, "solver"));
    int ok = 0;
    double worst_kkt = 0.0;
    for (int i = 0; i < 100; ++i) {
        GenConfig g;
        g.M = 10 + uniform_index(rng, 191);
        g.k = 1 + uniform_index(rng, std::min<std::size_t>(10, g.M));
        g.T = 40 + uniform_index(rng, 400);
        g.noise_sigma = 0.1 + 2.0 * uniform01(rng);
        g.seed = rng();
        const auto inst = gen_linear_instance(g);
        SolverConfig c;
        c.lambda = lambda_rate(g.M, g.T, 0.5 + 1.5 * uniform01(rng), g.noise_sigma);
        const auto fit = fit_group_lasso(inst, c);
        const double r = kkt_from_data(inst, as_vec(fit.theta_hat.values()), *c.lambda);
        worst_kkt = std::max(worst_kkt, r);
        ok += fit.converged && r <= 1e-7 ? 1 : 0;
    }
    int match = 0;
    double worst_diff = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t M = 2 + uniform_index(rng, 7), T = M + 3 + uniform_index(rng, 20);
        DesignMatrix w(T, M);
        std::vector<double> y(T);
        Eigen::MatrixXd W(T, M);
        Eigen::VectorXd Y(T);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t j = 0; j < M; ++j) W(t, j) = w(t, j) = standard_normal(rng) / 2;
            Y[t] = y[t] = standard_normal(rng);
        }
        SolverConfig c;
        c.lambda = 0.02 + 0.3 * uniform01(rng);
        const auto inst = make_custom_instance(M, 1, std::move(w), std::move(y), BlockParam(M, 1));
        const auto fit = fit_group_lasso(inst, c);
        const double d = (as_vec(fit.theta_hat.values()) - oracle::exhaustive_lasso(W, Y, *c.lambda)).cwiseAbs().maxCoeff();
        worst_diff = std::max(worst_diff, d);
        match += fit.converged && d <= 1e-6 ? 1 : 0;
    }
    return {ok == 100 && match == 50, std::to_string(ok) + "/100 converged with data KKT <= 1e-7 (worst " +
                                          fmt(worst_kkt, 3) + "); " + std::to_string(match) +
                                          "/50 tiny fits within 1e-6 of the exhaustive oracle (worst " +
                                          fmt(worst_diff, 3) + ")"};
}

Outcome rate_vs_T(Sweeps& sw) {
    const auto& f = sw.get("rate").summary["slope_vs_T"].at(0)["fit"];
    const double s = f["slope"], se = f["slope_se"];
    const bool pass = s - se <= -0.4 && s + se >= -0.6;
    return {pass, "slope " + fmt(s) + " +- " + fmt(se, 2) + " against [-0.6, -0.4]"};
}

Outcome rate_vs_logM(Sweeps& sw) {
    const double ratio = sw.get("rate_logm").summary["ratio_max_over_min_M"].at(0)["ratio"];
    return {ratio <= 2.0, "err(M=4096)/err(M=64) = " + fmt(ratio) + " (<= 2)"};
}

Outcome phase(Sweeps& sw) {
    const auto& s = sw.get("phase").summary;
    bool pass = true;
    std::string detail;
    for (const auto& c : s["curves"]) {
        const auto success = c["success"].get<std::vector<double>>();
        const auto trials = c["trials"].get<std::vector<double>>();
        const double dev = c["max_isotonic_deviation"], tol = monotone_tol(trials.front());
        const bool ok = dev <= tol && success.front() <= 0.1 && success.back() >= 0.9 && c["cross50"].is_number();
        pass = pass && ok;
        detail += c["label"].get<std::string>() + ": first " + fmt(success.front(), 3) + ", last " +
                  fmt(success.back(), 3) + ", isotonic dev " + fmt(dev, 3) + " (<= " + fmt(tol, 3) + "); ";
    }
    const double spread = s["cross50_spread"].is_number() ? s["cross50_spread"].get<double>() : NAN;
    pass = pass && spread <= 2.0;
    return {pass, detail + "50% crossing spread " + fmt(spread) + " (<= 2)"};
}

Outcome dense_gap(Sweeps& sw) {
    const auto& c = sw.get("dense").summary["curves"].at(0);
    const double d = c["dense_ratio"], s = c["sparse_ratio"];
    return {d >= 4.0 && s <= 2.0, "ridge ratio " + fmt(d) + " (>= 4), sparse ratio " + fmt(s) + " (<= 2)"};
}

Outcome value_bound(Sweeps& sw) {
    const auto& s = sw.get("value").summary;
    const double h = s["holds_fraction"];
    const std::size_t rows = s["rows"];
    return {h >= 0.95 && rows == 200, "bound holds in a fraction " + fmt(h) + " of " + std::to_string(rows) + " trials (>= 0.95)"};
}

Outcome regret(Sweeps& sw) {
    const auto& c = sw.get("regret").summary["curves"].at(0);
    const double s = c["fit"]["slope"], se = c["fit"]["slope_se"];
    const auto per_T = c["median_regret_per_T"].get<std::vector<double>>();
    const bool down = c["per_T_last_below_first"];
    return {s - se <= 0.8 && down, "slope " + fmt(s) + " +- " + fmt(se, 2) + " (<= 0.8); regret/T " +
                                       fmt(per_T.front()) + " -> " + fmt(per_T.back())};
}

Outcome robustness(Sweeps& sw) {
    const auto& c = sw.get("robust").summary["per_cell"].at(0);
    const double mom = c["mom_over_clean"], plain = c["plain_over_clean"];
    return {mom <= 3.0 && plain >= 10.0,
            "median-of-means/clean " + fmt(mom) + " (<= 3), plain/clean " + fmt(plain) + " (>= 10)"};
}

// Run directly: the square-root fit is compared against the plain fit on the same data.
Outcome tuning_free() {
    const std::size_t M = 256, T = 800, trials = 30;
    const double sigmas[] = {0.1, 1.0, 10.0};
    SolverConfig base;
    const double lsn = lambda_sn_default(M, T, base.sn_c, base.sn_delta);
    SolverConfig plain = base;
    plain.lambda = lambda_rate(M, T, 1.5, 1.0);
    std::vector<double> med;
    double plain_success = 0.0;
    for (double sigma : sigmas) {
        std::vector<double> ratio;
        for (std::size_t t = 0; t < trials; ++t) {
            GenConfig g;
            g.M = M;
            g.k = 5;
            g.T = T;
            g.noise_sigma = sigma;
            g.signal_magnitude = 20.0;
            g.seed = derive_seed(2024, static_cast<std::uint64_t>(sigma * 1000), t);
            const auto inst = gen_linear_instance(g);
            const auto fit = fit_sqrt_group_lasso(inst, lsn, base);
            ratio.push_back(mixed_norm(fit.theta_hat - inst.theta_star, NormKind::two_two) / sigma);
            if (sigma == 10.0) {
                const auto pf = fit_group_lasso(inst, plain);
                plain_success += pf.converged && support_of(pf.theta_hat) == inst.s_star ? 1.0 : 0.0;
            }
        }
        med.push_back(stats::median(ratio));
    }
    plain_success /= static_cast<double>(trials);
    const double spread = *std::max_element(med.begin(), med.end()) / *std::min_element(med.begin(), med.end());
    return {spread <= 2.0 && plain_success < 0.5,
            "median err/sigma " + fmt(med[0], 3) + ", " + fmt(med[1], 3) + ", " + fmt(med[2], 3) + " (max/min " +
                fmt(spread, 3) + " <= 2); plain fit support success at sigma=10: " + fmt(plain_success, 3) +
                " (< 0.5)"};
}

Outcome structured(Sweeps& sw) {
    const double c1 = sw.get("phase").summary["c1_estimate"].is_number()
                          ? sw.get("phase").summary["c1_estimate"].get<double>()
                          : NAN;
    if (!std::isfinite(c1)) return {false, "no 90% crossing in the phase sweep to calibrate against"};
    const double tau = 4.0 * c1;
    const auto& g = sw.get("group", [&](SweepSpec& s) {
        s.grid = {{"tau", {tau}}};
        s.trials_per_cell = 100;
    });
    const double gs = g.summary["curves"].at(0)["success"].at(0);
    const auto& h = sw.get("hierarchy").summary;
    const double her = h["heredity_fraction"];
    const auto& inter = h["curves"].at(0)["interaction"];
    const double dev = inter["max_isotonic_deviation"];
    const double tol = monotone_tol(inter["trials"].at(0).get<double>());
    return {gs >= 0.9 && her == 1.0 && dev <= tol,
            "group success " + fmt(gs, 3) + " at tau " + fmt(tau) + " (>= 0.9); heredity " + fmt(her, 3) +
                " (= 1); interaction curve isotonic dev " + fmt(dev, 3) + " (<= " + fmt(tol, 3) + ")"};
}

Outcome belief_value(Sweeps& sw) {
    const auto& c = sw.get("pomdp_p1").summary["p1"].at(0);
    const double r2 = c["linear_fit"]["r2"];
    const bool within = c["all_within_bound"];
    const auto gap = c["gap"].get<std::vector<double>>();
    const auto bound = c["bound"].get<std::vector<double>>();
    std::string pairs;
    for (std::size_t i = 0; i < gap.size(); ++i) pairs += (i ? " " : "") + fmt(gap[i], 3) + "<=" + fmt(bound[i], 3);
    return {r2 >= 0.9 && within, "R^2 " + fmt(r2) + " (>= 0.9); gap<=bound per eps: " + pairs};
}

Outcome belief_recovery(Sweeps& sw) {
    const auto& c = sw.get("pomdp_p2").summary["p2"].at(0);
    const auto below = c["below_threshold"].get<std::vector<bool>>();
    const auto n_below = std::count(below.begin(), below.end(), true);
    const double min_below = c["min_success_below_threshold"].is_number()
                                 ? c["min_success_below_threshold"].get<double>()
                                 : NAN;
    const double last = c["success_at_largest_eps"];
    return {n_below > 0 && min_below >= 0.9 && last <= 0.5,
            std::to_string(n_below) + " cells below lambda/4 with min success " + fmt(min_below, 3) +
                " (>= 0.9); success at the largest eps " + fmt(last, 3) + " (<= 0.5)"};
}

const std::vector<std::string> kAllSweeps = {"rate",  "rate_logm", "phase",     "dense",    "value",   "regret",
                                             "robust", "hierarchy", "pomdp_p1", "pomdp_p2"};

Outcome cone(Sweeps& sw) {
    for (const auto& n : kAllSweeps) sw.get(n);
    std::size_t applicable = 0, violations = 0;
    std::string per;
    for (const auto& [name, res] : sw.all()) {
        const auto a = cone_audit(res);
        applicable += a.applicable;
        violations += a.violations;
        if (a.applicable) per += " " + name + "=" + std::to_string(a.applicable);
    }
    return {violations == 0 && applicable > 0,
            std::to_string(violations) + " violations in " + std::to_string(applicable) + " applicable rows (" +
                per.substr(per.empty() ? 0 : 1) + ")"};
}

// Sets SAC_LAB_THREADS for the scope.
struct ThreadsEnv {
    explicit ThreadsEnv(const char* v) {
        if (const char* old = std::getenv("SAC_LAB_THREADS")) prev = old, had = true;
        setenv("SAC_LAB_THREADS", v, 1);
    }
    ~ThreadsEnv() {
        if (had) setenv("SAC_LAB_THREADS", prev.c_str(), 1);
        else unsetenv("SAC_LAB_THREADS");
    }
    std::string prev;
    bool had = false;
};

Outcome reproducibility(Sweeps& sw) {
    // Reduced grids of four sweep kinds, each run single-threaded and on four workers.
    std::vector<std::pair<std::string, std::function<void(SweepSpec&)>>> runs = {
        {"regret",
         [](SweepSpec& s) {
             s.grid = {{"T", {1024, 2048}}};
             s.trials_per_cell = 6;
         }},
        {"phase",
         [](SweepSpec& s) {
             s.grid = {{"M", {256}}, {"tau", {1, 4}}};
             s.trials_per_cell = 8;
         }},
        {"hierarchy",
         [](SweepSpec& s) {
             s.grid = {{"tau", {1, 4}}};
             s.trials_per_cell = 10;
         }},
        {"pomdp_p1",
         [](SweepSpec& s) {
             s.grid = {{"eps_b", {0, 0.1}}};
             s.trials_per_cell = 4;
             s.params["rollouts"] = 100;
             s.params["router_T"] = 5000;
         }},
    };
    const fs::path dir = sw.out() / "repro";
    fs::create_directories(dir);
    std::string detail;
    bool pass = true;
    for (const auto& [name, adjust] : runs) {
        auto spec = sw.load(name);
        adjust(spec);
        spec.output_path = (dir / (name + ".csv")).string();
        spec.summary_path = (dir / (name + "_summary.json")).string();
        std::string bytes[2], memory[2];
        const char* threads[] = {"1", "4"};
        for (int i = 0; i < 2; ++i) {
            ThreadsEnv env(threads[i]);
            const auto res = run_sweep(spec);
            write_sweep(spec, res);
            bytes[i] = slurp(spec.output_path) + slurp(spec.summary_path);
            memory[i] = sweep_csv(spec, res) + res.summary.dump();
        }
        const bool same = !bytes[0].empty() && bytes[0] == bytes[1] && memory[0] == memory[1];
        pass = pass && same;
        detail += name + (same ? " identical" : " DIFFERS") + " (" + std::to_string(bytes[0].size()) + " B); ";
    }
    return {pass, detail + "threads 1 vs 4"};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no budget
    std::function<Outcome(Sweeps&)> run;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string out = "acceptance_out", configs;
#ifdef SACLAB_CONFIG_DIR
    configs = SACLAB_CONFIG_DIR;
#endif
    std::vector<int> only;
    app.add_option("--out", out, "Directory for sweep outputs");
    auto* cfg_opt = app.add_option("--configs", configs, "Directory holding the sweep configs");
    app.add_option("--only", only, "Criteria to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    if (const char* env = std::getenv("SACLAB_CONFIG_DIR"); env && *env && cfg_opt->count() == 0) configs = env;
    fs::create_directories(out);

    const std::vector<Criterion> criteria = {
        {1, "prox matches numeric minimization", 5, [](Sweeps&) { return prox_oracle(); }},
        {2, "solver KKT and exhaustive oracle", 120, [](Sweeps&) { return solver_correctness(); }},
        {3, "estimation error slope in T", 300, rate_vs_T},
        {4, "estimation error growth in M", 300, rate_vs_logM},
        {5, "support recovery phase transition", 600, phase},
        {6, "dense baseline gap", 300, dense_gap},
        {7, "value gap bound", 180, value_bound},
        {8, "online dynamic regret", 180, regret},
        {9, "median-of-means under contamination", 180, robustness},
        {10, "square-root tuning across noise levels", 180, [](Sweeps&) { return tuning_free(); }},
        {11, "grouped and hierarchical recovery", 300, structured},
        {12, "value gap under belief error", 300, belief_value},
        {13, "recovery from corrupted beliefs", 300, belief_recovery},
        {14, "cone condition across sweeps", 0, cone},
        {15, "byte-identical reruns", 0, reproducibility},
    };

    Sweeps sw(configs, out);
    json report = json::array();
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(sw);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.budget_s <= 0 || secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::string timing = fmt(secs, 3) + " s";
        if (c.budget_s > 0) timing += " (budget " + fmt(c.budget_s) + " s" + (in_time ? ")" : ", EXCEEDED)");
        std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << "; " << timing
                  << std::endl;
        report.push_back({{"id", c.id}, {"name", c.name}, {"pass", pass}, {"result_ok", o.pass}, {"seconds", secs},
                          {"budget_seconds", c.budget_s}, {"detail", o.detail}});
    }
    write_text_file(fs::path(out) / "acceptance_report.json", report.dump(2) + "\n");
    return failed == 0 ? 0 : 1;
}
