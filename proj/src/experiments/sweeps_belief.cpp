#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "saclab/belief_pomdp.hpp"
#include "saclab/experiments/runners.hpp"
#include "saclab/io.hpp"
#include "saclab/rng.hpp"
#include "saclab/stats.hpp"
#include "sweep_internal.hpp"

namespace saclab {

using namespace detail;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PomdpModel sweep_model(const SweepSpec& spec) {
    if (!spec.params.contains("model")) return builtin_pomdp("chain4");
    const auto& m = spec.params["model"];
    return m.is_string() ? builtin_pomdp(m.get<std::string>()) : pomdp_from_json(m);
}

std::string arms_of(const SweepSpec& spec) { return spec.params.value("arms", std::string("both")); }

// Router learned from a behaviour trace: uniformly random actions, the belief
// in the blocks of the chosen action's tools, the realized reward as target.
FitResult learn_router(const PomdpModel& model, std::size_t T, const SolverConfig& solver, std::uint64_t seed) {
    const std::size_t S = model.num_states, M = model.num_tools();
    DesignMatrix w(T, M * S);
    std::vector<double> y(T);
    Rng rng(seed);
    const auto draw = [&](std::span<const double> p) {
        const double u = uniform01(rng);
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) return i;
        }
        return p.size() - 1;
    };
    std::size_t s = draw(model.initial);
    Belief b{model.initial};
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t a = uniform_index(rng, model.num_actions());
        for (std::size_t j : model.action_tools[a])
            for (std::size_t x = 0; x < S; ++x) w(t, j * S + x) = b.probs[x];
        y[t] = model.r(s, a);
        const std::size_t s2 = draw({model.transition[a].data() + s * S, S});
        const std::size_t o = draw({model.observation.data() + s2 * model.num_obs, model.num_obs});
        b = belief_update(model, b, a, o);
        s = s2;
    }
    const auto inst = make_custom_instance(M, S, std::move(w), std::move(y), BlockParam(M, S));
    SolverConfig sc = solver;
    sc.lambda = resolve_lambda(inst, solver);
    return fit_group_lasso(inst, sc);
}

double paired_mean(const RolloutStats& a, const RolloutStats& b, double& se) {
    std::vector<double> d(a.returns.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.returns[i] - b.returns[i];
    se = stats::stderr_mean(d);
    return stats::mean(d);
}

} // namespace

SweepResult run_belief_experiments(const SweepSpec& spec) {
    require_valid(spec, Experiment::pomdp);
    const PomdpModel model = sweep_model(spec);
    const std::string arms = arms_of(spec);
    const bool p1 = arms != "p2", p2 = arms != "p1";
    const auto mode = corruption_from_string(spec.params.value("mode", std::string("uniform_mix")));

    // Quantities fixed across the sweep: the learned router and the belief-error constants.
    BlockParam theta_star, theta_hat;
    double L_r = kNaN, L_P = kNaN, c_bel = kNaN;
    if (p1) {
        theta_star = reward_router(model);
        const std::size_t router_T = spec.params.value("router_T", 50000);
        theta_hat = learn_router(model, router_T, spec.solver, derive_seed(spec.master_seed, "router")).theta_hat;
        const auto lc = lipschitz_constants(model);
        L_r = lc.L_r;
        L_P = lc.L_P;
        c_bel = c_bel_constant(L_r, L_P, model.r_max(), model.gamma);
    }

    const std::vector<std::string> cols = concat(
        {"eps_b", "p1_gap", "p1_gap_se", "p1_learning_gap", "p1_learning_se", "p1_belief_gap", "p1_belief_se",
         "p1_eps_achieved", "L_r", "L_P", "c_bel", "p2_success", "p2_support_match", "converged", "p2_perturbation",
         "p2_eps_achieved"},
        kConeColumns);

    // Rollouts and traces depend on the trial only, so cells differ by the corruption alone.
    const std::uint64_t paired = derive_seed(spec.master_seed, "paired");
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t) {
        const double eps = p.num("eps_b");
        const std::uint64_t shared = derive_seed(paired, p.trial(), 0);
        std::vector<double> v(cols.size(), kNaN);
        v[0] = eps;
        if (p1) {
            const std::size_t H = p.count("horizon") ? p.count("horizon") : required_horizon(model);
            const std::size_t R = p.count("rollouts");
            const std::uint64_t rs = derive_seed(shared, "rollouts");
            const auto star = policy_rollouts(model, theta_star, BeliefMode::exact(), H, R, rs);
            const auto hat = policy_rollouts(model, theta_hat, BeliefMode::exact(), H, R, rs);
            const auto cor = policy_rollouts(model, theta_hat, BeliefMode::corrupt(eps, mode), H, R, rs);
            double se_gap = 0, se_learn = 0, se_bel = 0;
            v[1] = paired_mean(star, cor, se_gap);
            v[2] = se_gap;
            v[3] = paired_mean(star, hat, se_learn);
            v[4] = se_learn;
            v[5] = paired_mean(hat, cor, se_bel);
            v[6] = se_bel;
            v[7] = cor.max_eps;
            v[8] = L_r;
            v[9] = L_P;
            v[10] = c_bel;
        }
        if (p2) {
            BeliefTraceConfig tc;
            tc.num_tools = p.count("tools");
            tc.k = p.count("p2_k");
            tc.set_size = p.count("set_size");
            tc.T = p.count("p2_T");
            tc.noise_sigma = p.num("p2_sigma");
            tc.signal_magnitude = p.num("p2_signal");
            tc.eps = eps;
            tc.mode = mode;
            tc.seed = derive_seed(shared, "traces");
            const auto tr = generate_belief_traces(model, tc);
            const double lam = sweep_lambda(spec, tc.num_tools, tc.T, tc.noise_sigma);
            const auto fit = fit_group_lasso(tr.corrupted, with_lambda(spec.solver, lam));
            const bool match = support_of(fit.theta_hat) == tr.exact.s_star;
            v[11] = flag(match && fit.converged);
            v[12] = flag(match);
            v[13] = flag(fit.converged);
            v[14] = belief_grad_perturbation(tr.exact, tr.corrupted, tr.exact.theta_star);
            v[15] = tr.achieved_eps;
            const auto cone = cone_columns(tr.corrupted, fit.theta_hat, tr.exact.theta_star, lam, fit.converged);
            std::copy(cone.begin(), cone.end(), v.begin() + 16);
        }
        return v;
    });
    res.summary = summarize(spec, res);
    return res;
}

json detail::summarize_belief(const SweepSpec& spec, const SweepResult& r) {
    const std::string arms = arms_of(spec);
    json s;
    s["arms"] = arms;
    const auto curves = curves_along(r, "eps_b");

    if (arms != "p2") {
        json out = json::array();
        for (const auto& c : curves) {
            std::vector<double> eps, gap, se, learn, learn_se, achieved, bound;
            bool all_within = true;
            double c_bel = kNaN;
            for (std::size_t cell : c) {
                const auto g = finite(cell_column(r, cell, "p1_gap"));
                const auto gs = finite(cell_column(r, cell, "p1_gap_se"));
                const auto l = finite(cell_column(r, cell, "p1_learning_gap"));
                const auto ls = finite(cell_column(r, cell, "p1_learning_se"));
                const auto a = finite(cell_column(r, cell, "p1_eps_achieved"));
                c_bel = cell_median(r, cell, "c_bel");
                // Trials are equal-size rollout batches: pooled mean and standard error.
                const auto pooled_se = [](const std::vector<double>& v) {
                    double q = 0.0;
                    for (double x : v) q += x * x;
                    return std::sqrt(q) / static_cast<double>(v.size());
                };
                eps.push_back(axis_value(r, cell, "eps_b"));
                gap.push_back(stats::mean(g));
                se.push_back(pooled_se(gs));
                learn.push_back(stats::mean(l));
                learn_se.push_back(pooled_se(ls));
                achieved.push_back(*std::max_element(a.begin(), a.end()));
                bound.push_back(c_bel * achieved.back() + learn.back() + 3.0 * se.back());
                if (!(gap.back() <= bound.back())) all_within = false;
            }
            json j;
            j["label"] = curve_label(r, c.front(), "eps_b");
            j["eps_b"] = eps;
            j["gap"] = gap;
            j["gap_se"] = se;
            j["learning_gap"] = learn;
            j["learning_se"] = learn_se;
            j["eps_achieved"] = achieved;
            j["bound"] = bound;
            j["c_bel"] = c_bel;
            j["all_within_bound"] = all_within;
            std::set<double> distinct(eps.begin(), eps.end());
            j["linear_fit"] = distinct.size() >= 2 ? fit_json(stats::ols(eps, gap)) : json(nullptr);
            // At zero corruption the corrupted run replays the exact run, so the gaps coincide.
            for (std::size_t i = 0; i < eps.size(); ++i)
                if (eps[i] == 0.0) {
                    j["zero_eps_gap_minus_learning"] = gap[i] - learn[i];
                    j["zero_eps_se"] = se[i];
                }
            out.push_back(j);
        }
        s["p1"] = out;
    }

    if (arms != "p1") {
        json out = json::array();
        for (const auto& c : curves) {
            std::vector<double> eps, success, pert, lam, achieved;
            std::vector<bool> below;
            double min_below = kNaN;
            for (std::size_t cell : c) {
                eps.push_back(axis_value(r, cell, "eps_b"));
                success.push_back(cell_rate(r, cell, "p2_success"));
                pert.push_back(cell_median(r, cell, "p2_perturbation"));
                lam.push_back(cell_median(r, cell, "lambda"));
                achieved.push_back(cell_median(r, cell, "p2_eps_achieved"));
                below.push_back(pert.back() <= lam.back() / 4.0);
                if (below.back()) min_below = std::isnan(min_below) ? success.back() : std::min(min_below, success.back());
            }
            json j;
            j["label"] = curve_label(r, c.front(), "eps_b");
            j["eps_b"] = eps;
            j["success"] = success;
            j["median_perturbation"] = pert;
            j["lambda"] = lam;
            j["threshold_lambda_over_4"] = [&] {
                std::vector<double> t;
                for (double l : lam) t.push_back(l / 4.0);
                return t;
            }();
            j["below_threshold"] = below;
            j["min_success_below_threshold"] = min_below;
            j["success_at_largest_eps"] = success.back();
            std::set<double> distinct(achieved.begin(), achieved.end());
            if (distinct.size() >= 2) {
                const auto f = stats::ols(achieved, pert);
                j["c_grad_fit"] = fit_json(f);
                j["eps_threshold"] = f.slope > 0.0 ? lam.front() / (4.0 * f.slope) : kNaN;
            }
            out.push_back(j);
        }
        s["p2"] = out;
    }
    return s;
}

} // namespace saclab
