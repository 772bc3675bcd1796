#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "saclab/experiments/runners.hpp"
#include "saclab/rng.hpp"
#include "saclab/simd/kernels.hpp"
#include "saclab/stats.hpp"
#include "sweep_internal.hpp"

namespace saclab {

using namespace detail;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void append(std::vector<double>& v, const std::array<double, 5>& a) { v.insert(v.end(), a.begin(), a.end()); }

} // namespace

// ---------------------------------------------------------------------------
// Online dynamic regret

SweepResult run_online_regret(const SweepSpec& spec) {
    require_valid(spec, Experiment::regret);
    const std::vector<std::string> cols{"segments", "variation", "eta", "lambda", "regret", "regret_per_T",
                                        "final_err22"};
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t seed) {
        const GenConfig cfg = gen_config(p, seed);
        const double T = static_cast<double>(cfg.T);
        const auto by_rate = 1 + static_cast<std::size_t>(std::floor(p.num("drift_rate") * T));
        const std::size_t segments = std::min(cfg.T, std::max(p.count("segments"), by_rate));
        const auto inst = gen_drift_sequence(cfg, segments);

        const double eta = p.num("eta_c") / std::sqrt(T);
        const double lam = p.num("lambda_c") * std::sqrt(std::log(static_cast<double>(cfg.M)) / T);
        BlockParam theta(inst.M(), inst.q());
        BlockParam grad(inst.M(), inst.q());
        double regret = 0.0;
        for (std::size_t t = 0; t < cfg.T; ++t) {
            const auto w = inst.w.row(t);
            const double r = simd::dot(theta.values(), w) - inst.y[t];
            const double r_star = simd::dot(inst.theta_at(t).values(), w) - inst.y[t];
            regret += 0.5 * (r * r - r_star * r_star);
            auto g = grad.values();
            for (std::size_t c = 0; c < g.size(); ++c) g[c] = r * w[c];
            theta = online_prox_step(theta, grad, eta, lam);
        }
        const auto& last = inst.theta_at(cfg.T - 1);
        return std::vector<double>{static_cast<double>(segments), inst.variation(), eta, lam, regret, regret / T,
                                   mixed_norm(theta - last, NormKind::two_two)};
    });
    res.summary = summarize(spec, res);
    return res;
}

json detail::summarize_regret(const SweepSpec&, const SweepResult& r) {
    json curves = json::array();
    for (const auto& c : curves_along(r, "T")) {
        if (c.size() < 2) continue;
        json j = loglog_fit(r, c, "T", "regret", {});
        std::vector<double> per_T, var;
        for (std::size_t cell : c) {
            per_T.push_back(cell_median(r, cell, "regret_per_T"));
            var.push_back(cell_median(r, cell, "variation"));
        }
        j["median_regret_per_T"] = per_T;
        j["median_variation"] = var;
        j["per_T_last_below_first"] = per_T.back() < per_T.front();
        curves.push_back(j);
    }
    return json{{"curves", curves}};
}

// ---------------------------------------------------------------------------
// Robustness to contamination

SweepResult run_robustness(const SweepSpec& spec) {
    require_valid(spec, Experiment::robust);
    const std::vector<std::string> cols = concat(
        {"contaminated", "err_clean", "err_plain", "err_mom", "plain_over_clean", "mom_over_clean", "converged",
         "plain_converged", "mom_converged", "mom_iterations"},
        kConeColumns);
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t seed) {
        const auto clean = gen_linear_instance(gen_config(p, seed));
        const auto dirty = inject_contamination(clean, p.num("eps"), p.num("magnitude"), derive_seed(seed, "outliers"));
        const double lam = sweep_lambda(spec, clean.M(), clean.T(), clean.config.noise_sigma);
        const auto sc = with_lambda(spec.solver, lam);
        const auto ref = fit_group_lasso(clean, sc);
        const auto plain = fit_group_lasso(dirty, sc);
        const auto mom = fit_mom(dirty, p.count("B"), sc);
        const auto err = [&](const FitResult& f) { return mixed_norm(f.theta_hat - clean.theta_star, NormKind::two_two); };
        const double ec = err(ref), ep = err(plain), em = err(mom);
        std::vector<double> v{static_cast<double>(dirty.contamination_mask.size()), ec, ep, em, ep / ec, em / ec,
                              flag(ref.converged), flag(plain.converged), flag(mom.converged),
                              static_cast<double>(mom.iterations)};
        append(v, cone_columns(clean, ref.theta_hat, clean.theta_star, lam, ref.converged));
        return v;
    });
    res.summary = summarize(spec, res);
    return res;
}

json detail::summarize_robust(const SweepSpec&, const SweepResult& r) {
    json cells = json::array();
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
        const double ec = cell_median(r, c, "err_clean"), ep = cell_median(r, c, "err_plain"),
                     em = cell_median(r, c, "err_mom");
        cells.push_back({{"cell", c},
                         {"label", curve_label(r, c, "")},
                         {"median_err_clean", ec},
                         {"median_err_plain", ep},
                         {"median_err_mom", em},
                         {"plain_over_clean", ep / ec},
                         {"mom_over_clean", em / ec},
                         {"mom_converged_rate", cell_rate(r, c, "mom_converged")}});
    }
    return json{{"per_cell", cells}};
}

// ---------------------------------------------------------------------------
// Grouped tools and hierarchical interactions

namespace {

std::set<std::size_t> groups_of(const SupportSet& s, const std::vector<std::size_t>& gmap) {
    std::set<std::size_t> g;
    for (auto j : s.indices()) g.insert(gmap[j]);
    return g;
}

std::vector<double> group_trial(const SweepSpec& spec, const CellParams& p, std::uint64_t seed) {
    GenConfig cfg = gen_config(p, seed);
    cfg.T = derived_T(p, group_scale(p));
    const std::size_t G = p.count("G");
    const auto inst = gen_grouped_instance(cfg, G, p.count("kg"));
    const double sigma = spec.solver.sigma_g.value_or(cfg.noise_sigma);
    SolverConfig sc = with_lambda(spec.solver, sweep_lambda(spec, cfg.M, cfg.T, cfg.noise_sigma));
    if (!sc.lambda_group) sc.lambda_group = lambda_rate(G, cfg.T, sc.c0, sigma);
    const auto fit = fit_sparse_group(inst, sc);
    const auto sup = support_of(fit.theta_hat);
    const bool gm = groups_of(sup, *inst.group_map) == groups_of(inst.s_star, *inst.group_map);
    const bool tm = sup == inst.s_star;
    return {static_cast<double>(cfg.T), static_cast<double>(cfg.T) / group_scale(p), flag(gm), flag(tm),
            flag(gm && fit.converged), flag(tm && fit.converged), flag(fit.converged),
            static_cast<double>(fit.iterations), fit.kkt_residual, *sc.lambda, *sc.lambda_group};
}

std::vector<double> hierarchy_trial(const SweepSpec& spec, const CellParams& p, std::uint64_t seed) {
    GenConfig cfg = gen_config(p, seed);
    cfg.T = derived_T(p, hierarchy_scale(p));
    const auto inst = gen_interaction_instance(cfg, p.count("k2"));
    const auto sc = with_lambda(spec.solver, sweep_lambda(spec, cfg.M, cfg.T, cfg.noise_sigma));
    const auto hf = fit_hierarchical(inst, sc);
    const bool mm = support_of(hf.main_effects()) == inst.s_star;
    auto sel = hf.interaction_support();
    std::vector<std::pair<std::size_t, std::size_t>> truth;
    for (const auto& it : *inst.interactions) truth.emplace_back(it.i, it.j);
    std::sort(sel.begin(), sel.end());
    std::sort(truth.begin(), truth.end());
    const bool im = sel == truth;
    return {static_cast<double>(cfg.T), static_cast<double>(cfg.T) / hierarchy_scale(p), flag(mm), flag(im),
            flag(hf.heredity_holds()), flag(mm && im && hf.fit.converged), flag(hf.fit.converged),
            static_cast<double>(hf.fit.iterations), static_cast<double>(sel.size()), *sc.lambda};
}

} // namespace

SweepResult run_structured(const SweepSpec& spec) {
    require_valid(spec, {Experiment::group, Experiment::hierarchy});
    SweepResult res;
    if (spec.experiment == Experiment::group) {
        res = run_grid(spec,
                       {"T", "tau", "group_match", "tool_match", "group_success", "tool_success", "converged",
                        "iterations", "kkt_residual", "lambda", "lambda_group"},
                       [&](const CellParams& p, std::uint64_t seed) { return group_trial(spec, p, seed); });
    } else {
        res = run_grid(spec,
                       {"T", "tau", "main_match", "interaction_match", "heredity", "success", "converged",
                        "iterations", "interactions_selected", "lambda"},
                       [&](const CellParams& p, std::uint64_t seed) { return hierarchy_trial(spec, p, seed); });
    }
    res.summary = summarize(spec, res);
    return res;
}

json detail::summarize_structured(const SweepSpec& spec, const SweepResult& r) {
    const std::string key = spec.grid.count("tau") ? "tau" : "T";
    json s, curves = json::array();
    if (r.experiment == Experiment::group) {
        for (const auto& c : curves_along(r, key)) {
            auto j = success_curve(r, c, key, "tau", "group_success");
            std::vector<double> tools;
            for (std::size_t cell : c) tools.push_back(cell_rate(r, cell, "tool_success"));
            j["tool_success"] = tools;
            curves.push_back(j);
        }
    } else {
        double her = 0.0;
        const std::size_t h = r.column("heredity");
        for (const auto& row : r.rows) her += row.values[h];
        s["heredity_fraction"] = r.rows.empty() ? kNaN : her / static_cast<double>(r.rows.size());
        for (const auto& c : curves_along(r, key)) {
            auto j = success_curve(r, c, key, "tau", "success");
            j["interaction"] = success_curve(r, c, key, "tau", "interaction_match");
            curves.push_back(j);
        }
    }
    s["curves"] = curves;
    return s;
}

} // namespace saclab
