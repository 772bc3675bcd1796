#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "saclab/certificates.hpp"
#include "saclab/experiments/runners.hpp"
#include "saclab/policy_value.hpp"
#include "saclab/rng.hpp"
#include "saclab/stats.hpp"
#include "sweep_internal.hpp"

namespace saclab {

using namespace detail;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kRidgeGrid = 10;

std::vector<double> ridge_taus(double lo, double hi) {
    std::vector<double> t(kRidgeGrid);
    for (std::size_t i = 0; i < kRidgeGrid; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(kRidgeGrid - 1);
        t[i] = std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
    }
    return t;
}

void append(std::vector<double>& v, const std::array<double, 5>& a) { v.insert(v.end(), a.begin(), a.end()); }

// Max over curve cells of ratio med(col)[last] / med(col)[first].
json end_ratio(const SweepResult& r, const std::vector<std::size_t>& curve, std::string_view axis, std::string_view col,
               std::string_view filter) {
    json j;
    j["label"] = curve_label(r, curve.front(), axis);
    j[std::string(axis) + "_first"] = axis_value(r, curve.front(), axis);
    j[std::string(axis) + "_last"] = axis_value(r, curve.back(), axis);
    const double a = cell_median(r, curve.front(), col, filter), b = cell_median(r, curve.back(), col, filter);
    j["median_first"] = a;
    j["median_last"] = b;
    j["ratio"] = b / a;
    return j;
}

} // namespace

// ---------------------------------------------------------------------------
// Estimation rate

SweepResult run_rate_sweep(const SweepSpec& spec) {
    require_valid(spec, Experiment::rate);
    const std::vector<std::string> cols = concat(
        {"err22", "err12", "support_match", "converged", "iterations", "kkt_residual", "pdw_pass", "dual_max",
         "irrep_gap", "beta_min_margin"},
        kConeColumns);
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t seed) {
        const auto inst = gen_linear_instance(gen_config(p, seed));
        const double lam = sweep_lambda(spec, inst.M(), inst.T(), inst.config.noise_sigma);
        const auto fit = fit_group_lasso(inst, with_lambda(spec.solver, lam));
        const auto delta = fit.theta_hat - inst.theta_star;
        std::vector<double> v{mixed_norm(delta, NormKind::two_two), mixed_norm(delta, NormKind::one_two),
                              flag(support_of(fit.theta_hat) == inst.s_star), flag(fit.converged),
                              static_cast<double>(fit.iterations), fit.kkt_residual};
        if (p.count("certify")) {
            const auto rep = pdw_verify(inst, fit, lam);
            v.insert(v.end(), {flag(rep.pdw_pass), rep.dual_max, rep.irrep_gap, rep.beta_min_margin});
        } else {
            v.insert(v.end(), {kNaN, kNaN, kNaN, kNaN});
        }
        append(v, cone_columns(inst, fit.theta_hat, inst.theta_star, lam, fit.converged));
        return v;
    });
    res.summary = summarize(spec, res);
    return res;
}

json detail::summarize_rate(const SweepSpec&, const SweepResult& r) {
    json s;
    json vs_T = json::array(), vs_M = json::array(), ratios = json::array();
    for (const auto& c : curves_along(r, "T"))
        if (c.size() >= 2) vs_T.push_back(loglog_fit(r, c, "T", "err22", "converged"));
    for (const auto& c : curves_along(r, "M"))
        if (c.size() >= 2) {
            vs_M.push_back(loglog_fit(r, c, "M", "err22", "converged", true));
            ratios.push_back(end_ratio(r, c, "M", "err22", "converged"));
        }
    s["slope_vs_T"] = vs_T;
    s["slope_vs_logM"] = vs_M;
    s["ratio_max_over_min_M"] = ratios;
    return s;
}

// ---------------------------------------------------------------------------
// Phase transition

SweepResult run_phase_transition(const SweepSpec& spec) {
    require_valid(spec, Experiment::phase);
    const std::vector<std::string> cols = concat(
        {"T", "tau", "success", "support_match", "false_inclusions", "false_exclusions", "converged", "iterations",
         "kkt_residual"},
        kConeColumns);
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t seed) {
        GenConfig cfg = gen_config(p, seed);
        cfg.T = derived_T(p, phase_scale(p));
        const auto inst = gen_linear_instance(cfg);
        const double lam = sweep_lambda(spec, cfg.M, cfg.T, cfg.noise_sigma);
        const auto fit = fit_group_lasso(inst, with_lambda(spec.solver, lam));
        const auto sup = support_of(fit.theta_hat);
        double fi = 0, fe = 0;
        for (auto j : sup.indices()) fi += inst.s_star.contains(j) ? 0 : 1;
        for (auto j : inst.s_star.indices()) fe += sup.contains(j) ? 0 : 1;
        const bool match = sup == inst.s_star;
        std::vector<double> v{static_cast<double>(cfg.T), static_cast<double>(cfg.T) / phase_scale(p),
                              flag(match && fit.converged), flag(match), fi, fe, flag(fit.converged),
                              static_cast<double>(fit.iterations), fit.kkt_residual};
        append(v, cone_columns(inst, fit.theta_hat, inst.theta_star, lam, fit.converged));
        return v;
    });
    res.summary = summarize(spec, res);
    return res;
}

namespace detail {

// Success curve against a rescaled axis: raw rates, isotonic fit and crossings.
json success_curve(const SweepResult& r, const std::vector<std::size_t>& curve, std::string_view axis_key,
                   std::string_view axis_col, std::string_view success_col) {
    json j;
    j["label"] = curve_label(r, curve.front(), axis_key);
    std::vector<double> x, y, n;
    for (std::size_t c : curve) {
        x.push_back(axis_value(r, c, axis_col));
        y.push_back(cell_rate(r, c, success_col));
        n.push_back(static_cast<double>(cell_column(r, c, success_col).size()));
    }
    const auto iso = stats::isotonic_increasing(y, n);
    double dev = 0.0, drop = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        dev = std::max(dev, std::abs(y[i] - iso[i]));
        if (i > 0) drop = std::max(drop, y[i - 1] - y[i]);
    }
    j[std::string(axis_col)] = x;
    j["success"] = y;
    j["trials"] = n;
    j["isotonic"] = iso;
    j["max_isotonic_deviation"] = dev;
    j["max_drop"] = drop;
    j["cross50"] = stats::first_crossing(x, iso, 0.5);
    j["cross90"] = stats::first_crossing(x, iso, 0.9);
    return j;
}

} // namespace detail

json detail::summarize_phase(const SweepSpec& spec, const SweepResult& r) {
    const bool by_tau = spec.grid.count("tau") > 0;
    const std::string key = by_tau ? "tau" : "T";
    json curves = json::array();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, c1 = 0.0;
    bool all_cross = true;
    for (const auto& c : curves_along(r, key)) {
        auto j = success_curve(r, c, key, "tau", "success");
        const double t50 = j["cross50"].is_number() ? j["cross50"].get<double>() : kNaN;
        const double t90 = j["cross90"].is_number() ? j["cross90"].get<double>() : kNaN;
        if (std::isfinite(t50)) {
            lo = std::min(lo, t50);
            hi = std::max(hi, t50);
        } else {
            all_cross = false;
        }
        if (std::isfinite(t90)) c1 = std::max(c1, t90);
        curves.push_back(j);
    }
    json s;
    s["curves"] = curves;
    s["all_cross_50"] = all_cross;
    s["cross50_spread"] = all_cross && lo > 0.0 ? hi / lo : kNaN;
    s["c1_estimate"] = c1 > 0.0 ? c1 : kNaN;
    return s;
}

// ---------------------------------------------------------------------------
// Dense baseline

SweepResult run_dense_baseline(const SweepSpec& spec) {
    require_valid(spec, Experiment::dense);
    std::vector<std::string> cols{"err_sparse", "support_match", "converged", "iterations"};
    for (std::size_t i = 0; i < kRidgeGrid; ++i) cols.push_back("ridge_err_" + std::to_string(i));
    cols.push_back("ridge_best_err");
    cols = concat(cols, kConeColumns);
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t seed) {
        const auto inst = gen_linear_instance(gen_config(p, seed));
        const double lam = sweep_lambda(spec, inst.M(), inst.T(), inst.config.noise_sigma);
        const auto fit = fit_group_lasso(inst, with_lambda(spec.solver, lam));
        std::vector<double> v{mixed_norm(fit.theta_hat - inst.theta_star, NormKind::two_two),
                              flag(support_of(fit.theta_hat) == inst.s_star), flag(fit.converged),
                              static_cast<double>(fit.iterations)};
        const RidgePath path(inst);
        double best = std::numeric_limits<double>::infinity();
        for (double tau : ridge_taus(p.num("ridge_min"), p.num("ridge_max"))) {
            const double e = mixed_norm(path.solve(tau) - inst.theta_star, NormKind::two_two);
            v.push_back(e);
            best = std::min(best, e);
        }
        v.push_back(best);
        append(v, cone_columns(inst, fit.theta_hat, inst.theta_star, lam, fit.converged));
        return v;
    });
    res.summary = summarize(spec, res);
    return res;
}

namespace {

// Oracle ridge level per cell: the grid point with the smallest median error.
std::pair<double, std::size_t> ridge_oracle(const SweepResult& r, std::size_t cell) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < kRidgeGrid; ++i) {
        const double m = cell_median(r, cell, "ridge_err_" + std::to_string(i));
        if (m < best) {
            best = m;
            arg = i;
        }
    }
    return {best, arg};
}

} // namespace

json detail::summarize_dense(const SweepSpec& spec, const SweepResult& r) {
    const auto taus = ridge_taus(spec.params.value("ridge_min", 1e-4), spec.params.value("ridge_max", 1e2));
    json per_cell = json::array();
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
        const auto [err, idx] = ridge_oracle(r, c);
        per_cell.push_back({{"cell", c},
                            {"dense_median", err},
                            {"dense_tau", taus[idx]},
                            {"dense_tau_index", idx},
                            {"sparse_median", cell_median(r, c, "err_sparse", "converged")}});
    }
    json curves = json::array();
    for (const auto& curve : curves_along(r, "M")) {
        if (curve.size() < 2) continue;
        json j;
        j["label"] = curve_label(r, curve.front(), "M");
        std::vector<double> Ms, dense, sparse, lx, ly;
        for (std::size_t c : curve) {
            const double M = axis_value(r, c, "M");
            const double d = ridge_oracle(r, c).first;
            Ms.push_back(M);
            dense.push_back(d);
            sparse.push_back(cell_median(r, c, "err_sparse", "converged"));
            lx.push_back(std::log(M));
            ly.push_back(std::log(d));
        }
        j["M"] = Ms;
        j["dense_median"] = dense;
        j["sparse_median"] = sparse;
        j["dense_ratio"] = dense.back() / dense.front();
        j["sparse_ratio"] = sparse.back() / sparse.front();
        j["dense_slope_vs_M"] = fit_json(stats::ols(lx, ly));
        curves.push_back(j);
    }
    return json{{"oracle_ridge", per_cell}, {"curves", curves}};
}

// ---------------------------------------------------------------------------
// Value gap

SweepResult run_value_gap(const SweepSpec& spec) {
    require_valid(spec, Experiment::value);
    const std::vector<std::string> cols = concat(
        {"err12", "value_star", "gap", "gap_se", "lv_hat", "bound", "holds", "converged"}, kConeColumns);
    auto res = run_grid(spec, cols, [&](const CellParams& p, std::uint64_t seed) {
        const auto inst = gen_linear_instance(gen_config(p, seed));
        const double lam = sweep_lambda(spec, inst.M(), inst.T(), inst.config.noise_sigma);
        const auto fit = fit_group_lasso(inst, with_lambda(spec.solver, lam));
        const double d12 = mixed_norm(fit.theta_hat - inst.theta_star, NormKind::one_two);

        const std::size_t B = p.count("B"), N = p.count("contexts");
        const CostModel costs{std::vector<double>(inst.M(), p.num("cost"))};
        const std::uint64_t ctx = derive_seed(seed, "contexts");
        const auto r_star = context_rewards(inst.theta_star, inst, costs, B, N, ctx);
        const auto r_hat = context_rewards(fit.theta_hat, inst, costs, B, N, ctx);
        std::vector<double> diff(N);
        for (std::size_t i = 0; i < N; ++i) diff[i] = r_star[i] - r_hat[i];
        const double gap = stats::mean(diff), se = stats::stderr_mean(diff);

        // Sensitivity probed at the scale of the estimation error on the same contexts.
        const double radius = p.num("radius_factor") * std::max(d12, 1e-6);
        const double lv = value_sensitivity_estimate(inst, costs, B, p.count("probes"), radius, ctx, N);
        const double bound = lv * d12;
        std::vector<double> v{d12, stats::mean(r_star), gap, se, lv, bound, flag(gap <= bound + 3.0 * se),
                              flag(fit.converged)};
        append(v, cone_columns(inst, fit.theta_hat, inst.theta_star, lam, fit.converged));
        return v;
    });
    res.summary = summarize(spec, res);
    return res;
}

json detail::summarize_value(const SweepSpec&, const SweepResult& r) {
    double holds = 0.0;
    const std::size_t h = r.column("holds");
    for (const auto& row : r.rows) holds += row.values[h];
    json curves = json::array();
    for (const auto& c : curves_along(r, "T")) {
        std::vector<double> T, med;
        bool decreasing = true;
        for (std::size_t cell : c) {
            T.push_back(axis_value(r, cell, "T"));
            med.push_back(cell_median(r, cell, "gap"));
            if (med.size() > 1 && !(med.back() <= med[med.size() - 2])) decreasing = false;
        }
        curves.push_back({{"label", curve_label(r, c.front(), "T")}, {"T", T}, {"median_gap", med},
                          {"monotone_decreasing", decreasing}});
    }
    return json{{"rows", r.rows.size()},
                {"holds_fraction", r.rows.empty() ? kNaN : holds / static_cast<double>(r.rows.size())},
                {"curves", curves}};
}

// ---------------------------------------------------------------------------

json summarize(const SweepSpec& spec, const SweepResult& r) {
    json s;
    switch (r.experiment) {
    case Experiment::rate: s = summarize_rate(spec, r); break;
    case Experiment::phase: s = summarize_phase(spec, r); break;
    case Experiment::dense: s = summarize_dense(spec, r); break;
    case Experiment::value: s = summarize_value(spec, r); break;
    case Experiment::regret: s = summarize_regret(spec, r); break;
    case Experiment::robust: s = summarize_robust(spec, r); break;
    case Experiment::group:
    case Experiment::hierarchy: s = summarize_structured(spec, r); break;
    case Experiment::pomdp: s = summarize_belief(spec, r); break;
    }
    s["experiment"] = to_string(r.experiment);
    s["cells"] = cell_stats(r);
    if (r.has_column("converged")) {
        std::size_t bad = 0;
        const std::size_t c = r.column("converged");
        for (const auto& row : r.rows) bad += row.values[c] == 0.0 ? 1 : 0;
        s["nonconverged_rows"] = bad;
    }
    const auto audit = cone_audit(r);
    s["cone_audit"] = {{"applicable_rows", audit.applicable}, {"violations", audit.violations}};
    return s;
}

} // namespace saclab
