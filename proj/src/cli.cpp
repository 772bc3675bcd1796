#include "saclab/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "saclab/belief_pomdp.hpp"
#include "saclab/certificates.hpp"
#include "saclab/errors.hpp"
#include "saclab/experiments/sweep.hpp"
#include "saclab/io.hpp"
#include "saclab/problem_gen.hpp"
#include "saclab/solvers.hpp"

namespace saclab {

namespace {

// ---------------------------------------------------------------------------
// Config readers. Each collects every problem and never throws on bad input.

struct GenRequest {
    std::string kind = "linear";
    GenConfig cfg;
    std::size_t groups = 0;
    std::size_t active_groups = 0;
    std::size_t k2 = 0;
    std::size_t segments = 1;
    bool contaminate = false;
    double c_eps = 0.0;
    double c_magnitude = 1e3;
    std::uint64_t c_seed = 0;
};

GenRequest parse_gen(const json& j, std::vector<std::string>& errs) {
    GenRequest g;
    if (!j.is_object()) {
        errs.emplace_back(": gen config must be a JSON object");
        return g;
    }
    JsonReader r(j, "", errs);
    r.reject_unknown({"command", "kind", "M", "q", "k", "T", "noise_sigma", "feature_scale", "design", "rho",
                      "signal_magnitude", "seed", "groups", "active_groups", "k2", "segments", "contamination"});
    const std::size_t before = errs.size();
    g.cfg = gen_config_from_json(j, "", errs);
    const bool cfg_ok = errs.size() == before;
    r.read("kind", g.kind);
    r.read("groups", g.groups);
    r.read("active_groups", g.active_groups);
    r.read("k2", g.k2);
    r.read("segments", g.segments);
    const auto& c = g.cfg;
    if (g.kind == "grouped") {
        r.require("groups");
        r.require("active_groups");
        if (cfg_ok && g.groups > 0) {
            if (c.M % g.groups != 0) r.error("groups", "must divide M");
            else if (g.active_groups < 1 || g.active_groups > g.groups) r.error("active_groups", "must lie in [1, groups]");
            else if (g.active_groups * (c.M / g.groups) < c.k || c.k < g.active_groups)
                errs.emplace_back("/active_groups, /k: active tools must fill between 1 and all tools of each active group");
        } else if (j.contains("groups") && g.groups == 0) {
            r.error("groups", "must be positive");
        }
    } else if (g.kind == "interaction") {
        r.require("k2");
        if (cfg_ok && g.k2 > c.k * (c.k - 1) / 2) errs.emplace_back("/k2, /k: more interactions than pairs of main effects");
    } else if (g.kind == "drift") {
        if (cfg_ok && (g.segments < 1 || g.segments > c.T)) errs.emplace_back("/segments, /T: segments must lie in [1, T]");
        if (c.design == DesignKind::duplicated_column) r.error("design", "drift sequences do not support duplicated_column");
    } else if (g.kind != "linear") {
        r.error("kind", "expected linear, grouped, interaction or drift");
    }
    if (j.contains("contamination")) {
        const auto& cj = j["contamination"];
        g.contaminate = true;
        if (!cj.is_object()) {
            r.error("contamination", "expected an object");
        } else {
            JsonReader cr(cj, "/contamination", errs);
            cr.reject_unknown({"eps", "magnitude", "seed"});
            cr.read("eps", g.c_eps);
            cr.read("magnitude", g.c_magnitude);
            cr.read("seed", g.c_seed, 0);
            if (!(g.c_eps >= 0.0 && g.c_eps < 1.0)) cr.error("eps", "must lie in [0, 1)");
            if (!(g.c_magnitude > 0.0)) cr.error("magnitude", "must be positive");
        }
    }
    return g;
}

ProblemInstance run_gen(const GenRequest& g) {
    ProblemInstance inst;
    if (g.kind == "grouped") inst = gen_grouped_instance(g.cfg, g.groups, g.active_groups);
    else if (g.kind == "interaction") inst = gen_interaction_instance(g.cfg, g.k2);
    else if (g.kind == "drift") inst = gen_drift_sequence(g.cfg, g.segments);
    else inst = gen_linear_instance(g.cfg);
    if (g.contaminate) inst = inject_contamination(inst, g.c_eps, g.c_magnitude, g.c_seed);
    return inst;
}

const std::vector<std::string> kEstimators = {"group_lasso", "sqrt", "mom", "sparse_group", "hierarchical", "ridge"};

struct FitRequest {
    std::string estimator = "group_lasso";
    SolverConfig solver;
    std::optional<double> lambda_sn;
    std::size_t B = 1;
    double tau = 1.0;
};

FitRequest parse_fit(const json& j, std::vector<std::string>& errs) {
    FitRequest f;
    if (!j.is_object()) {
        errs.emplace_back(": fit config must be a JSON object");
        return f;
    }
    JsonReader r(j, "", errs);
    r.reject_unknown({"command", "estimator", "solver", "lambda_sn", "B", "tau", "seed"});
    r.read("estimator", f.estimator);
    if (std::find(kEstimators.begin(), kEstimators.end(), f.estimator) == kEstimators.end())
        r.error("estimator", "expected one of group_lasso, sqrt, mom, sparse_group, hierarchical, ridge");
    if (j.contains("solver")) f.solver = solver_config_from_json(j["solver"], "/solver", errs);
    r.read("lambda_sn", f.lambda_sn);
    r.read("B", f.B);
    r.read("tau", f.tau);
    if (f.lambda_sn && !(*f.lambda_sn > 0.0)) r.error("lambda_sn", "must be positive");
    if (!(f.tau >= 0.0)) r.error("tau", "must be >= 0");
    if (f.B < 1 || f.B % 2 == 0) r.error("B", "must be a positive odd number");
    if (j.contains("seed") && !is_nonnegative_integer(j["seed"])) r.error("seed", "expected a non-negative integer");
    return f;
}

// Problems that depend on the instance the fit runs on.
std::vector<std::string> check_fit_instance(const FitRequest& f, const ProblemInstance& inst) {
    std::vector<std::string> errs;
    if (f.estimator == "sparse_group" && !inst.group_map)
        errs.emplace_back("/estimator: sparse_group needs an instance with a group map (kind grouped)");
    if (f.estimator == "hierarchical" && !inst.interactions)
        errs.emplace_back("/estimator: hierarchical needs an instance with interactions (kind interaction)");
    if (f.estimator == "mom" && (inst.T() % f.B != 0 || f.B > inst.T())) errs.emplace_back("/B: must divide T");
    if ((f.estimator == "group_lasso" || f.estimator == "sparse_group" || f.estimator == "hierarchical" ||
         f.estimator == "mom") &&
        !f.solver.lambda && inst.M() < 2)
        errs.emplace_back("/solver/lambda: needed when M < 2");
    return errs;
}

json run_fit(const FitRequest& f, const ProblemInstance& inst) {
    json out;
    FitResult fit;
    if (f.estimator == "group_lasso") {
        SolverConfig c = f.solver;
        c.lambda = resolve_lambda(inst, f.solver);
        out["lambda"] = *c.lambda;
        fit = fit_group_lasso(inst, c);
    } else if (f.estimator == "sqrt") {
        const double l = f.lambda_sn.value_or(lambda_sn_default(inst.M(), inst.T(), f.solver.sn_c, f.solver.sn_delta));
        out["lambda_sn"] = l;
        fit = fit_sqrt_group_lasso(inst, l, f.solver);
    } else if (f.estimator == "mom") {
        out["B"] = f.B;
        fit = fit_mom(inst, f.B, f.solver);
    } else if (f.estimator == "sparse_group") {
        fit = fit_sparse_group(inst, f.solver);
    } else if (f.estimator == "hierarchical") {
        const auto h = fit_hierarchical(inst, f.solver);
        fit = h.fit;
        out["main_support"] = to_json(support_of(h.main_effects()));
        json sel = json::array();
        for (auto& [i, j] : h.interaction_support()) sel.push_back({i, j});
        out["interaction_support"] = sel;
        out["heredity"] = h.heredity_holds();
    } else {
        out["tau"] = f.tau;
        fit = fit_ridge_dense(inst, f.tau);
    }
    out["support"] = to_json(support_of(fit.theta_hat));
    out["fit"] = to_json(fit, true);
    return out;
}

struct CertifyRequest {
    std::optional<double> lambda;
    SolverConfig solver;
    CertificateOptions opts;
};

CertifyRequest parse_certify(const json& j, std::vector<std::string>& errs) {
    CertifyRequest c;
    if (!j.is_object()) {
        errs.emplace_back(": certify config must be a JSON object");
        return c;
    }
    JsonReader r(j, "", errs);
    r.reject_unknown({"command", "lambda", "solver", "rsc", "rsc_dirs", "irrep", "hessian", "seed"});
    r.read("lambda", c.lambda);
    if (j.contains("solver")) c.solver = solver_config_from_json(j["solver"], "/solver", errs);
    r.read("rsc", c.opts.rsc);
    r.read("rsc_dirs", c.opts.rsc_dirs);
    r.read("irrep", c.opts.irrep);
    r.read("hessian", c.opts.hessian);
    r.read("seed", c.opts.seed, 0);
    if (c.lambda && !(*c.lambda > 0.0)) r.error("lambda", "must be positive");
    if (c.opts.rsc && c.opts.rsc_dirs < 1) r.error("rsc_dirs", "must be >= 1");
    return c;
}

struct PomdpRequest {
    PomdpModel model;
    bool reward_router = true;
    BlockParam router;
    double eps = 0.0;
    CorruptionMode mode = CorruptionMode::uniform_mix;
    std::size_t horizon = 0;
    std::size_t rollouts = 1000;
    std::uint64_t seed = 0;
};

PomdpRequest parse_pomdp_eval(const json& j, std::vector<std::string>& errs) {
    PomdpRequest p;
    if (!j.is_object()) {
        errs.emplace_back(": pomdp-eval config must be a JSON object");
        return p;
    }
    JsonReader r(j, "", errs);
    r.reject_unknown({"command", "model", "router", "eps", "mode", "horizon", "rollouts", "seed"});
    r.require("model");
    bool model_ok = false;
    if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.is_string()) {
            try {
                p.model = builtin_pomdp(m.get<std::string>());
                model_ok = true;
            } catch (const std::exception&) {
                r.error("model", "unknown built-in model '" + m.get<std::string>() + "'");
            }
        } else {
            const std::size_t before = errs.size();
            p.model = pomdp_from_json(m, "/model", errs);
            model_ok = errs.size() == before;
        }
    }
    if (j.contains("router")) {
        const auto& rj = j["router"];
        if (rj.is_string()) {
            if (rj.get<std::string>() != "reward") r.error("router", "expected \"reward\" or a parameter object");
        } else {
            try {
                p.router = block_param_from_json(rj);
                p.reward_router = false;
                if (model_ok && (p.router.num_blocks() != p.model.num_tools() || p.router.block_dim() != p.model.num_states))
                    r.error("router", "shape must be (tools, states) of the model");
            } catch (const std::exception& e) {
                r.error("router", e.what());
            }
        }
    }
    r.read("eps", p.eps);
    if (!(p.eps >= 0.0 && p.eps <= 2.0)) r.error("eps", "must lie in [0, 2]");
    if (r.has("mode")) {
        std::string m;
        r.read("mode", m);
        try {
            p.mode = corruption_from_string(m);
        } catch (const std::exception&) {
            r.error("mode", "expected uniform_mix or adversarial_mass");
        }
    }
    r.read("horizon", p.horizon);
    r.read("rollouts", p.rollouts);
    r.read("seed", p.seed, 0);
    if (p.rollouts < 2) r.error("rollouts", "must be >= 2");
    return p;
}

json run_pomdp_eval(const PomdpRequest& p) {
    const BlockParam router = p.reward_router ? reward_router(p.model) : p.router;
    const std::size_t H = p.horizon ? p.horizon : required_horizon(p.model);
    const auto ex = policy_rollouts(p.model, router, BeliefMode::exact(), H, p.rollouts, p.seed);
    const auto co = policy_rollouts(p.model, router, BeliefMode::corrupt(p.eps, p.mode), H, p.rollouts, p.seed);
    std::vector<double> d(p.rollouts);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = ex.returns[i] - co.returns[i];
    double m = 0.0;
    for (double x : d) m += x;
    m /= static_cast<double>(d.size());
    double ss = 0.0;
    for (double x : d) ss += (x - m) * (x - m);
    const double se = std::sqrt(ss / static_cast<double>(d.size() - 1) / static_cast<double>(d.size()));
    const auto lc = lipschitz_constants(p.model);
    const double cb = c_bel_constant(lc.L_r, lc.L_P, p.model.r_max(), p.model.gamma);
    return {{"horizon", H},
            {"value_exact", ex.mean()},
            {"value_exact_se", ex.stderr_mean()},
            {"value_corrupted", co.mean()},
            {"value_corrupted_se", co.stderr_mean()},
            {"gap", m},
            {"gap_se", se},
            {"eps_achieved", co.max_eps},
            {"L_r", lc.L_r},
            {"L_P", lc.L_P},
            {"L_P_grid_points", lc.grid_points},
            {"c_bel", cb},
            {"gap_bound", cb * co.max_eps}};
}

std::string guess_kind(const json& j) {
    if (!j.is_object()) return "gen";
    if (j.contains("command") && j["command"].is_string()) return j["command"].get<std::string>();
    if (j.contains("experiment")) return "sweep";
    if (j.contains("estimator")) return "fit";
    if (j.contains("model") || j.contains("router") || j.contains("rollouts")) return "pomdp-eval";
    if (j.contains("P") && j.contains("O")) return "pomdp-model";
    if (j.contains("rsc") || j.contains("irrep") || j.contains("hessian")) return "certify";
    return "gen";
}

// "a.b.c=value": value parsed as JSON when possible, else taken as a string.
void apply_override(json& j, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set " + kv + ": expected key=value");
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    json v;
    try {
        v = json::parse(val);
    } catch (const json::parse_error&) {
        v = val;
    }
    json* node = &j;
    std::stringstream ks(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ks, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].empty()) throw ConfigError("--set " + kv + ": empty key segment");
        if (node->is_null()) *node = json::object();
        if (!node->is_object()) throw ConfigError("--set " + kv + ": '" + parts[i] + "' is not inside an object");
        node = &(*node)[parts[i]];
    }
    *node = v;
}

std::string seed_key(const std::string& kind) { return kind == "sweep" ? "master_seed" : "seed"; }

json provenance(const std::string& command, const json& config) {
    return {{"version", kVersion}, {"command", command}, {"config", config}};
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") out << text;
    else write_text_file(path, text);
}

} // namespace

std::vector<std::string> validate_config(const json& j, std::string kind) {
    if (kind.empty()) kind = guess_kind(j);
    std::vector<std::string> errs;
    if (kind == "gen") parse_gen(j, errs);
    else if (kind == "fit") parse_fit(j, errs);
    else if (kind == "certify") parse_certify(j, errs);
    else if (kind == "sweep") sweep_spec_from_json(j, errs);
    else if (kind == "pomdp-eval") parse_pomdp_eval(j, errs);
    else if (kind == "pomdp-model") pomdp_from_json(j, "", errs);
    else errs.push_back("/command: unknown config kind '" + kind + "'");
    return errs;
}

std::vector<std::string> validate_config(const std::filesystem::path& path, std::string kind) {
    return validate_config(read_json_file(path), std::move(kind));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse tool-selection estimators, certificates and sweeps", "saclab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    std::string config, instance, fit_path, out_path, summary_path, kind;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;

    const auto common = [&](CLI::App* s, bool config_required) {
        auto* o = s->add_option("--config", config, "JSON config file");
        if (config_required) o->required();
        s->add_option("--set", sets, "Override a config entry, key=value (dotted keys for nesting)");
        s->add_option("--seed", seed, "Replace the config seed");
    };

    auto* gen = app.add_subcommand("gen", "Generate an instance (JSON header + CSV data)");
    common(gen, true);
    gen->add_option("--out", out_path, "Header path; data goes next to it as .csv")->required();

    auto* fit = app.add_subcommand("fit", "Fit an estimator to an instance");
    common(fit, true);
    fit->add_option("--instance", instance, "Instance header")->required();
    fit->add_option("--out", out_path, "Fit JSON (default: stdout)");

    auto* cert = app.add_subcommand("certify", "Certificates for a fit (fits the group lasso when --fit is absent)");
    common(cert, false);
    cert->add_option("--instance", instance, "Instance header")->required();
    cert->add_option("--fit", fit_path, "Fit JSON from the fit subcommand");
    cert->add_option("--out", out_path, "Report JSON (default: stdout)");

    auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep");
    common(sweep, true);
    sweep->add_option("--out", out_path, "Row CSV (overrides the config; default: stdout when unset)");
    sweep->add_option("--summary", summary_path, "Summary JSON (overrides the config)");

    auto* pomdp = app.add_subcommand("pomdp-eval", "Exact versus corrupted-belief values of a router");
    common(pomdp, true);
    pomdp->add_option("--out", out_path, "Result JSON (default: stdout)");

    auto* val = app.add_subcommand("validate", "Check a config file and list every problem");
    val->add_option("--config", config, "JSON config file")->required();
    val->add_option("--kind", kind, "gen, fit, certify, sweep, pomdp-eval or pomdp-model (default: detect)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitInvalid;
    }

    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    // Stage 1: read and validate everything. Nothing is written on failure.
    json cfg = json::object();
    std::vector<std::string> errs;
    try {
        if (!config.empty()) cfg = read_json_file(config);
        if (name == "validate") {
            errs = validate_config(cfg, kind);
            out << json{{"valid", errs.empty()}, {"errors", errs}}.dump(2) << "\n";
            for (auto& e : errs) err << e << "\n";
            return errs.empty() ? kExitOk : kExitInvalid;
        }
        const std::string k = name;
        for (const auto& s : sets) apply_override(cfg, s);
        if (seed) cfg[seed_key(k)] = *seed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInvalid;
    }

    const auto fail_validation = [&](const std::vector<std::string>& list) {
        for (auto& e : list) err << e << "\n";
        err << list.size() << " problem" << (list.size() == 1 ? "" : "s") << " found; nothing written\n";
        return kExitInvalid;
    };

    try {
        if (name == "gen") {
            const auto req = parse_gen(cfg, errs);
            if (!errs.empty()) return fail_validation(errs);
            try {
                write_instance(run_gen(req), out_path, provenance("gen", cfg));
            } catch (const std::exception& e) {
                err << "error: " << e.what() << "\n";
                return kExitFailure;
            }
            return kExitOk;
        }

        if (name == "fit") {
            const auto req = parse_fit(cfg, errs);
            if (!errs.empty()) return fail_validation(errs);
            ProblemInstance inst;
            try {
                inst = read_instance(instance);
            } catch (const std::exception& e) {
                return fail_validation({"--instance: " + std::string(e.what())});
            }
            errs = check_fit_instance(req, inst);
            if (!errs.empty()) return fail_validation(errs);
            try {
                json doc = provenance("fit", cfg);
                doc["instance"] = instance;
                doc["estimator"] = req.estimator;
                doc.update(run_fit(req, inst));
                emit(out_path, doc.dump(2) + "\n", out);
            } catch (const std::exception& e) {
                err << "error: " << e.what() << "\n";
                return kExitFailure;
            }
            return kExitOk;
        }

        if (name == "certify") {
            const auto req = parse_certify(cfg, errs);
            if (!errs.empty()) return fail_validation(errs);
            ProblemInstance inst;
            std::optional<FitResult> given;
            std::optional<double> fit_lambda;
            try {
                inst = read_instance(instance);
                if (!fit_path.empty()) {
                    const json fj = read_json_file(fit_path);
                    given = fit_result_from_json(fj.contains("fit") ? fj["fit"] : fj);
                    if (fj.contains("lambda") && fj["lambda"].is_number()) fit_lambda = fj["lambda"].get<double>();
                    if (!given->theta_hat.same_shape(inst.theta_star))
                        return fail_validation({"--fit: parameter shape does not match the instance"});
                }
            } catch (const std::exception& e) {
                return fail_validation({std::string(e.what())});
            }
            try {
                const double lambda = req.lambda ? *req.lambda : fit_lambda ? *fit_lambda : resolve_lambda(inst, req.solver);
                FitResult f;
                if (given) {
                    f = *given;
                } else {
                    SolverConfig c = req.solver;
                    c.lambda = lambda;
                    f = fit_group_lasso(inst, c);
                }
                const auto rep = pdw_verify(inst, f, lambda, req.opts);
                json doc = provenance("certify", cfg);
                doc["instance"] = instance;
                doc["lambda"] = lambda;
                doc["kkt_residual"] = kkt_residual(inst, f.theta_hat, lambda);
                doc["report"] = to_json(rep);
                emit(out_path, doc.dump(2) + "\n", out);
            } catch (const std::exception& e) {
                err << "error: " << e.what() << "\n";
                return kExitFailure;
            }
            return kExitOk;
        }

        if (name == "sweep") {
            auto spec = sweep_spec_from_json(cfg, errs);
            if (!errs.empty()) return fail_validation(errs);
            if (!out_path.empty()) spec.output_path = out_path;
            if (!summary_path.empty()) spec.summary_path = summary_path;
            try {
                const auto res = run_sweep(spec);
                const bool to_stdout = spec.output_path.empty() || spec.output_path == "-";
                if (to_stdout) spec.output_path.clear();
                write_sweep(spec, res);
                if (to_stdout) out << sweep_csv(spec, res);
            } catch (const std::exception& e) {
                err << "error: " << e.what() << "\n";
                return kExitFailure;
            }
            return kExitOk;
        }

        if (name == "pomdp-eval") {
            const auto req = parse_pomdp_eval(cfg, errs);
            if (!errs.empty()) return fail_validation(errs);
            try {
                json doc = provenance("pomdp-eval", cfg);
                doc.update(run_pomdp_eval(req));
                emit(out_path, doc.dump(2) + "\n", out);
            } catch (const std::exception& e) {
                err << "error: " << e.what() << "\n";
                return kExitFailure;
            }
            return kExitOk;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    err << "error: unhandled subcommand " << name << "\n";
    return kExitInvalid;
}

} // namespace saclab
