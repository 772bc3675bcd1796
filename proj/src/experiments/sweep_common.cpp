#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "saclab/certificates.hpp"
#include "saclab/errors.hpp"
#include "saclab/experiments/runners.hpp"
#include "saclab/io.hpp"
#include "saclab/parallel.hpp"
#include "saclab/rng.hpp"
#include "sweep_internal.hpp"

namespace saclab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTiny = std::numeric_limits<double>::min();
constexpr double kBig = 1e15;

const std::vector<std::pair<Experiment, const char*>> kNames = {
    {Experiment::rate, "rate"},     {Experiment::phase, "phase"},   {Experiment::dense, "dense"},
    {Experiment::value, "value"},   {Experiment::regret, "regret"}, {Experiment::robust, "robust"},
    {Experiment::group, "group"},   {Experiment::hierarchy, "hierarchy"}, {Experiment::pomdp, "pomdp"},
};

} // namespace

std::string to_string(Experiment e) {
    for (auto& [k, n] : kNames)
        if (k == e) return n;
    return "rate";
}

Experiment experiment_from_string(const std::string& s) {
    for (auto& [k, n] : kNames)
        if (s == n) return k;
    throw ConfigError("experiment: unknown kind '" + s + "'");
}

namespace detail {

namespace {

std::vector<NumParam> linear_nums(double M, double q, double k, double T) {
    return {
        {"M", M, true, 2, kBig},
        {"q", q, true, 1, 4096},
        {"k", k, true, 1, kBig},
        {"T", T, true, 0, kBig},
        {"sigma", 1.0, false, 0, kBig},
        {"signal", 1.0, false, kTiny, kBig},
        {"feature_scale", 1.0, false, kTiny, 1.0},
        {"rho", 0.0, false, 0.0, 1.0 - 1e-12},
    };
}

const StrParam kDesign{"design", "gaussian_normalized",
                       {"gaussian_normalized", "orthogonal", "equicorrelated", "duplicated_column"}};

std::vector<std::string> check_linear(const CellParams& p) {
    if (p.count("T") == 0) return {"T: must be positive"};
    return validate(gen_config(p, 0));
}

std::vector<std::string> check_tau(const CellParams& p) {
    const double tau = p.num("tau");
    if (tau < 0.0 && p.count("T") == 0) return {"T, tau: set either T or a non-negative tau"};
    if (tau >= 0.0 && p.count("T") != 0) return {"T, tau: set only one of T and tau"};
    return {};
}

Schema make_schema(Experiment e) {
    Schema s;
    switch (e) {
    case Experiment::rate:
        s.nums = linear_nums(512, 1, 5, 1000);
        s.nums.push_back({"certify", 0, true, 0, 1});
        s.strs = {kDesign};
        s.check_cell = check_linear;
        break;
    case Experiment::phase:
        s.nums = linear_nums(256, 1, 5, 0);
        s.nums.push_back({"tau", -1, false, -1, kBig});
        s.strs = {kDesign};
        s.check_cell = [](const CellParams& p) {
            auto errs = check_tau(p);
            if (!errs.empty()) return errs;
            GenConfig c = gen_config(p, 0);
            c.T = derived_T(p, phase_scale(p));
            return validate(c);
        };
        break;
    case Experiment::dense:
        s.nums = linear_nums(256, 1, 5, 400);
        s.nums.push_back({"ridge_min", 1e-4, false, kTiny, kBig});
        s.nums.push_back({"ridge_max", 1e2, false, kTiny, kBig});
        s.strs = {kDesign};
        s.check_cell = [](const CellParams& p) {
            auto errs = check_linear(p);
            if (p.num("ridge_min") > p.num("ridge_max")) errs.emplace_back("ridge_min, ridge_max: empty tuning range");
            return errs;
        };
        break;
    case Experiment::value:
        s.nums = linear_nums(128, 2, 5, 400);
        s.nums.push_back({"B", 2, true, 1, kBig});
        s.nums.push_back({"contexts", 2000, true, 2, 1e8});
        s.nums.push_back({"probes", 40, true, 1, 1e6});
        s.nums.push_back({"radius_factor", 2.0, false, kTiny, kBig});
        s.nums.push_back({"cost", 0.0, false, 0.0, kBig});
        s.strs = {kDesign};
        s.check_cell = check_linear;
        break;
    case Experiment::regret:
        s.nums = linear_nums(32, 1, 5, 4096);
        s.nums.push_back({"segments", 1, true, 1, kBig});
        s.nums.push_back({"drift_rate", 0.0, false, 0.0, 1.0});
        s.nums.push_back({"eta_c", 1.0, false, kTiny, kBig});
        s.nums.push_back({"lambda_c", 1.0, false, 0.0, kBig});
        s.strs = {{"design", "gaussian_normalized", {"gaussian_normalized", "orthogonal", "equicorrelated"}}};
        s.check_cell = [](const CellParams& p) {
            auto errs = check_linear(p);
            if (p.count("segments") > p.count("T")) errs.emplace_back("segments, T: more segments than samples");
            return errs;
        };
        break;
    case Experiment::robust:
        s.nums = linear_nums(256, 1, 5, 2100);
        s.nums.push_back({"eps", 0.1, false, 0.0, 0.5 - 1e-12});
        s.nums.push_back({"magnitude", 1e3, false, kTiny, kBig});
        s.nums.push_back({"B", 21, true, 1, kBig});
        s.strs = {kDesign};
        s.check_cell = [](const CellParams& p) {
            auto errs = check_linear(p);
            const std::size_t B = p.count("B"), T = p.count("T");
            if (B % 2 == 0) errs.emplace_back("B: number of blocks must be odd");
            if (T > 0 && (B > T || T % B != 0)) errs.emplace_back("B, T: B must divide T");
            return errs;
        };
        break;
    case Experiment::group:
        s.nums = linear_nums(256, 1, 5, 0);
        s.nums.push_back({"tau", -1, false, -1, kBig});
        s.nums.push_back({"G", 32, true, 2, kBig});
        s.nums.push_back({"kg", 2, true, 1, kBig});
        s.strs = {kDesign};
        s.check_cell = [](const CellParams& p) {
            auto errs = check_tau(p);
            if (!errs.empty()) return errs;
            GenConfig c = gen_config(p, 0);
            c.T = derived_T(p, group_scale(p));
            errs = validate(c);
            const std::size_t G = p.count("G"), kg = p.count("kg");
            if (c.M % G != 0) errs.emplace_back("G, M: number of groups must divide M");
            else if (kg > G) errs.emplace_back("kg, G: more active groups than groups");
            else if (kg * (c.M / G) < c.k || c.k < kg) errs.emplace_back("kg, k: active tools must fill 1..size of each active group");
            return errs;
        };
        break;
    case Experiment::hierarchy:
        s.nums = linear_nums(64, 1, 4, 0);
        s.nums.push_back({"tau", -1, false, -1, kBig});
        s.nums.push_back({"k2", 2, true, 0, kBig});
        s.strs = {kDesign};
        s.check_cell = [](const CellParams& p) {
            auto errs = check_tau(p);
            if (!errs.empty()) return errs;
            GenConfig c = gen_config(p, 0);
            c.T = derived_T(p, hierarchy_scale(p));
            errs = validate(c);
            if (p.count("k2") > c.k * (c.k - 1) / 2) errs.emplace_back("k2, k: more interactions than pairs of main effects");
            return errs;
        };
        break;
    case Experiment::pomdp:
        s.nums = {
            {"eps_b", 0.0, false, 0.0, 2.0},
            {"rollouts", 200, true, 2, 1e8},
            {"horizon", 0, true, 0, 1e7},
            {"router_T", 50000, true, 2, kBig},
            {"tools", 64, true, 2, kBig},
            {"p2_k", 3, true, 1, kBig},
            {"set_size", 8, true, 1, kBig},
            {"p2_T", 800, true, 1, kBig},
            {"p2_sigma", 0.1, false, kTiny, kBig},
            {"p2_signal", 5.0, false, kTiny, kBig},
        };
        s.strs = {{"arms", "both", {"both", "p1", "p2"}}, {"mode", "uniform_mix", {"uniform_mix", "adversarial_mass"}}};
        s.extra = {"model"};
        s.check_cell = [](const CellParams& p) {
            std::vector<std::string> errs;
            if (p.count("p2_k") > p.count("tools")) errs.emplace_back("p2_k, tools: more relevant tools than tools");
            if (p.count("set_size") > p.count("tools")) errs.emplace_back("set_size, tools: set larger than the catalog");
            return errs;
        };
        s.check_params = [](const SweepSpec& spec) {
            std::vector<std::string> errs;
            if (!spec.params.contains("model")) return errs;
            const auto& m = spec.params["model"];
            if (m.is_string()) {
                const auto names = builtin_pomdp_names();
                if (std::find(names.begin(), names.end(), m.get<std::string>()) == names.end())
                    errs.push_back("/params/model: unknown built-in model '" + m.get<std::string>() + "'");
            } else if (m.is_object()) {
                pomdp_from_json(m, "/params/model", errs);
            } else {
                errs.push_back("/params/model: expected a built-in name or a model object");
            }
            return errs;
        };
        break;
    }
    return s;
}

} // namespace

const Schema& schema(Experiment e) {
    static const std::map<Experiment, Schema> all = [] {
        std::map<Experiment, Schema> m;
        for (auto& [k, n] : kNames) m.emplace(k, make_schema(k));
        return m;
    }();
    return all.at(e);
}

const NumParam* find_num(const Schema& s, std::string_view name) {
    for (auto& p : s.nums)
        if (name == p.name) return &p;
    return nullptr;
}

const StrParam* find_str(const Schema& s, std::string_view name) {
    for (auto& p : s.strs)
        if (name == p.name) return &p;
    return nullptr;
}

std::vector<std::vector<double>> grid_cells(const SweepSpec& spec, std::vector<std::string>& keys) {
    keys.clear();
    std::vector<std::vector<double>> axes;
    for (auto& [k, v] : spec.grid) {
        keys.push_back(k);
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        axes.push_back(std::move(sorted));
    }
    std::vector<std::vector<double>> cells{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<double>> next;
        for (const auto& c : cells)
            for (double v : axis) {
                auto e = c;
                e.push_back(v);
                next.push_back(std::move(e));
            }
        cells = std::move(next);
    }
    return cells;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Spec validation and JSON

std::vector<std::string> validate(const SweepSpec& spec) {
    using namespace detail;
    std::vector<std::string> errs;
    const Schema& sc = schema(spec.experiment);

    if (spec.grid.empty()) errs.emplace_back("/grid: must name at least one parameter");
    for (auto& [key, vals] : spec.grid) {
        const std::string path = "/grid/" + key;
        const NumParam* np = find_num(sc, key);
        if (!np) {
            errs.push_back(path + ": not a numeric parameter of the " + to_string(spec.experiment) + " experiment");
            continue;
        }
        if (vals.empty()) errs.push_back(path + ": needs at least one value");
        std::set<double> seen;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double v = vals[i];
            const std::string ip = path + "/" + std::to_string(i);
            if (!std::isfinite(v)) errs.push_back(ip + ": must be finite");
            else if (v < np->lo || v > np->hi) errs.push_back(ip + ": out of range [" + format_double(np->lo) + ", " + format_double(np->hi) + "]");
            else if (np->integer && v != std::floor(v)) errs.push_back(ip + ": must be an integer");
            if (!seen.insert(v).second) errs.push_back(ip + ": duplicate value");
        }
    }
    if (spec.trials_per_cell < 1) errs.emplace_back("/trials_per_cell: must be >= 1");
    for (auto& e : validate(spec.solver)) errs.push_back(prefix_fields("/solver", e));

    if (!spec.params.is_object()) {
        errs.emplace_back("/params: must be an object");
    } else {
        for (auto& [key, val] : spec.params.items()) {
            const std::string path = "/params/" + key;
            if (const NumParam* np = find_num(sc, key)) {
                if (spec.grid.count(key)) errs.push_back(path + ": also set in the grid");
                if (!val.is_number()) {
                    errs.push_back(path + ": expected a number");
                    continue;
                }
                const double v = val.get<double>();
                if (!std::isfinite(v) || v < np->lo || v > np->hi)
                    errs.push_back(path + ": out of range [" + format_double(np->lo) + ", " + format_double(np->hi) + "]");
                else if (np->integer && v != std::floor(v)) errs.push_back(path + ": must be an integer");
            } else if (const StrParam* sp = find_str(sc, key)) {
                if (!val.is_string()) {
                    errs.push_back(path + ": expected a string");
                    continue;
                }
                if (!sp->choices.empty() &&
                    std::none_of(sp->choices.begin(), sp->choices.end(),
                                 [&](const char* c) { return val.get<std::string>() == c; }))
                    errs.push_back(path + ": unknown value '" + val.get<std::string>() + "'");
            } else if (std::none_of(sc.extra.begin(), sc.extra.end(), [&](const char* c) { return key == c; })) {
                errs.push_back(path + ": unknown parameter for the " + to_string(spec.experiment) + " experiment");
            }
        }
        if (sc.check_params)
            for (auto& e : sc.check_params(spec)) errs.push_back(e);
    }
    if (!errs.empty()) return errs;

    // Cross-field checks per resolved cell, reported once per distinct message.
    std::vector<std::string> keys;
    const auto cells = grid_cells(spec, keys);
    std::set<std::string> seen;
    const auto source = [&](const std::string& f) { return spec.grid.count(f) ? "/grid" : "/params"; };
    for (std::size_t c = 0; c < cells.size(); ++c) {
        CellParams p(spec, keys, cells[c]);
        if (!sc.check_cell) break;
        for (auto& e : sc.check_cell(p)) {
            if (!seen.insert(e).second) continue;
            std::string where;
            for (std::size_t i = 0; i < keys.size(); ++i)
                where += (i ? " " : "") + keys[i] + "=" + format_double(cells[c][i]);
            errs.push_back(prefix_fields(source, e) + " (first at cell " + std::to_string(c) + ": " + where + ")");
        }
    }
    return errs;
}

SweepSpec sweep_spec_from_json(const json& j, std::vector<std::string>& errs) {
    SweepSpec s;
    if (!j.is_object()) {
        errs.emplace_back(": sweep config must be a JSON object");
        return s;
    }
    JsonReader r(j, "", errs);
    r.reject_unknown({"experiment", "grid", "trials_per_cell", "master_seed", "solver", "params", "output", "summary"});
    r.require("experiment");
    r.require("grid");
    std::string exp;
    r.read("experiment", exp);
    bool kind_ok = true;
    if (j.contains("experiment") && j["experiment"].is_string()) {
        try {
            s.experiment = experiment_from_string(exp);
        } catch (const ConfigError&) {
            errs.push_back("/experiment: unknown kind '" + exp + "'");
            kind_ok = false;
        }
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (!g.is_object()) {
            errs.emplace_back("/grid: expected an object of value lists");
        } else {
            for (auto& [key, vals] : g.items()) {
                const std::string path = "/grid/" + key;
                if (!vals.is_array()) {
                    errs.push_back(path + ": expected a list of numbers");
                    continue;
                }
                std::vector<double> v;
                for (std::size_t i = 0; i < vals.size(); ++i) {
                    if (!vals[i].is_number()) errs.push_back(path + "/" + std::to_string(i) + ": expected a number");
                    else v.push_back(vals[i].get<double>());
                }
                s.grid[key] = std::move(v);
            }
        }
    }
    r.read("trials_per_cell", s.trials_per_cell);
    r.read("master_seed", s.master_seed, 0);
    if (j.contains("solver")) s.solver = solver_config_from_json(j["solver"], "/solver", errs);
    if (j.contains("params")) s.params = j["params"];
    r.read("output", s.output_path);
    r.read("summary", s.summary_path);
    if (errs.empty() && kind_ok)
        for (auto& e : validate(s)) errs.push_back(e);
    return s;
}

json to_json(const SweepSpec& spec) {
    json j;
    j["experiment"] = to_string(spec.experiment);
    json g = json::object();
    for (auto& [k, v] : spec.grid) g[k] = v;
    j["grid"] = g;
    j["trials_per_cell"] = spec.trials_per_cell;
    j["master_seed"] = spec.master_seed;
    j["solver"] = to_json(spec.solver);
    j["params"] = spec.params;
    if (!spec.output_path.empty()) j["output"] = spec.output_path;
    if (!spec.summary_path.empty()) j["summary"] = spec.summary_path;
    return j;
}

// ---------------------------------------------------------------------------
// Cells and results

CellParams::CellParams(const SweepSpec& spec, const std::vector<std::string>& keys, const std::vector<double>& values,
                       std::size_t trial)
    : spec_(&spec), keys_(&keys), values_(&values), trial_(trial) {}

double CellParams::num(std::string_view key) const {
    for (std::size_t i = 0; i < keys_->size(); ++i)
        if ((*keys_)[i] == key) return (*values_)[i];
    const std::string k(key);
    if (spec_->params.is_object() && spec_->params.contains(k) && spec_->params[k].is_number())
        return spec_->params[k].get<double>();
    if (const auto* p = detail::find_num(detail::schema(spec_->experiment), key)) return p->def;
    throw InvalidInput("sweep: unknown numeric parameter '" + k + "'");
}

std::size_t CellParams::count(std::string_view key) const {
    const double v = num(key);
    return v <= 0.0 ? 0 : static_cast<std::size_t>(std::llround(v));
}

std::string CellParams::str(std::string_view key) const {
    const std::string k(key);
    if (spec_->params.is_object() && spec_->params.contains(k) && spec_->params[k].is_string())
        return spec_->params[k].get<std::string>();
    if (const auto* p = detail::find_str(detail::schema(spec_->experiment), key)) return p->def;
    throw InvalidInput("sweep: unknown text parameter '" + k + "'");
}

std::size_t SweepResult::column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw InvalidInput("sweep result: no column '" + std::string(name) + "'");
}

bool SweepResult::has_column(std::string_view name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

double SweepResult::grid_value(std::size_t cell, std::string_view key) const {
    for (std::size_t i = 0; i < grid_keys.size(); ++i)
        if (grid_keys[i] == key) return cells.at(cell)[i];
    throw InvalidInput("sweep result: no grid key '" + std::string(key) + "'");
}

std::vector<double> SweepResult::cell_values(std::size_t cell, std::string_view col) const {
    const std::size_t c = column(col);
    std::vector<double> out;
    for (const auto& r : rows)
        if (r.cell == cell) out.push_back(r.values[c]);
    return out;
}

SweepResult run_sweep(const SweepSpec& spec) {
    switch (spec.experiment) {
    case Experiment::rate: return run_rate_sweep(spec);
    case Experiment::phase: return run_phase_transition(spec);
    case Experiment::dense: return run_dense_baseline(spec);
    case Experiment::value: return run_value_gap(spec);
    case Experiment::regret: return run_online_regret(spec);
    case Experiment::robust: return run_robustness(spec);
    case Experiment::group:
    case Experiment::hierarchy: return run_structured(spec);
    case Experiment::pomdp: return run_belief_experiments(spec);
    }
    throw ConfigError("experiment: unknown kind");
}

std::string sweep_csv(const SweepSpec& spec, const SweepResult& result) {
    std::ostringstream os;
    os << "# saclab " << kVersion << "\n";
    os << "# experiment: " << to_string(result.experiment) << "\n";
    os << "# spec: " << to_json(spec).dump() << "\n";
    os << "# cells: sorted product over (";
    for (std::size_t i = 0; i < result.grid_keys.size(); ++i) os << (i ? ", " : "") << result.grid_keys[i];
    os << "), first key slowest; seed = derive_seed(master_seed, cell, trial)\n";
    os << "cell,trial,seed";
    for (auto& k : result.grid_keys) os << "," << k;
    for (auto& c : result.columns) os << "," << c;
    os << "\n";
    for (const auto& r : result.rows) {
        os << r.cell << "," << r.trial << "," << r.seed;
        for (double v : result.cells[r.cell]) os << "," << format_double(v);
        for (double v : r.values) os << "," << format_double(v);
        os << "\n";
    }
    return os.str();
}

void write_sweep(const SweepSpec& spec, const SweepResult& result) {
    // Render both before touching the file system.
    const std::string csv = spec.output_path.empty() ? std::string() : sweep_csv(spec, result);
    std::string summary;
    if (!spec.summary_path.empty()) {
        json s = result.summary;
        s["version"] = kVersion;
        s["spec"] = to_json(spec);
        summary = s.dump(2) + "\n";
    }
    if (!spec.output_path.empty()) write_text_file(spec.output_path, csv);
    if (!spec.summary_path.empty()) write_text_file(spec.summary_path, summary);
}

ConeAudit cone_audit(const SweepResult& result) {
    ConeAudit a;
    if (!result.has_column("cone_applies") || !result.has_column("cone_ratio")) return a;
    const std::size_t l = result.column("cone_applies"), c = result.column("cone_ratio");
    for (const auto& r : result.rows) {
        if (r.values[l] != 1.0) continue;
        ++a.applicable;
        if (!(r.values[c] <= 3.0 + 1e-6)) ++a.violations;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Driver and helpers

namespace detail {

namespace {
double log_d(std::size_t n) { return std::log(static_cast<double>(n)); }
} // namespace

double phase_scale(const CellParams& p) { return static_cast<double>(p.count("k")) * log_d(p.count("M")); }
double group_scale(const CellParams& p) {
    return static_cast<double>(p.count("kg")) * log_d(std::max<std::size_t>(p.count("G"), 2)) + phase_scale(p);
}
double hierarchy_scale(const CellParams& p) {
    return static_cast<double>(p.count("k") + p.count("k2")) * log_d(p.count("M"));
}

std::size_t derived_T(const CellParams& p, double scale) {
    const double tau = p.num("tau");
    if (tau < 0.0) return p.count("T");
    return std::max(p.count("k"), static_cast<std::size_t>(std::llround(tau * scale)));
}

void require_valid(const SweepSpec& spec, std::initializer_list<Experiment> expected) {
    if (std::find(expected.begin(), expected.end(), spec.experiment) == expected.end())
        throw ConfigError("/experiment: this runner does not handle '" + to_string(spec.experiment) + "'");
    auto errs = validate(spec);
    if (errs.empty()) return;
    std::string msg;
    for (auto& e : errs) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
}

void require_valid(const SweepSpec& spec, Experiment expected) { require_valid(spec, {expected}); }

SweepResult run_grid(const SweepSpec& spec, std::vector<std::string> columns, const TrialFn& trial) {
    SweepResult res;
    res.experiment = spec.experiment;
    res.cells = grid_cells(spec, res.grid_keys);
    res.columns = std::move(columns);
    const std::size_t n_trials = spec.trials_per_cell;
    const std::size_t n = res.cells.size() * n_trials;
    res.rows.resize(n);
    parallel_for(n, [&](std::size_t i) {
        SweepRow& row = res.rows[i];
        row.cell = i / n_trials;
        row.trial = i % n_trials;
        row.seed = derive_seed(spec.master_seed, row.cell, row.trial);
        CellParams p(spec, res.grid_keys, res.cells[row.cell], row.trial);
        row.values = trial(p, row.seed);
        if (row.values.size() != res.columns.size())
            throw std::logic_error("sweep: trial returned " + std::to_string(row.values.size()) + " values for " +
                                   std::to_string(res.columns.size()) + " columns");
    });
    return res;
}

GenConfig gen_config(const CellParams& p, std::uint64_t seed) {
    GenConfig c;
    c.M = p.count("M");
    c.q = p.count("q");
    c.k = p.count("k");
    c.T = p.count("T");
    c.noise_sigma = p.num("sigma");
    c.signal_magnitude = p.num("signal");
    c.feature_scale = p.num("feature_scale");
    c.rho = p.num("rho");
    c.design = design_from_string(p.str("design"));
    c.seed = seed;
    return c;
}

double sweep_lambda(const SweepSpec& spec, std::size_t M, std::size_t T, double sigma) {
    if (spec.solver.lambda) return *spec.solver.lambda;
    return lambda_rate(M, T, spec.solver.c0, spec.solver.sigma_g.value_or(sigma));
}

SolverConfig with_lambda(const SolverConfig& base, double lambda) {
    SolverConfig c = base;
    c.lambda = lambda;
    return c;
}

std::array<double, 5> cone_columns(const ProblemInstance& inst, const BlockParam& theta_hat, const BlockParam& theta_star,
                                   double lambda, bool converged) {
    const double gs = grad_supnorm_at(inst, theta_star);
    const double cr = cone_ratio(theta_hat - theta_star, support_of(theta_star, 0.0));
    const bool applicable = converged && lambda >= 2.0 * gs;
    const double ok = applicable ? flag(cr <= 3.0 + 1e-6) : std::numeric_limits<double>::quiet_NaN();
    return {lambda, gs, cr, flag(applicable), ok};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<double> finite(std::span<const double> v) {
    std::vector<double> out;
    for (double x : v)
        if (std::isfinite(x)) out.push_back(x);
    return out;
}

std::vector<double> cell_column(const SweepResult& r, std::size_t cell, std::string_view col, std::string_view filter) {
    const std::size_t c = r.column(col);
    const std::size_t f = filter.empty() ? 0 : r.column(filter);
    std::vector<double> out;
    for (const auto& row : r.rows)
        if (row.cell == cell && (filter.empty() || row.values[f] == 1.0)) out.push_back(row.values[c]);
    return out;
}

double cell_median(const SweepResult& r, std::size_t cell, std::string_view col, std::string_view filter) {
    return stats::median(finite(cell_column(r, cell, col, filter)));
}

double cell_rate(const SweepResult& r, std::size_t cell, std::string_view col) {
    const auto v = cell_column(r, cell, col);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x == 1.0 ? 1.0 : 0.0;
    return s / static_cast<double>(v.size());
}

json cell_stats(const SweepResult& r) {
    json out = json::array();
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
        json cell;
        cell["cell"] = c;
        json g = json::object();
        for (std::size_t i = 0; i < r.grid_keys.size(); ++i) g[r.grid_keys[i]] = r.cells[c][i];
        cell["grid"] = g;
        json cols = json::object();
        std::size_t n = 0;
        for (const auto& col : r.columns) {
            const auto all = cell_column(r, c, col);
            n = all.size();
            const auto v = finite(all);
            json s;
            s["n_finite"] = v.size();
            if (!v.empty()) {
                s["mean"] = stats::mean(v);
                s["median"] = stats::median(v);
                s["q10"] = stats::quantile(v, 0.1);
                s["q25"] = stats::quantile(v, 0.25);
                s["q75"] = stats::quantile(v, 0.75);
                s["q90"] = stats::quantile(v, 0.9);
            }
            cols[col] = s;
        }
        cell["rows"] = n;
        cell["columns"] = cols;
        out.push_back(cell);
    }
    return out;
}

json fit_json(const stats::LinearFit& f) {
    return json{{"slope", f.slope}, {"slope_se", f.slope_se}, {"intercept", f.intercept},
                {"intercept_se", f.intercept_se}, {"r2", f.r2}, {"n", f.n}};
}

std::vector<std::vector<std::size_t>> curves_along(const SweepResult& r, std::string_view key) {
    std::size_t ki = r.grid_keys.size();
    for (std::size_t i = 0; i < r.grid_keys.size(); ++i)
        if (r.grid_keys[i] == key) ki = i;
    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
        std::vector<double> rest;
        for (std::size_t i = 0; i < r.grid_keys.size(); ++i)
            if (i != ki) rest.push_back(r.cells[c][i]);
        groups[rest].push_back(c);
    }
    std::vector<std::vector<std::size_t>> out;
    for (auto& [rest, cells] : groups) {
        if (ki < r.grid_keys.size())
            std::stable_sort(cells.begin(), cells.end(),
                             [&](std::size_t a, std::size_t b) { return r.cells[a][ki] < r.cells[b][ki]; });
        out.push_back(cells);
    }
    return out;
}

std::string curve_label(const SweepResult& r, std::size_t cell, std::string_view key) {
    std::string s;
    for (std::size_t i = 0; i < r.grid_keys.size(); ++i) {
        if (r.grid_keys[i] == key) continue;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", r.cells[cell][i]);
        s += (s.empty() ? "" : " ") + r.grid_keys[i] + "=" + buf;
    }
    return s.empty() ? "all" : s;
}

double axis_value(const SweepResult& r, std::size_t cell, std::string_view key) {
    for (std::size_t i = 0; i < r.grid_keys.size(); ++i)
        if (r.grid_keys[i] == key) return r.cells[cell][i];
    const auto v = cell_column(r, cell, key);
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : v.front();
}

json loglog_fit(const SweepResult& r, const std::vector<std::size_t>& curve, std::string_view axis, std::string_view col,
                std::string_view filter, bool log_log_axis) {
    json out;
    out["label"] = curve.empty() ? std::string() : curve_label(r, curve.front(), axis);
    std::vector<double> xs, ys, axis_vals, meds;
    for (std::size_t c : curve) {
        const double a = axis_value(r, c, axis);
        const double m = cell_median(r, c, col, filter);
        axis_vals.push_back(a);
        meds.push_back(m);
        if (!(m > 0.0) || !(a > 0.0) || (log_log_axis && !(a > 1.0))) continue;
        xs.push_back(log_log_axis ? std::log(std::log(a)) : std::log(a));
        ys.push_back(std::log(m));
    }
    out[std::string(axis)] = axis_vals;
    out["median_" + std::string(col)] = meds;
    std::set<double> distinct(xs.begin(), xs.end());
    out["fit"] = distinct.size() >= 2 ? fit_json(stats::ols(xs, ys)) : json(nullptr);
    return out;
}

} // namespace detail
} // namespace saclab
