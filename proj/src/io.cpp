#include "saclab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "saclab/errors.hpp"

namespace saclab {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

JsonReader::JsonReader(const json& obj, std::string path, std::vector<std::string>& errors)
    : obj_(obj), path_(std::move(path)), errs_(errors) {
    if (!obj_.is_object()) errs_.push_back((path_.empty() ? "/" : path_) + ": expected an object");
}

bool JsonReader::has(const char* key) const { return obj_.is_object() && obj_.contains(key); }

void JsonReader::error(const std::string& key, const std::string& msg) { errs_.push_back(pointer(key) + ": " + msg); }

void JsonReader::require(const char* key) {
    if (obj_.is_object() && !has(key)) error(key, "required");
}

void JsonReader::read(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_number()) return error(key, "expected a number");
    out = v.get<double>();
}

void JsonReader::read(const char* key, std::optional<double>& out) {
    if (!has(key) || obj_.at(key).is_null()) return;
    double v = 0.0;
    read(key, v);
    if (obj_.at(key).is_number()) out = v;
}

void JsonReader::read(const char* key, std::size_t& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    // Literals built in code are signed even when positive.
    if (is_nonnegative_integer(v)) {
        out = v.is_number_unsigned() ? v.get<std::size_t>() : static_cast<std::size_t>(v.get<std::int64_t>());
    } else if (v.is_number_integer()) {
        error(key, "must be nonnegative");
    } else if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>() && v.get<double>() >= 0.0) {
        out = static_cast<std::size_t>(v.get<double>());
    } else {
        error(key, "expected a nonnegative integer");
    }
}

void JsonReader::read(const char* key, std::uint64_t& out, int) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!is_nonnegative_integer(v)) return error(key, "expected a nonnegative integer");
    out = v.is_number_unsigned() ? v.get<std::uint64_t>() : static_cast<std::uint64_t>(v.get<std::int64_t>());
}

void JsonReader::read(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) return error(key, "expected true or false");
    out = v.get<bool>();
}

void JsonReader::read(const char* key, std::string& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if (!v.is_string()) return error(key, "expected a string");
    out = v.get<std::string>();
}

void JsonReader::reject_unknown(std::initializer_list<const char*> known) {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items()) {
        bool ok = false;
        for (const char* n : known) ok = ok || k == n;
        if (!ok) error(k, "unknown key");
    }
}

std::string prefix_fields(const std::function<std::string(const std::string&)>& base_of, const std::string& err) {
    const auto colon = err.find(':');
    if (colon == std::string::npos) return base_of("") + ": " + err;
    std::string fields = err.substr(0, colon), out;
    std::stringstream ss(fields);
    std::string f;
    while (std::getline(ss, f, ',')) {
        const auto b = f.find_first_not_of(' ');
        f = f.substr(b == std::string::npos ? 0 : b);
        if (!out.empty()) out += ", ";
        out += base_of(f) + "/" + f;
    }
    return out + err.substr(colon);
}

std::string prefix_fields(const std::string& base, const std::string& err) {
    return prefix_fields([&](const std::string&) { return base; }, err);
}

json to_json(const BlockParam& p) {
    return {{"M", p.num_blocks()}, {"q", p.block_dim()}, {"values", std::vector<double>(p.values().begin(), p.values().end())}};
}

BlockParam block_param_from_json(const json& j) {
    try {
        return BlockParam(j.at("M").get<std::size_t>(), j.at("q").get<std::size_t>(), j.at("values").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("BlockParam JSON: ") + e.what());
    }
}

json to_json(const SupportSet& s) { return s.indices(); }

json to_json(const FitResult& f, bool with_trace) {
    json j = {{"theta_hat", to_json(f.theta_hat)},
              {"iterations", f.iterations},
              {"kkt_residual", f.kkt_residual},
              {"converged", f.converged}};
    if (with_trace) j["objective_trace"] = f.objective_trace;
    return j;
}

FitResult fit_result_from_json(const json& j) {
    FitResult f;
    try {
        f.theta_hat = block_param_from_json(j.at("theta_hat"));
        f.iterations = j.at("iterations").get<std::size_t>();
        f.kkt_residual = j.at("kkt_residual").get<double>();
        f.converged = j.at("converged").get<bool>();
        if (j.contains("objective_trace")) f.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("FitResult JSON: ") + e.what());
    }
    return f;
}

namespace {

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace

json to_json(const CertificateReport& r) {
    return {{"lambda", r.lambda},
            {"grad_supnorm", num_or_null(r.grad_supnorm)},
            {"rsc_mu", num_or_null(r.rsc_mu)},
            {"rsc_dirs", r.rsc_dirs},
            {"irrep_gap", num_or_null(r.irrep_gap)},
            {"beta_min_margin", num_or_null(r.beta_min_margin)},
            {"hessian_eta", num_or_null(r.hessian_eta)},
            {"kappa_min", num_or_null(r.kappa_min)},
            {"hessian_threshold_ok", r.hessian_threshold_ok},
            {"pdw_pass", r.pdw_pass},
            {"dual_max", num_or_null(r.dual_max)},
            {"no_false_exclusion", r.no_false_exclusion},
            {"support_match", r.support_match},
            {"upper_bound", r.upper_bound},
            {"hessian_proxy", r.hessian_proxy},
            {"reason", r.reason}};
}

json to_json(const GenConfig& c) {
    return {{"M", c.M},
            {"q", c.q},
            {"k", c.k},
            {"T", c.T},
            {"noise_sigma", c.noise_sigma},
            {"feature_scale", c.feature_scale},
            {"design", to_string(c.design)},
            {"rho", c.rho},
            {"signal_magnitude", c.signal_magnitude},
            {"seed", c.seed}};
}

json to_json(const SolverConfig& c) {
    json j = {{"max_iters", c.max_iters}, {"kkt_tol", c.kkt_tol},   {"step_rule", to_string(c.step_rule)},
              {"restart", c.restart},     {"c0", c.c0},             {"sn_c", c.sn_c},
              {"sn_delta", c.sn_delta}};
    j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
    j["lambda_group"] = c.lambda_group ? json(*c.lambda_group) : json(nullptr);
    j["sigma_g"] = c.sigma_g ? json(*c.sigma_g) : json(nullptr);
    return j;
}

GenConfig gen_config_from_json(const json& j, const std::string& base, std::vector<std::string>& errs) {
    GenConfig c;
    const std::size_t before = errs.size();
    JsonReader r(j, base, errs);
    r.read("M", c.M);
    r.read("q", c.q);
    r.read("k", c.k);
    r.read("T", c.T);
    r.read("noise_sigma", c.noise_sigma);
    r.read("feature_scale", c.feature_scale);
    r.read("rho", c.rho);
    r.read("signal_magnitude", c.signal_magnitude);
    r.read("seed", c.seed, 0);
    if (r.has("design")) {
        std::string d;
        r.read("design", d);
        try {
            c.design = design_from_string(d);
        } catch (const ConfigError&) {
            r.error("design", "unknown design '" + d + "'");
        }
    }
    if (errs.size() == before)
        for (const auto& e : validate(c)) errs.push_back(prefix_fields(base, e));
    return c;
}

SolverConfig solver_config_from_json(const json& j, const std::string& base, std::vector<std::string>& errs) {
    SolverConfig c;
    const std::size_t before = errs.size();
    JsonReader r(j, base, errs);
    r.reject_unknown({"lambda", "lambda_group", "max_iters", "kkt_tol", "restart", "c0", "sigma_g", "sn_c", "sn_delta",
                      "step_rule"});
    r.read("lambda", c.lambda);
    r.read("lambda_group", c.lambda_group);
    r.read("max_iters", c.max_iters);
    r.read("kkt_tol", c.kkt_tol);
    r.read("restart", c.restart);
    r.read("c0", c.c0);
    r.read("sigma_g", c.sigma_g);
    r.read("sn_c", c.sn_c);
    r.read("sn_delta", c.sn_delta);
    if (r.has("step_rule")) {
        std::string s;
        r.read("step_rule", s);
        try {
            c.step_rule = step_rule_from_string(s);
        } catch (const ConfigError&) {
            r.error("step_rule", "expected fixed_lipschitz or backtracking");
        }
    }
    if (errs.size() == before)
        for (const auto& e : validate(c)) errs.push_back(prefix_fields(base, e));
    return c;
}

json to_json(const PomdpModel& m) {
    const std::size_t S = m.num_states, A = m.num_actions();
    json P = json::array();
    for (std::size_t a = 0; a < A; ++a) {
        json tab = json::array();
        for (std::size_t s = 0; s < S; ++s)
            tab.push_back(std::vector<double>(m.transition[a].begin() + static_cast<std::ptrdiff_t>(s * S),
                                              m.transition[a].begin() + static_cast<std::ptrdiff_t>((s + 1) * S)));
        P.push_back(tab);
    }
    json O = json::array(), r = json::array();
    for (std::size_t s = 0; s < S; ++s) {
        O.push_back(std::vector<double>(m.observation.begin() + static_cast<std::ptrdiff_t>(s * m.num_obs),
                                        m.observation.begin() + static_cast<std::ptrdiff_t>((s + 1) * m.num_obs)));
        r.push_back(std::vector<double>(m.reward.begin() + static_cast<std::ptrdiff_t>(s * A),
                                        m.reward.begin() + static_cast<std::ptrdiff_t>((s + 1) * A)));
    }
    return {{"P", P}, {"O", O}, {"r", r}, {"gamma", m.gamma}, {"actions", m.actions}, {"tools", m.action_tools},
            {"initial", m.initial}};
}

namespace {

// Reads a rows x cols numeric table; rows and cols of 0 mean "take from data".
bool read_table(const json& j, const std::string& path, std::vector<std::string>& errs, std::size_t& rows,
                std::size_t& cols, std::vector<double>& out) {
    if (!j.is_array() || j.empty()) {
        errs.push_back(path + ": expected a non-empty array of rows");
        return false;
    }
    if (rows != 0 && j.size() != rows) {
        errs.push_back(path + ": expected " + std::to_string(rows) + " rows");
        return false;
    }
    rows = j.size();
    out.clear();
    bool ok = true;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& row = j[i];
        const std::string rp = path + "/" + std::to_string(i);
        if (!row.is_array()) {
            errs.push_back(rp + ": expected an array");
            ok = false;
            continue;
        }
        if (cols == 0) cols = row.size();
        if (row.size() != cols) {
            errs.push_back(rp + ": expected " + std::to_string(cols) + " entries");
            ok = false;
            continue;
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!row[c].is_number()) {
                errs.push_back(rp + "/" + std::to_string(c) + ": expected a number");
                ok = false;
                out.push_back(0.0);
            } else {
                out.push_back(row[c].get<double>());
            }
        }
    }
    return ok;
}

} // namespace

PomdpModel pomdp_from_json(const json& j, const std::string& base, std::vector<std::string>& errs) {
    PomdpModel m;
    const std::size_t before = errs.size();
    JsonReader r(j, base, errs);
    if (!j.is_object()) return m;
    r.require("P");
    r.require("O");
    r.require("r");
    r.require("gamma");
    r.require("actions");
    r.reject_unknown({"P", "O", "r", "gamma", "actions", "tools", "initial"});
    r.read("gamma", m.gamma);
    if (j.contains("actions")) {
        if (!j["actions"].is_array() || j["actions"].empty()) {
            r.error("actions", "expected a non-empty array of names");
        } else {
            for (std::size_t a = 0; a < j["actions"].size(); ++a) {
                if (!j["actions"][a].is_string()) r.error("actions/" + std::to_string(a), "expected a string");
                else m.actions.push_back(j["actions"][a].get<std::string>());
            }
        }
    }
    const std::size_t A = m.actions.size();
    std::size_t S = 0;
    if (j.contains("O")) {
        std::size_t rows = 0, cols = 0;
        if (read_table(j["O"], r.pointer("O"), errs, rows, cols, m.observation)) {
            S = rows;
            m.num_states = rows;
            m.num_obs = cols;
        }
    }
    if (j.contains("P") && S > 0 && A > 0) {
        const auto& P = j["P"];
        // one S x S table shared by all actions, or one per action
        const bool per_action = P.is_array() && !P.empty() && P[0].is_array() && !P[0].empty() && P[0][0].is_array();
        if (per_action) {
            if (P.size() != A) {
                r.error("P", "expected one table per action");
            } else {
                for (std::size_t a = 0; a < A; ++a) {
                    std::size_t rows = S, cols = S;
                    std::vector<double> t;
                    read_table(P[a], r.pointer("P/" + std::to_string(a)), errs, rows, cols, t);
                    m.transition.push_back(std::move(t));
                }
            }
        } else {
            std::size_t rows = S, cols = S;
            std::vector<double> t;
            if (read_table(P, r.pointer("P"), errs, rows, cols, t)) m.transition.assign(A, t);
        }
    }
    if (j.contains("r") && S > 0 && A > 0) {
        std::size_t rows = S, cols = A;
        read_table(j["r"], r.pointer("r"), errs, rows, cols, m.reward);
    }
    if (j.contains("tools")) {
        const auto& t = j["tools"];
        if (!t.is_array() || t.size() != A) {
            r.error("tools", "expected one tool list per action");
        } else {
            for (std::size_t a = 0; a < A; ++a) {
                std::vector<std::size_t> ts;
                if (!t[a].is_array()) r.error("tools/" + std::to_string(a), "expected an array of tool indices");
                else
                    for (const auto& x : t[a]) {
                        if (!is_nonnegative_integer(x)) r.error("tools/" + std::to_string(a), "expected nonnegative integers");
                        else ts.push_back(x.get<std::size_t>());
                    }
                m.action_tools.push_back(std::move(ts));
            }
        }
    } else {
        for (std::size_t a = 0; a < A; ++a) m.action_tools.push_back({a});
    }
    if (j.contains("initial")) {
        if (!j["initial"].is_array()) r.error("initial", "expected an array");
        else
            for (const auto& x : j["initial"]) m.initial.push_back(x.is_number() ? x.get<double>() : -1.0);
    } else if (S > 0) {
        m.initial.assign(S, 1.0 / static_cast<double>(S));
    }
    if (errs.size() == before)
        for (const auto& e : m.validate()) errs.push_back(base + e);
    return m;
}

PomdpModel pomdp_from_json(const json& j) {
    std::vector<std::string> errs;
    auto m = pomdp_from_json(j, "", errs);
    if (!errs.empty()) {
        std::string msg = "invalid POMDP model:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return m;
}

json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

void write_instance(const ProblemInstance& inst, const std::filesystem::path& header_path, const json& provenance) {
    auto csv_path = header_path;
    csv_path.replace_extension(".csv");
    const std::size_t q = inst.q(), d = inst.dim();

    json h;
    h["version"] = kVersion;
    if (!provenance.is_null()) h["provenance"] = provenance;
    h["config"] = to_json(inst.config);
    h["theta_star"] = to_json(inst.theta_star);
    h["s_star"] = to_json(inst.s_star);
    h["contamination_mask"] = inst.contamination_mask;
    h["orthogonal_scale"] = inst.orthogonal_scale;
    h["data"] = csv_path.filename().string();
    h["T"] = inst.T();
    if (inst.group_map) {
        h["group_map"] = *inst.group_map;
        h["num_groups"] = inst.num_groups;
    }
    if (inst.duplicate) h["duplicate"] = {{"copy", inst.duplicate->copy}, {"source", inst.duplicate->source}};
    if (inst.interactions) {
        json arr = json::array();
        for (const auto& it : *inst.interactions) arr.push_back({{"i", it.i}, {"j", it.j}, {"beta", it.beta}});
        h["interactions"] = arr;
    }
    if (inst.drift_schedule) {
        json arr = json::array();
        for (const auto& seg : *inst.drift_schedule) arr.push_back({{"start", seg.start}, {"theta", to_json(seg.theta)}});
        h["drift_schedule"] = arr;
    }

    std::string csv = "t,y";
    for (std::size_t c = 0; c < d; ++c) csv += ",w_" + std::to_string(c + 1);
    const std::size_t ni = inst.interactions ? inst.interactions->size() : 0;
    for (std::size_t p = 0; p < ni; ++p)
        for (std::size_t c = 0; c < q; ++c)
            csv += ",u_" + std::to_string((*inst.interactions)[p].i + 1) + "_" + std::to_string((*inst.interactions)[p].j + 1) +
                   "_" + std::to_string(c + 1);
    csv += '\n';
    std::vector<double> u(q);
    for (std::size_t t = 0; t < inst.T(); ++t) {
        csv += std::to_string(t) + ',' + format_double(inst.y[t]);
        const auto row = inst.w.row(t);
        for (double v : row) csv += ',' + format_double(v);
        for (std::size_t p = 0; p < ni; ++p) {
            interaction_feature(row, q, (*inst.interactions)[p].i, (*inst.interactions)[p].j, u);
            for (double v : u) csv += ',' + format_double(v);
        }
        csv += '\n';
    }
    write_text_file(csv_path, csv);
    write_text_file(header_path, h.dump(2) + "\n");
}

ProblemInstance read_instance(const std::filesystem::path& header_path) {
    const json h = read_json_file(header_path);
    ProblemInstance inst;
    try {
        inst.config.M = h["config"].at("M").get<std::size_t>();
        inst.config.q = h["config"].at("q").get<std::size_t>();
        inst.config.k = h["config"].at("k").get<std::size_t>();
        inst.config.T = h["config"].at("T").get<std::size_t>();
        inst.config.noise_sigma = h["config"].at("noise_sigma").get<double>();
        inst.config.feature_scale = h["config"].at("feature_scale").get<double>();
        inst.config.design = design_from_string(h["config"].at("design").get<std::string>());
        inst.config.rho = h["config"].at("rho").get<double>();
        inst.config.signal_magnitude = h["config"].at("signal_magnitude").get<double>();
        inst.config.seed = h["config"].at("seed").get<std::uint64_t>();
        inst.theta_star = block_param_from_json(h.at("theta_star"));
        inst.s_star = SupportSet(h.at("s_star").get<std::vector<std::size_t>>());
        inst.contamination_mask = h.at("contamination_mask").get<std::vector<std::size_t>>();
        inst.orthogonal_scale = h.at("orthogonal_scale").get<double>();
        if (h.contains("group_map")) {
            inst.group_map = h["group_map"].get<std::vector<std::size_t>>();
            inst.num_groups = h["num_groups"].get<std::size_t>();
        }
        if (h.contains("duplicate"))
            inst.duplicate = DuplicatePair{h["duplicate"]["copy"].get<std::size_t>(), h["duplicate"]["source"].get<std::size_t>()};
        if (h.contains("interactions")) {
            std::vector<Interaction> v;
            for (const auto& it : h["interactions"])
                v.push_back({it["i"].get<std::size_t>(), it["j"].get<std::size_t>(), it["beta"].get<std::vector<double>>()});
            inst.interactions = std::move(v);
        }
        if (h.contains("drift_schedule")) {
            std::vector<DriftSegment> v;
            for (const auto& s : h["drift_schedule"]) v.push_back({s["start"].get<std::size_t>(), block_param_from_json(s["theta"])});
            inst.drift_schedule = std::move(v);
        }
    } catch (const json::exception& e) {
        throw InvalidInput(header_path.string() + ": malformed instance header: " + e.what());
    }

    auto csv_path = header_path.parent_path() / h.value("data", header_path.stem().string() + ".csv");
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot read " + csv_path.string());
    const std::size_t d = inst.theta_star.size(), T = h.value("T", inst.config.T);
    std::string line;
    std::getline(in, line);  // column names
    DesignMatrix w(T, d);
    std::vector<double> y(T);
    for (std::size_t t = 0; t < T; ++t) {
        if (!std::getline(in, line)) throw InvalidInput(csv_path.string() + ": fewer rows than T");
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::getline(ss, cell, ',');
        y[t] = std::stod(cell);
        for (std::size_t c = 0; c < d; ++c) {
            if (!std::getline(ss, cell, ',')) throw InvalidInput(csv_path.string() + ": short row " + std::to_string(t));
            w(t, c) = std::stod(cell);
        }
        // interaction columns are recomputed from w on demand
    }
    inst.w = std::move(w);
    inst.y = std::move(y);
    return inst;
}

} // namespace saclab
