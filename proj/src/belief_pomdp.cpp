#include "saclab/belief_pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "saclab/errors.hpp"
#include "saclab/rng.hpp"

namespace saclab {

namespace {

double l1_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

// Inverse-CDF draw; rounding in the cumulative sum falls back to the last positive entry.
std::size_t sample_row(std::span<const double> row, double u) {
    double c = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i] <= 0.0) continue;
        last = i;
        c += row[i];
        if (u < c) return i;
    }
    return last;
}

// predicted state distribution b^T P_a
std::vector<double> predict(const PomdpModel& m, std::span<const double> b, std::size_t a) {
    std::vector<double> out(m.num_states, 0.0);
    for (std::size_t s = 0; s < m.num_states; ++s) {
        if (b[s] == 0.0) continue;
        for (std::size_t s2 = 0; s2 < m.num_states; ++s2) out[s2] += b[s] * m.P(a, s, s2);
    }
    return out;
}

PomdpModel make_model(std::vector<std::string> actions, std::size_t S, std::size_t O, double gamma) {
    PomdpModel m;
    m.num_states = S;
    m.num_obs = O;
    m.actions = std::move(actions);
    m.gamma = gamma;
    m.transition.assign(m.actions.size(), std::vector<double>(S * S, 0.0));
    m.observation.assign(S * O, 0.0);
    m.reward.assign(S * m.actions.size(), 0.0);
    m.initial.assign(S, 1.0 / static_cast<double>(S));
    for (std::size_t a = 0; a < m.actions.size(); ++a) m.action_tools.push_back({a});
    return m;
}

void set_noisy_observation(PomdpModel& m, double correct) {
    const double other = (1.0 - correct) / static_cast<double>(m.num_obs - 1);
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t o = 0; o < m.num_obs; ++o) m.observation[s * m.num_obs + o] = (o == s) ? correct : other;
}

PomdpModel tiger() {
    auto m = make_model({"listen", "open-left", "open-right"}, 2, 2, 0.95);
    for (std::size_t s = 0; s < 2; ++s) {
        m.transition[0][s * 2 + s] = 1.0;
        for (std::size_t a = 1; a < 3; ++a)
            for (std::size_t s2 = 0; s2 < 2; ++s2) m.transition[a][s * 2 + s2] = 0.5;
    }
    set_noisy_observation(m, 0.85);
    // state 0: tiger behind the left door
    const double r[2][3] = {{-1.0, -100.0, 10.0}, {-1.0, 10.0, -100.0}};
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t a = 0; a < 3; ++a) m.reward[s * 3 + a] = r[s][a];
    return m;
}

PomdpModel chain4() {
    // a machine drifting through four wear levels; serving pays off only when
    // worn little, maintenance pulls the state back down
    auto m = make_model({"serve", "inspect", "maintain"}, 4, 4, 0.9);
    const double drift = 0.3;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t up = std::min<std::size_t>(s + 1, 3);
        for (std::size_t a = 0; a < 2; ++a) {
            m.transition[a][s * 4 + s] += 1.0 - drift;
            m.transition[a][s * 4 + up] += drift;
        }
        const std::size_t down = s == 0 ? 0 : s - 1;
        m.transition[2][s * 4 + down] += 0.9;
        m.transition[2][s * 4 + s] += 0.1;
    }
    set_noisy_observation(m, 0.55);
    const double r[4][3] = {{4.0, 1.0, -1.0}, {2.0, 1.0, 0.0}, {-1.0, 1.0, 1.0}, {-5.0, 1.0, 2.0}};
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t a = 0; a < 3; ++a) m.reward[s * 3 + a] = r[s][a];
    m.initial = {1.0, 0.0, 0.0, 0.0};
    return m;
}

PomdpModel grid6() {
    // 2 x 3 grid, cells numbered row-major; moves slip with probability 0.2
    auto m = make_model({"north", "south", "east", "west", "dig"}, 6, 6, 0.9);
    auto cell = [](int r, int c) { return static_cast<std::size_t>(r * 3 + c); };
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, 1, -1};
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) {
            const std::size_t s = cell(r, c);
            for (std::size_t a = 0; a < 4; ++a) {
                const int nr = std::clamp(r + dr[a], 0, 1);
                const int nc = std::clamp(c + dc[a], 0, 2);
                m.transition[a][s * 6 + cell(nr, nc)] += 0.8;
                m.transition[a][s * 6 + s] += 0.2;
            }
            m.transition[4][s * 6 + s] = 1.0;
        }
    }
    set_noisy_observation(m, 0.6);
    for (std::size_t s = 0; s < 6; ++s) {
        for (std::size_t a = 0; a < 4; ++a) m.reward[s * 5 + a] = -0.1;
        m.reward[s * 5 + 4] = (s == 5) ? 5.0 : -1.0;
    }
    return m;
}

} // namespace

std::size_t PomdpModel::num_tools() const {
    std::size_t n = 0;
    for (const auto& ts : action_tools)
        for (std::size_t j : ts) n = std::max(n, j + 1);
    return n;
}

double PomdpModel::r_max() const {
    double m = 0.0;
    for (double v : reward) m = std::max(m, std::abs(v));
    return m;
}

std::vector<std::string> PomdpModel::validate() const {
    std::vector<std::string> errs;
    const double tol = 1e-12;
    if (num_states == 0) errs.push_back("/P: need at least one state");
    if (num_obs == 0) errs.push_back("/O: need at least one observation");
    if (actions.empty()) errs.push_back("/actions: need at least one action");
    const bool shaped = errs.empty();
    if (!(gamma > 0.0 && gamma < 1.0)) errs.push_back("/gamma: must lie in (0, 1)");
    if (!shaped) return errs;
    const std::size_t S = num_states, A = actions.size();
    if (transition.size() != A) errs.push_back("/P: one transition table per action");
    for (std::size_t a = 0; a < transition.size(); ++a) {
        if (transition[a].size() != S * S) {
            errs.push_back("/P/" + std::to_string(a) + ": must be " + std::to_string(S) + " x " + std::to_string(S));
            continue;
        }
        for (std::size_t s = 0; s < S; ++s) {
            double sum = 0.0;
            bool neg = false;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                sum += transition[a][s * S + s2];
                neg = neg || !(transition[a][s * S + s2] >= 0.0);
            }
            if (neg || std::abs(sum - 1.0) > tol)
                errs.push_back("/P/" + std::to_string(a) + "/" + std::to_string(s) + ": row must be a distribution");
        }
    }
    if (observation.size() != S * num_obs) {
        errs.push_back("/O: must be states x observations");
    } else {
        for (std::size_t s = 0; s < S; ++s) {
            double sum = 0.0;
            bool neg = false;
            for (std::size_t o = 0; o < num_obs; ++o) {
                sum += observation[s * num_obs + o];
                neg = neg || !(observation[s * num_obs + o] >= 0.0);
            }
            if (neg || std::abs(sum - 1.0) > tol) errs.push_back("/O/" + std::to_string(s) + ": row must be a distribution");
        }
    }
    if (reward.size() != S * A) errs.push_back("/r: must be states x actions");
    for (double v : reward)
        if (!std::isfinite(v)) {
            errs.push_back("/r: entries must be finite");
            break;
        }
    if (initial.size() != S) {
        errs.push_back("/initial: must have one entry per state");
    } else {
        double sum = 0.0;
        bool neg = false;
        for (double v : initial) {
            sum += v;
            neg = neg || !(v >= 0.0);
        }
        if (neg || std::abs(sum - 1.0) > tol) errs.push_back("/initial: must be a distribution");
    }
    if (action_tools.size() != A) errs.push_back("/tools: one tool list per action");
    return errs;
}

void PomdpModel::require_valid() const {
    const auto errs = validate();
    if (errs.empty()) return;
    std::string msg = "invalid POMDP model:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
}

PomdpModel builtin_pomdp(const std::string& name) {
    if (name == "tiger") return tiger();
    if (name == "chain4") return chain4();
    if (name == "grid6") return grid6();
    throw ConfigError("model: unknown built-in '" + name + "'");
}

std::vector<std::string> builtin_pomdp_names() { return {"tiger", "chain4", "grid6"}; }

void Belief::check(double tol) const {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= -tol) || !std::isfinite(p)) throw InvalidInput("belief: probabilities must be nonnegative");
        sum += p;
    }
    if (probs.empty() || std::abs(sum - 1.0) > tol) throw InvalidInput("belief: probabilities must sum to 1");
}

Belief belief_update(const PomdpModel& model, const Belief& b, std::size_t a, std::size_t o) {
    if (b.probs.size() != model.num_states) throw InvalidInput("belief_update: belief has wrong length");
    if (a >= model.num_actions() || o >= model.num_obs) throw InvalidInput("belief_update: action or observation out of range");
    auto pred = predict(model, b.probs, a);
    double z = 0.0;
    for (std::size_t s = 0; s < model.num_states; ++s) {
        pred[s] *= model.O(s, o);
        z += pred[s];
    }
    if (!(z > 0.0)) throw ImpossibleObservation("belief_update: observation has zero likelihood");
    for (double& p : pred) p /= z;
    return {std::move(pred)};
}

std::string to_string(CorruptionMode m) { return m == CorruptionMode::uniform_mix ? "uniform_mix" : "adversarial_mass"; }

CorruptionMode corruption_from_string(const std::string& s) {
    if (s == "uniform_mix") return CorruptionMode::uniform_mix;
    if (s == "adversarial_mass") return CorruptionMode::adversarial_mass;
    throw ConfigError("mode: unknown corruption mode '" + s + "'");
}

CorruptedBelief corrupt_belief(const Belief& b, double eps_target, CorruptionMode mode) {
    if (!(eps_target >= 0.0) || !std::isfinite(eps_target)) throw InvalidInput("corrupt_belief: eps must be >= 0");
    const std::size_t S = b.probs.size();
    CorruptedBelief out{b, 0.0, false};
    if (eps_target == 0.0 || S == 0) return out;
    auto& p = out.belief.probs;
    if (mode == CorruptionMode::uniform_mix) {
        const double u = 1.0 / static_cast<double>(S);
        double dist = 0.0;
        for (double v : b.probs) dist += std::abs(u - v);
        if (dist == 0.0) {
            out.infeasible = true;
            return out;
        }
        double w = eps_target / dist;
        if (w > 1.0) {
            w = 1.0;
            out.infeasible = true;
        }
        for (std::size_t s = 0; s < S; ++s) p[s] = (1.0 - w) * b.probs[s] + w * u;
    } else {
        const auto hi = static_cast<std::size_t>(std::max_element(b.probs.begin(), b.probs.end()) - b.probs.begin());
        std::size_t lo = 0;
        for (std::size_t s = 0; s < S; ++s)
            if (s != hi && (lo == hi || b.probs[s] <= b.probs[lo])) lo = s;
        if (S == 1 || lo == hi) {
            out.infeasible = true;
            return out;
        }
        double move = eps_target / 2.0;
        if (move > b.probs[hi]) {
            move = b.probs[hi];
            out.infeasible = true;
        }
        p[hi] -= move;
        p[lo] += move;
    }
    out.achieved_eps = l1_dist(p, b.probs);
    return out;
}

std::size_t router_action(const PomdpModel& model, const BlockParam& router, std::span<const double> belief) {
    if (router.block_dim() != model.num_states || router.num_blocks() < model.num_tools())
        throw InvalidInput("router: needs one block of length num_states per tool");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < model.num_actions(); ++a) {
        double s = 0.0;
        for (std::size_t j : model.action_tools[a]) {
            const auto blk = router.block(j);
            for (std::size_t i = 0; i < blk.size(); ++i) s += blk[i] * belief[i];
        }
        if (s > best_score) {
            best_score = s;
            best = a;
        }
    }
    return best;
}

std::size_t required_horizon(const PomdpModel& model, double tol) {
    const double rm = model.r_max();
    if (rm == 0.0) return 1;
    const double h = std::log(tol * (1.0 - model.gamma) / rm) / std::log(model.gamma);
    return static_cast<std::size_t>(std::max(1.0, std::ceil(h)));
}

double RolloutStats::mean() const {
    if (returns.empty()) return 0.0;
    return std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
}

double RolloutStats::stderr_mean() const {
    const std::size_t n = returns.size();
    if (n < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double r : returns) ss += (r - m) * (r - m);
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

RolloutStats policy_rollouts(const PomdpModel& model, const BlockParam& router, const BeliefMode& mode,
                             std::size_t horizon, std::size_t num_rollouts, std::uint64_t seed) {
    model.require_valid();
    const double rm = model.r_max();
    if (horizon < 1 || std::pow(model.gamma, static_cast<double>(horizon)) * rm / (1.0 - model.gamma) > 1e-6)
        throw InvalidInput("policy_eval_discounted: horizon too short for the 1e-6 truncation bound");
    RolloutStats st;
    st.returns.resize(num_rollouts);
    for (std::size_t n = 0; n < num_rollouts; ++n) {
        // counter-based uniforms keyed by (seed, rollout, step, purpose)
        auto draw = [&](std::size_t t, std::uint64_t which) {
            return static_cast<double>(derive_seed(seed, n, t * 4 + which) >> 11) * 0x1.0p-53;
        };
        std::size_t s = sample_row(model.initial, draw(0, 3));
        Belief b{model.initial};
        double ret = 0.0, disc = 1.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            std::size_t a;
            if (mode.corrupted) {
                const auto cb = corrupt_belief(b, mode.eps, mode.mode);
                st.max_eps = std::max(st.max_eps, cb.achieved_eps);
                a = router_action(model, router, cb.belief.probs);
            } else {
                a = router_action(model, router, b.probs);
            }
            ret += disc * model.r(s, a);
            disc *= model.gamma;
            const std::size_t s2 = sample_row({model.transition[a].data() + s * model.num_states, model.num_states}, draw(t, 0));
            const std::size_t o = sample_row({model.observation.data() + s2 * model.num_obs, model.num_obs}, draw(t, 1));
            b = belief_update(model, b, a, o);
            s = s2;
        }
        st.returns[n] = ret;
    }
    return st;
}

double policy_eval_discounted(const PomdpModel& model, const BlockParam& router, const BeliefMode& mode,
                              std::size_t horizon, std::size_t num_rollouts, std::uint64_t seed) {
    return policy_rollouts(model, router, mode, horizon, num_rollouts, seed).mean();
}

double c_bel_constant(double L_r, double L_P, double R_max, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("c_bel_constant: gamma must lie in (0, 1)");
    return L_r / (1.0 - gamma) + gamma * R_max * L_P / ((1.0 - gamma) * (1.0 - gamma));
}

namespace {

void simplex_grid(std::size_t S, std::size_t n, std::vector<double>& cur, std::size_t pos, std::size_t left,
                  std::vector<std::vector<double>>& out) {
    if (pos + 1 == S) {
        cur[pos] = static_cast<double>(left) / static_cast<double>(n);
        out.push_back(cur);
        return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
        cur[pos] = static_cast<double>(c) / static_cast<double>(n);
        simplex_grid(S, n, cur, pos + 1, left - c, out);
    }
}

std::size_t grid_size(std::size_t S, std::size_t n) {
    // C(n + S - 1, S - 1)
    double c = 1.0;
    for (std::size_t i = 1; i < S; ++i) c = c * static_cast<double>(n + i) / static_cast<double>(i);
    return static_cast<std::size_t>(c + 0.5);
}

struct NextBelief {
    std::vector<double> p;                // observation probabilities
    std::vector<std::vector<double>> tau; // posterior per observation
};

NextBelief next_belief(const PomdpModel& m, std::span<const double> b, std::size_t a) {
    const auto pred = predict(m, b, a);
    NextBelief nb;
    nb.p.assign(m.num_obs, 0.0);
    nb.tau.assign(m.num_obs, std::vector<double>(m.num_states, 0.0));
    for (std::size_t o = 0; o < m.num_obs; ++o) {
        double z = 0.0;
        for (std::size_t s = 0; s < m.num_states; ++s) {
            nb.tau[o][s] = pred[s] * m.O(s, o);
            z += nb.tau[o][s];
        }
        nb.p[o] = z;
        if (z > 0.0)
            for (double& v : nb.tau[o]) v /= z;
    }
    return nb;
}

} // namespace

LipschitzEstimate lipschitz_constants(const PomdpModel& model, std::size_t resolution) {
    model.require_valid();
    const std::size_t S = model.num_states, A = model.num_actions();
    LipschitzEstimate est;
    for (std::size_t a = 0; a < A; ++a) {
        double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < S; ++s) {
            hi = std::max(hi, model.r(s, a));
            lo = std::min(lo, model.r(s, a));
        }
        est.L_r = std::max(est.L_r, (hi - lo) / 2.0);
    }
    if (resolution == 0) {
        resolution = 1;
        while (grid_size(S, resolution + 1) <= 400 && resolution < 64) ++resolution;
    }
    std::vector<std::vector<double>> grid;
    std::vector<double> cur(S);
    simplex_grid(S, resolution, cur, 0, resolution, grid);
    est.grid_resolution = resolution;
    est.grid_points = grid.size();

    // Transport bound between next-belief laws: observations coupled pairwise,
    // leftover mass moved at the simplex diameter 2.
    for (std::size_t a = 0; a < A; ++a) {
        std::vector<NextBelief> nbs;
        nbs.reserve(grid.size());
        for (const auto& b : grid) nbs.push_back(next_belief(model, b, a));
        for (std::size_t i = 0; i < grid.size(); ++i) {
            for (std::size_t j = i + 1; j < grid.size(); ++j) {
                const double db = l1_dist(grid[i], grid[j]);
                double d = 0.0;
                for (std::size_t o = 0; o < model.num_obs; ++o) {
                    const double pi = nbs[i].p[o], pj = nbs[j].p[o];
                    if (std::min(pi, pj) > 0.0) d += std::min(pi, pj) * l1_dist(nbs[i].tau[o], nbs[j].tau[o]);
                    d += std::abs(pi - pj);
                }
                est.L_P = std::max(est.L_P, d / db);
            }
        }
    }
    return est;
}

BlockParam reward_router(const PomdpModel& model) {
    const std::size_t M = model.num_tools(), S = model.num_states;
    BlockParam th(M, S);
    for (std::size_t a = 0; a < model.num_actions(); ++a) {
        if (model.action_tools[a].size() != 1) continue;
        const std::size_t j = model.action_tools[a][0];
        for (std::size_t s = 0; s < S; ++s) th.block(j)[s] = model.r(s, a);
    }
    return th;
}

BeliefTraces generate_belief_traces(const PomdpModel& model, const BeliefTraceConfig& cfg) {
    model.require_valid();
    const std::size_t M = cfg.num_tools, S = model.num_states, T = cfg.T;
    if (cfg.k > M || cfg.set_size < 1 || cfg.set_size > M || T < 1)
        throw ConfigError("belief trace: need k <= num_tools, 1 <= set_size <= num_tools, T >= 1");

    const auto support = sample_support(M, cfg.k, derive_seed(cfg.seed, "support"));
    BlockParam theta(M, S);
    {
        Rng rng(derive_seed(cfg.seed, "theta"));
        std::uniform_real_distribution<double> mag(cfg.signal_magnitude, 2.0 * cfg.signal_magnitude);
        // Zero-sum directions: beliefs sum to one, so any component along the
        // all-ones vector is a tool-presence offset that carries no belief signal.
        for (std::size_t j : support) {
            auto b = theta.block(j);
            double avg = 0.0;
            for (double& v : b) {
                v = standard_normal(rng);
                avg += v;
            }
            avg = S > 1 ? avg / static_cast<double>(S) : 0.0;
            double n2 = 0.0;
            for (double& v : b) {
                v -= avg;
                n2 += v * v;
            }
            const double target = mag(rng);
            for (double& v : b) v *= target / std::sqrt(n2);
        }
    }

    DesignMatrix w(T, M * S), what(T, M * S);
    std::vector<double> y(T);
    double max_eps = 0.0;
    Rng rng(derive_seed(cfg.seed, "trace"));
    std::size_t s = sample_row(model.initial, uniform01(rng));
    Belief b{model.initial};
    std::vector<std::size_t> tools(M);
    for (std::size_t t = 0; t < T; ++t) {
        const auto cb = corrupt_belief(b, cfg.eps, cfg.mode);
        max_eps = std::max(max_eps, cb.achieved_eps);
        std::iota(tools.begin(), tools.end(), std::size_t{0});
        for (std::size_t i = 0; i < cfg.set_size; ++i) std::swap(tools[i], tools[i + uniform_index(rng, M - i)]);
        double mean = 0.0;
        for (std::size_t i = 0; i < cfg.set_size; ++i) {
            const std::size_t j = tools[i];
            for (std::size_t x = 0; x < S; ++x) {
                w(t, j * S + x) = b.probs[x];
                what(t, j * S + x) = cb.belief.probs[x];
                mean += theta.block(j)[x] * b.probs[x];
            }
        }
        y[t] = mean + cfg.noise_sigma * standard_normal(rng);
        const std::size_t a = uniform_index(rng, model.num_actions());
        const std::size_t s2 = sample_row({model.transition[a].data() + s * S, S}, uniform01(rng));
        const std::size_t o = sample_row({model.observation.data() + s2 * model.num_obs, model.num_obs}, uniform01(rng));
        b = belief_update(model, b, a, o);
        s = s2;
    }
    BeliefTraces out;
    out.exact = make_custom_instance(M, S, std::move(w), y, theta);
    out.corrupted = make_custom_instance(M, S, std::move(what), std::move(y), theta);
    out.exact.s_star = out.corrupted.s_star = SupportSet(support);
    out.achieved_eps = max_eps;
    return out;
}

double belief_grad_perturbation(const ProblemInstance& trace_b, const ProblemInstance& trace_bhat,
                                const BlockParam& theta_star) {
    if (trace_b.T() != trace_bhat.T() || trace_b.dim() != trace_bhat.dim() || trace_b.y != trace_bhat.y)
        throw InvalidInput("belief_grad_perturbation: traces must share timestamps and targets");
    if (theta_star.size() != trace_b.dim()) throw InvalidInput("belief_grad_perturbation: theta has wrong shape");
    const std::size_t T = trace_b.T(), d = trace_b.dim(), q = theta_star.block_dim();
    std::vector<double> diff(d, 0.0);
    const auto th = theta_star.values();
    for (std::size_t t = 0; t < T; ++t) {
        const auto wb = trace_b.w.row(t), wh = trace_bhat.w.row(t);
        double rb = -trace_b.y[t], rh = -trace_b.y[t];
        for (std::size_t c = 0; c < d; ++c) {
            rb += wb[c] * th[c];
            rh += wh[c] * th[c];
        }
        for (std::size_t c = 0; c < d; ++c) diff[c] += wh[c] * rh - wb[c] * rb;
    }
    double worst = 0.0;
    for (std::size_t off = 0; off < d; off += q) {
        double s = 0.0;
        for (std::size_t i = 0; i < q; ++i) s += diff[off + i] * diff[off + i];
        worst = std::max(worst, std::sqrt(s));
    }
    return worst / static_cast<double>(T);
}

} // namespace saclab
