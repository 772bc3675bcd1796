#include "saclab/problem_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "saclab/errors.hpp"
#include "saclab/rng.hpp"

namespace saclab {

std::string to_string(DesignKind d) {
    switch (d) {
    case DesignKind::gaussian_normalized: return "gaussian_normalized";
    case DesignKind::orthogonal: return "orthogonal";
    case DesignKind::equicorrelated: return "equicorrelated";
    case DesignKind::duplicated_column: return "duplicated_column";
    case DesignKind::custom: return "custom";
    }
    return "custom";
}

DesignKind design_from_string(const std::string& s) {
    if (s == "gaussian_normalized") return DesignKind::gaussian_normalized;
    if (s == "orthogonal") return DesignKind::orthogonal;
    if (s == "equicorrelated") return DesignKind::equicorrelated;
    if (s == "duplicated_column") return DesignKind::duplicated_column;
    if (s == "custom") return DesignKind::custom;
    throw ConfigError("design: unknown kind '" + s + "'");
}

std::vector<std::string> validate(const GenConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.M < 1) errs.emplace_back("M: must be positive");
    if (cfg.q < 1) errs.emplace_back("q: must be positive");
    if (cfg.k < 1) errs.emplace_back("k: must be positive");
    if (cfg.T < 1) errs.emplace_back("T: must be positive");
    if (cfg.k > cfg.M) errs.emplace_back("k, M: k must not exceed M");
    if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma)) errs.emplace_back("noise_sigma: must be >= 0");
    if (!(cfg.feature_scale > 0.0 && cfg.feature_scale <= 1.0))
        errs.emplace_back("feature_scale: must lie in (0, 1] so design blocks stay within the unit ball");
    if (!(cfg.signal_magnitude > 0.0) || !std::isfinite(cfg.signal_magnitude))
        errs.emplace_back("signal_magnitude: must be positive");
    if (cfg.design == DesignKind::orthogonal && cfg.T < cfg.M * cfg.q)
        errs.emplace_back("T, design: orthogonal design requires T >= M*q");
    if (cfg.design == DesignKind::equicorrelated && !(cfg.rho >= 0.0 && cfg.rho < 1.0))
        errs.emplace_back("rho: equicorrelated design requires rho in [0, 1)");
    if (cfg.design == DesignKind::duplicated_column && cfg.k >= cfg.M)
        errs.emplace_back("k, design: duplicated_column needs at least one irrelevant block (k < M)");
    if (cfg.design == DesignKind::custom) errs.emplace_back("design: custom designs cannot be generated");
    return errs;
}

void require_valid(const GenConfig& cfg) {
    const auto errs = validate(cfg);
    if (errs.empty()) return;
    std::string msg = "invalid generator config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
}

DesignMatrix::DesignMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw InvalidInput("DesignMatrix: data size does not match shape");
}

DesignMatrix DesignMatrix::select_columns(std::span<const std::size_t> cols) const {
    DesignMatrix out(rows_, cols.size());
    for (std::size_t t = 0; t < rows_; ++t) {
        const double* src = data_.data() + t * cols_;
        double* dst = out.data() + t * cols.size();
        for (std::size_t c = 0; c < cols.size(); ++c) dst[c] = src[cols[c]];
    }
    return out;
}

const BlockParam& ProblemInstance::theta_at(std::size_t t) const {
    if (!drift_schedule || drift_schedule->empty()) return theta_star;
    const auto& sched = *drift_schedule;
    // last segment whose start is <= t
    auto it = std::upper_bound(sched.begin(), sched.end(), t,
                               [](std::size_t v, const DriftSegment& seg) { return v < seg.start; });
    return it == sched.begin() ? sched.front().theta : std::prev(it)->theta;
}

double ProblemInstance::variation() const {
    if (!drift_schedule) return 0.0;
    double v = 0.0;
    for (std::size_t s = 1; s < drift_schedule->size(); ++s) {
        v += mixed_norm((*drift_schedule)[s].theta - (*drift_schedule)[s - 1].theta, NormKind::one_two);
    }
    return v;
}

void interaction_feature(std::span<const double> w_row, std::size_t q, std::size_t i, std::size_t j,
                         std::span<double> out) {
    for (std::size_t c = 0; c < q; ++c) out[c] = w_row[i * q + c] * w_row[j * q + c];
}

std::vector<std::size_t> sample_support(std::size_t M, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), 0);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t r = i + uniform_index(rng, M - i);
        std::swap(perm[i], perm[r]);
    }
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    return perm;
}

namespace {

// Active coordinates: magnitude uniform in [s, 2s], Rademacher sign.
void fill_active_block(std::span<double> block, double s, Rng& rng) {
    for (double& v : block) v = rademacher(rng) * (s + s * uniform01(rng));
}

BlockParam draw_sparse_theta(const GenConfig& cfg, const std::vector<std::size_t>& support, std::uint64_t seed) {
    BlockParam theta(cfg.M, cfg.q);
    Rng rng(seed);
    for (auto j : support) fill_active_block(theta.block(j), cfg.signal_magnitude, rng);
    return theta;
}

void unit_vector(std::span<double> out, Rng& rng) {
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (double& v : out) {
            v = standard_normal(rng);
            n2 += v * v;
        }
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : out) v *= inv;
}

// Rounding can leave a normalized block a few ulps above its bound.
void clamp_block_norm(std::span<double> block, double bound) {
    double n2 = 0.0;
    for (double v : block) n2 += v * v;
    while (std::sqrt(n2) > bound) {
        n2 = 0.0;
        for (double& v : block) {
            v *= (1.0 - 4.0 * std::numeric_limits<double>::epsilon());
            n2 += v * v;
        }
    }
}

DesignMatrix gaussian_normalized_design(const GenConfig& cfg, Rng& rng) {
    DesignMatrix w(cfg.T, cfg.dim());
    for (std::size_t t = 0; t < cfg.T; ++t) {
        auto row = w.row(t);
        for (std::size_t j = 0; j < cfg.M; ++j) {
            auto b = row.subspan(j * cfg.q, cfg.q);
            unit_vector(b, rng);
            for (double& v : b) v *= cfg.feature_scale;
            clamp_block_norm(b, cfg.feature_scale);
        }
    }
    return w;
}

DesignMatrix equicorrelated_design(const GenConfig& cfg, Rng& rng) {
    // Each block copies a shared unit vector with probability sqrt(rho), else
    // draws its own: E[w_i w_j^T] = rho I/q for i != j and I/q on the diagonal.
    const double p_copy = std::sqrt(cfg.rho);
    DesignMatrix w(cfg.T, cfg.dim());
    std::vector<double> shared(cfg.q);
    for (std::size_t t = 0; t < cfg.T; ++t) {
        unit_vector(shared, rng);
        auto row = w.row(t);
        for (std::size_t j = 0; j < cfg.M; ++j) {
            auto b = row.subspan(j * cfg.q, cfg.q);
            if (uniform01(rng) < p_copy) {
                std::copy(shared.begin(), shared.end(), b.begin());
            } else {
                unit_vector(b, rng);
            }
            for (double& v : b) v *= cfg.feature_scale;
            clamp_block_norm(b, cfg.feature_scale);
        }
    }
    return w;
}

DesignMatrix orthogonal_design(const GenConfig& cfg, Rng& rng, double& scale) {
    const auto T = static_cast<Eigen::Index>(cfg.T);
    const auto d = static_cast<Eigen::Index>(cfg.dim());
    Eigen::MatrixXd g(T, d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < T; ++r) g(r, c) = standard_normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd thin = qr.householderQ() * Eigen::MatrixXd::Identity(T, d);
    double max_block = 0.0;
    for (Eigen::Index r = 0; r < T; ++r) {
        for (std::size_t j = 0; j < cfg.M; ++j) {
            max_block = std::max(max_block, thin.row(r).segment(static_cast<Eigen::Index>(j * cfg.q),
                                                                static_cast<Eigen::Index>(cfg.q)).norm());
        }
    }
    const double factor = cfg.feature_scale / max_block;
    DesignMatrix w(cfg.T, cfg.dim());
    for (Eigen::Index r = 0; r < T; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) w(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = factor * thin(r, c);
        for (std::size_t j = 0; j < cfg.M; ++j) clamp_block_norm(w.row(static_cast<std::size_t>(r)).subspan(j * cfg.q, cfg.q), cfg.feature_scale);
    }
    scale = factor * factor / static_cast<double>(cfg.T);
    return w;
}

void fill_responses(ProblemInstance& inst, std::uint64_t noise_seed) {
    Rng rng(noise_seed);
    inst.y.assign(inst.T(), 0.0);
    for (std::size_t t = 0; t < inst.T(); ++t) {
        const auto& th = inst.theta_at(t);
        double s = 0.0;
        const auto row = inst.w.row(t);
        const auto tv = th.values();
        for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * tv[c];
        const double xi = standard_normal(rng);
        inst.y[t] = s + inst.config.noise_sigma * xi;
    }
}

ProblemInstance linear_from_support(const GenConfig& cfg, std::vector<std::size_t> support) {
    ProblemInstance inst;
    inst.config = cfg;
    inst.theta_star = draw_sparse_theta(cfg, support, derive_seed(cfg.seed, "theta"));
    inst.s_star = SupportSet(std::move(support));

    Rng design_rng(derive_seed(cfg.seed, "design"));
    switch (cfg.design) {
    case DesignKind::gaussian_normalized:
    case DesignKind::duplicated_column: inst.w = gaussian_normalized_design(cfg, design_rng); break;
    case DesignKind::equicorrelated: inst.w = equicorrelated_design(cfg, design_rng); break;
    case DesignKind::orthogonal: inst.w = orthogonal_design(cfg, design_rng, inst.orthogonal_scale); break;
    case DesignKind::custom: throw ConfigError("design: custom designs cannot be generated");
    }

    if (cfg.design == DesignKind::duplicated_column) {
        Rng rng(derive_seed(cfg.seed, "duplicate"));
        const auto& s = inst.s_star.indices();
        std::vector<std::size_t> off;
        for (std::size_t j = 0; j < cfg.M; ++j)
            if (!inst.s_star.contains(j)) off.push_back(j);
        DuplicatePair dup{off[uniform_index(rng, off.size())], s[uniform_index(rng, s.size())]};
        for (std::size_t t = 0; t < cfg.T; ++t) {
            auto row = inst.w.row(t);
            std::copy_n(row.begin() + static_cast<std::ptrdiff_t>(dup.source * cfg.q), cfg.q,
                        row.begin() + static_cast<std::ptrdiff_t>(dup.copy * cfg.q));
        }
        inst.duplicate = dup;
    }
    fill_responses(inst, derive_seed(cfg.seed, "noise"));
    return inst;
}

} // namespace

ProblemInstance gen_linear_instance(const GenConfig& cfg) {
    require_valid(cfg);
    return linear_from_support(cfg, sample_support(cfg.M, cfg.k, derive_seed(cfg.seed, "support")));
}

ProblemInstance gen_grouped_instance(const GenConfig& cfg, std::size_t num_groups, std::size_t active_groups) {
    require_valid(cfg);
    if (num_groups == 0 || cfg.M % num_groups != 0) throw ConfigError("G: number of groups must divide M");
    if (active_groups == 0 || active_groups > num_groups) throw ConfigError("k_g: must lie in [1, G]");
    const std::size_t size = cfg.M / num_groups;
    if (active_groups * size < cfg.k) throw ConfigError("k_g, k: k_g * (group size) < k, active tools do not fit");
    if (cfg.k < active_groups) throw ConfigError("k_g, k: each active group needs at least one active tool (k >= k_g)");

    const auto groups = sample_support(num_groups, active_groups, derive_seed(cfg.seed, "groups"));
    Rng rng(derive_seed(cfg.seed, "support"));
    std::vector<std::size_t> support;
    std::vector<std::size_t> spare;
    for (auto g : groups) {
        const std::size_t first = g * size + uniform_index(rng, size);
        support.push_back(first);
        for (std::size_t j = g * size; j < (g + 1) * size; ++j)
            if (j != first) spare.push_back(j);
    }
    for (std::size_t i = 0; i < cfg.k - active_groups; ++i) {
        const std::size_t r = i + uniform_index(rng, spare.size() - i);
        std::swap(spare[i], spare[r]);
        support.push_back(spare[i]);
    }
    std::sort(support.begin(), support.end());

    auto inst = linear_from_support(cfg, std::move(support));
    std::vector<std::size_t> gmap(cfg.M);
    for (std::size_t j = 0; j < cfg.M; ++j) gmap[j] = j / size;
    inst.group_map = std::move(gmap);
    inst.num_groups = num_groups;
    return inst;
}

ProblemInstance gen_interaction_instance(const GenConfig& cfg, std::size_t k2) {
    require_valid(cfg);
    if (k2 > cfg.k * (cfg.k - 1) / 2) throw ConfigError("k2: exceeds k(k-1)/2 heredity-compatible pairs");
    auto inst = gen_linear_instance(cfg);
    const auto& s = inst.s_star.indices();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < s.size(); ++a)
        for (std::size_t b = a + 1; b < s.size(); ++b) pairs.emplace_back(s[a], s[b]);
    Rng pick(derive_seed(cfg.seed, "interactions"));
    for (std::size_t i = 0; i < k2; ++i) {
        const std::size_t r = i + uniform_index(pick, pairs.size() - i);
        std::swap(pairs[i], pairs[r]);
    }
    pairs.resize(k2);
    std::sort(pairs.begin(), pairs.end());

    Rng vals(derive_seed(cfg.seed, "interaction-values"));
    std::vector<Interaction> inter;
    for (auto [i, j] : pairs) {
        Interaction it{i, j, std::vector<double>(cfg.q)};
        fill_active_block(it.beta, cfg.signal_magnitude, vals);
        inter.push_back(std::move(it));
    }
    std::vector<double> u(cfg.q);
    for (std::size_t t = 0; t < inst.T(); ++t) {
        for (const auto& it : inter) {
            interaction_feature(inst.w.row(t), cfg.q, it.i, it.j, u);
            for (std::size_t c = 0; c < cfg.q; ++c) inst.y[t] += it.beta[c] * u[c];
        }
    }
    inst.interactions = std::move(inter);
    return inst;
}

ProblemInstance gen_drift_sequence(const GenConfig& cfg, std::size_t num_segments) {
    require_valid(cfg);
    if (num_segments == 0 || num_segments > cfg.T) throw ConfigError("num_segments: must lie in [1, T]");
    ProblemInstance inst;
    inst.config = cfg;
    Rng design_rng(derive_seed(cfg.seed, "design"));
    switch (cfg.design) {
    case DesignKind::gaussian_normalized: inst.w = gaussian_normalized_design(cfg, design_rng); break;
    case DesignKind::equicorrelated: inst.w = equicorrelated_design(cfg, design_rng); break;
    case DesignKind::orthogonal: inst.w = orthogonal_design(cfg, design_rng, inst.orthogonal_scale); break;
    default: throw ConfigError("design: drift sequences support gaussian_normalized, equicorrelated, orthogonal");
    }
    std::vector<DriftSegment> sched;
    for (std::size_t s = 0; s < num_segments; ++s) {
        const std::string tag = "segment-" + std::to_string(s);
        const auto support = sample_support(cfg.M, cfg.k, derive_seed(cfg.seed, "support/" + tag));
        sched.push_back({s * cfg.T / num_segments, draw_sparse_theta(cfg, support, derive_seed(cfg.seed, "theta/" + tag))});
    }
    inst.theta_star = sched.front().theta;
    inst.s_star = support_of(inst.theta_star, 0.0);
    inst.drift_schedule = std::move(sched);
    fill_responses(inst, derive_seed(cfg.seed, "noise"));
    return inst;
}

ProblemInstance inject_contamination(const ProblemInstance& inst, double eps, double magnitude, std::uint64_t seed) {
    if (!(eps >= 0.0 && eps < 1.0)) throw InvalidInput("inject_contamination: eps must lie in [0, 1)");
    if (!(magnitude > 0.0)) throw InvalidInput("inject_contamination: magnitude must be positive");
    ProblemInstance out = inst;
    const std::size_t T = inst.T();
    const auto n = static_cast<std::size_t>(std::floor(eps * static_cast<double>(T) + 1e-9));
    if (n == 0) return out;
    Rng rng(derive_seed(seed, "contamination"));
    const std::size_t start = uniform_index(rng, T);
    std::vector<std::size_t> mask;
    for (std::size_t i = 0; i < n; ++i) mask.push_back((start + i) % T);
    std::sort(mask.begin(), mask.end());
    for (auto t : mask) {
        const auto row = inst.w.row(t);
        const auto tv = inst.theta_at(t).values();
        double s = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * tv[c];
        out.y[t] = s > 0.0 ? -magnitude : magnitude;
    }
    std::vector<std::size_t> merged;
    std::set_union(inst.contamination_mask.begin(), inst.contamination_mask.end(), mask.begin(), mask.end(),
                   std::back_inserter(merged));
    out.contamination_mask = std::move(merged);
    return out;
}

ProblemInstance make_custom_instance(std::size_t M, std::size_t q, DesignMatrix w, std::vector<double> y,
                                     BlockParam theta_star) {
    if (w.cols() != M * q) throw InvalidInput("make_custom_instance: design width must equal M*q");
    if (y.size() != w.rows()) throw InvalidInput("make_custom_instance: one response per design row");
    if (theta_star.num_blocks() != M || theta_star.block_dim() != q)
        throw InvalidInput("make_custom_instance: theta_star shape mismatch");
    ProblemInstance inst;
    inst.config.M = M;
    inst.config.q = q;
    inst.config.T = w.rows();
    inst.config.design = DesignKind::custom;
    inst.s_star = support_of(theta_star, 0.0);
    inst.config.k = inst.s_star.size();
    inst.theta_star = std::move(theta_star);
    inst.w = std::move(w);
    inst.y = std::move(y);
    return inst;
}

} // namespace saclab
