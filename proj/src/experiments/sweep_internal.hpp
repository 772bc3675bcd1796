#pragma once
// Machinery shared by the sweep runners: parameter schemas, the parallel
// grid driver and summary helpers.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saclab/block_param.hpp"
#include "saclab/experiments/sweep.hpp"
#include "saclab/problem_gen.hpp"
#include "saclab/solvers.hpp"
#include "saclab/stats.hpp"

namespace saclab::detail {

using nlohmann::json;

struct NumParam {
    const char* name;
    double def;
    bool integer;
    double lo;  // inclusive
    double hi;  // inclusive
};

struct StrParam {
    const char* name;
    const char* def;
    std::vector<const char*> choices;  // empty: free text
};

struct Schema {
    std::vector<NumParam> nums;
    std::vector<StrParam> strs;
    /// Params validated by check_params only (objects, mixed types).
    std::vector<const char*> extra;
    /// Cross-field problems of one resolved cell, as "key, key: message".
    std::function<std::vector<std::string>(const CellParams&)> check_cell;
    /// Problems in params beyond per-key type and range checks, with full paths.
    std::function<std::vector<std::string>(const SweepSpec&)> check_params;
};

const Schema& schema(Experiment e);
const NumParam* find_num(const Schema& s, std::string_view name);
const StrParam* find_str(const Schema& s, std::string_view name);

/// Cells of the sorted grid product, first key slowest.
std::vector<std::vector<double>> grid_cells(const SweepSpec& spec, std::vector<std::string>& keys);

using TrialFn = std::function<std::vector<double>(const CellParams&, std::uint64_t seed)>;
/// Runs every (cell, trial) in parallel and gathers rows in (cell, trial) order.
SweepResult run_grid(const SweepSpec& spec, std::vector<std::string> columns, const TrialFn& trial);

/// Throws ConfigError listing every problem, or returns normally.
void require_valid(const SweepSpec& spec, Experiment expected);
void require_valid(const SweepSpec& spec, std::initializer_list<Experiment> expected);

/// T = max(k, round(tau * scale)) when tau >= 0, else the explicit T.
std::size_t derived_T(const CellParams& p, double scale);
/// Rescaling denominators: k ln M, kg ln G + k ln M, (k + k2) ln M.
double phase_scale(const CellParams& p);
double group_scale(const CellParams& p);
double hierarchy_scale(const CellParams& p);

/// Shared generator settings: M, q, k, T, sigma, signal, feature_scale, rho, design.
GenConfig gen_config(const CellParams& p, std::uint64_t seed);

/// solver.lambda if set, else lambda_rate(M, T, c0, solver.sigma_g or the cell's sigma).
double sweep_lambda(const SweepSpec& spec, std::size_t M, std::size_t T, double sigma);
SolverConfig with_lambda(const SolverConfig& base, double lambda);

/// lambda, grad_supnorm at theta*, cone_ratio of the error, whether the cone check applies, and its result.
inline const std::vector<std::string> kConeColumns = {"lambda", "grad_supnorm", "cone_ratio", "cone_applies", "cone_ok"};
std::array<double, 5> cone_columns(const ProblemInstance& inst, const BlockParam& theta_hat, const BlockParam& theta_star,
                                   double lambda, bool converged);

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b);

inline double flag(bool b) { return b ? 1.0 : 0.0; }

/// Finite entries only.
std::vector<double> finite(std::span<const double> v);
/// Values of col over rows of cell whose filter column is 1 (no filter when empty).
std::vector<double> cell_column(const SweepResult& r, std::size_t cell, std::string_view col,
                                std::string_view filter = {});
double cell_median(const SweepResult& r, std::size_t cell, std::string_view col, std::string_view filter = {});
/// Fraction of the cell's rows whose col equals 1.
double cell_rate(const SweepResult& r, std::size_t cell, std::string_view col);

/// Per-cell count, median and quantiles of every column.
json cell_stats(const SweepResult& r);
json fit_json(const stats::LinearFit& f);

/// Cells grouped by the values of every grid key except key; each group is
/// ordered by the key's value.
std::vector<std::vector<std::size_t>> curves_along(const SweepResult& r, std::string_view key);
/// Label like "M=512 k=5" of the grid keys other than key.
std::string curve_label(const SweepResult& r, std::size_t cell, std::string_view key);
/// Value of key in a cell: the grid value, else the cell's first row value of the column with that name.
double axis_value(const SweepResult& r, std::size_t cell, std::string_view key);

/// Log-log OLS of median(col) against axis over a curve, skipping nonpositive medians.
json loglog_fit(const SweepResult& r, const std::vector<std::size_t>& curve, std::string_view axis,
                std::string_view col, std::string_view filter, bool log_log_axis = false);

/// Success rate per cell along a curve, with its isotonic fit and 50%/90% crossings of axis_col.
json success_curve(const SweepResult& r, const std::vector<std::size_t>& curve, std::string_view axis_key,
                   std::string_view axis_col, std::string_view success_col);

json summarize_rate(const SweepSpec& spec, const SweepResult& r);
json summarize_phase(const SweepSpec& spec, const SweepResult& r);
json summarize_dense(const SweepSpec& spec, const SweepResult& r);
json summarize_value(const SweepSpec& spec, const SweepResult& r);
json summarize_regret(const SweepSpec& spec, const SweepResult& r);
json summarize_robust(const SweepSpec& spec, const SweepResult& r);
json summarize_structured(const SweepSpec& spec, const SweepResult& r);
json summarize_belief(const SweepSpec& spec, const SweepResult& r);

} // namespace saclab::detail
