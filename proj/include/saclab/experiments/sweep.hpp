#pragma once
// Sweep specifications and results shared by every experiment.
//
// A sweep is the sorted product of its grid (keys alphabetical, first key
// slowest) times trials_per_cell. Trial seeds are derive_seed(master, cell,
// trial), so any row can be regenerated on its own.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "saclab/solvers.hpp"

namespace saclab {

enum class Experiment { rate, phase, dense, value, regret, robust, group, hierarchy, pomdp };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);  // throws ConfigError

struct SweepSpec {
    Experiment experiment = Experiment::rate;
    std::map<std::string, std::vector<double>> grid;
    std::size_t trials_per_cell = 1;
    std::uint64_t master_seed = 0;
    SolverConfig solver;
    /// Fixed settings; numeric keys may also appear in the grid (the grid wins).
    nlohmann::json params = nlohmann::json::object();
    std::string output_path;   // CSV, optional
    std::string summary_path;  // JSON, optional
};

/// Every problem with a JSON-pointer path; empty when the spec can run.
std::vector<std::string> validate(const SweepSpec& spec);
SweepSpec sweep_spec_from_json(const nlohmann::json& j, std::vector<std::string>& errs);
nlohmann::json to_json(const SweepSpec& spec);

/// Resolved value of a numeric setting in one cell: grid, then params, then default.
class CellParams {
public:
    CellParams(const SweepSpec& spec, const std::vector<std::string>& keys, const std::vector<double>& values,
               std::size_t trial = 0);
    double num(std::string_view key) const;
    std::size_t count(std::string_view key) const;  // num() as a non-negative integer
    std::string str(std::string_view key) const;
    /// Trial index within the cell; lets a runner pair trials across cells.
    std::size_t trial() const { return trial_; }

private:
    const SweepSpec* spec_;
    const std::vector<std::string>* keys_;
    const std::vector<double>* values_;
    std::size_t trial_;
};

struct SweepRow {
    std::size_t cell = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::vector<double> values;  // aligned with SweepResult::columns
};

struct SweepResult {
    Experiment experiment = Experiment::rate;
    std::vector<std::string> grid_keys;
    std::vector<std::vector<double>> cells;  // grid values per cell, in grid_keys order
    std::vector<std::string> columns;
    std::vector<SweepRow> rows;  // cell-major, then trial
    nlohmann::json summary;

    std::size_t column(std::string_view name) const;  // throws InvalidInput
    bool has_column(std::string_view name) const;
    double grid_value(std::size_t cell, std::string_view key) const;
    /// Column values of one cell's rows, in trial order.
    std::vector<double> cell_values(std::size_t cell, std::string_view col) const;
};

/// Dispatches on spec.experiment; validates first and throws ConfigError with every problem.
SweepResult run_sweep(const SweepSpec& spec);

/// CSV with a comment header (version, resolved spec, cell order), one line per row.
std::string sweep_csv(const SweepSpec& spec, const SweepResult& result);
/// Writes the CSV and summary to the paths set in the spec (each only if set).
void write_sweep(const SweepSpec& spec, const SweepResult& result);

/// Cone-condition bookkeeping over rows that carry the cone columns.
struct ConeAudit {
    std::size_t applicable = 0;  // converged rows with lambda >= 2 * grad_supnorm
    std::size_t violations = 0;  // of those, cone_ratio > 3 + 1e-6
};
ConeAudit cone_audit(const SweepResult& result);

} // namespace saclab
