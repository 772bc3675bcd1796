#pragma once
// One runner per experiment kind. Each checks spec.experiment, runs every
// (cell, trial) and fills the summary from the rows alone.

#include "saclab/experiments/sweep.hpp"

namespace saclab {

SweepResult run_rate_sweep(const SweepSpec& spec);
SweepResult run_phase_transition(const SweepSpec& spec);
SweepResult run_dense_baseline(const SweepSpec& spec);
SweepResult run_value_gap(const SweepSpec& spec);
SweepResult run_online_regret(const SweepSpec& spec);
SweepResult run_robustness(const SweepSpec& spec);
/// experiment = group or hierarchy.
SweepResult run_structured(const SweepSpec& spec);
SweepResult run_belief_experiments(const SweepSpec& spec);

/// Summaries recomputed from rows; the runners call these.
nlohmann::json summarize(const SweepSpec& spec, const SweepResult& result);

} // namespace saclab
