#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ltcl/harness.hpp"

namespace ltcl {

/// RunRecord as JSON. Wall-clock time is left out so that identical runs
/// serialize to identical bytes.
std::string summary_json(const RunRecord& record);

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void write_losses_csv(std::ostream& out, const std::vector<StepLog>& rows);
void write_weight_norms_csv(std::ostream& out, const std::vector<WeightNormRow>& rows);
void write_scores_csv(std::ostream& out, const std::vector<TaskScores>& scores);

/// Writes summary.json, metrics.csv, losses.csv, buffer_audit.csv,
/// weight_norms.csv and timing.json into `dir`, creating it if needed.
void write_run(const RunOutput& run, const std::filesystem::path& dir);

}  // namespace ltcl
