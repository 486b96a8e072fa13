#pragma once

#include "riverpilot/metrics.hpp"
#include "riverpilot/service.hpp"

#include "json.hpp"

#include <filesystem>
#include <vector>

namespace riverpilot::pipeline {

/// Everything one log contributes except the cohort-normalized columns.
analytics::MetricsRow team_metrics(const service::ServiceSession& s);

/// Fills normalized attempts, growth slope and the dependent columns from
/// the cohort. Cells that cannot be computed become NaN.
void normalize_cohort(std::vector<analytics::MetricsRow>& rows);

struct Report {
  std::vector<analytics::MetricsRow> rows;  // ordered by team id
  nlohmann::json stats;
};

/// Replays every *.jsonl under `logs` and computes the report.
Report analyze_logs(const std::filesystem::path& logs);

/// Writes metrics.csv and stats.json.
void write_report(const Report& r, const std::filesystem::path& out_dir);

}  // namespace riverpilot::pipeline
