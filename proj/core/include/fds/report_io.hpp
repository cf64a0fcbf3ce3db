#pragma once

#include <filesystem>
#include <string>

#include "fds/metrics.hpp"
#include "fds/trainer.hpp"

namespace fds {

/// Stable JSON rendering (sorted keys, round-trip doubles).
std::string report_to_json(const MetricReport& report, double threshold);
MetricReport report_from_json(const std::string& text);

/// Long-format CSV: scope,metric,value.
std::string report_to_csv(const MetricReport& report);

/// ROC curve as a standalone SVG document.
std::string roc_to_svg(const AnomalyStats& anomaly);

/// One JSON object per line.
std::string to_jsonl(const IterationRecord& record);
std::string to_jsonl(const EvalSnapshot& snapshot);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace fds
