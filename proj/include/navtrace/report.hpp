#pragma once
/**
 * @file report.hpp
 * @brief Machine-readable and SVG renderings of an EvaluationReport.
 */
#include "navtrace/evaluate.hpp"
#include "navtrace/io.hpp"

#include <filesystem>
#include <vector>

namespace navtrace {

/// Aggregates first, then the raw per-frame records they derive from.
io::Json encode(const EvaluationReport& report);

/// Human-readable summary tables, one analysis per block.
std::string format_tables(const EvaluationReport& report);

/// Writes reprojection.svg, precision.svg, latency.svg and targets.svg into
/// `dir` (created if missing) and returns their paths.
std::vector<std::filesystem::path> write_plots(const EvaluationReport& report,
                                               const std::filesystem::path& dir);

}  // namespace navtrace
