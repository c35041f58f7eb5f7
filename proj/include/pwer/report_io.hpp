#pragma once

// Tabular output of reports, summaries and per-replicate dumps, with parsers
// that read the emitted CSV back.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pwer/control.hpp"
#include "pwer/sim.hpp"

namespace pwer::report {

enum class Format { Csv, Jsonl };

/// 6 significant digits, used in summary tables.
std::string sig6(double x);
/// Shortest form that parses back to the same double.
std::string full(double x);

/// One row of a summary table.
struct SummaryRow {
  std::string metric;
  int m = 0;
  Count N = 0;
  sim::SummaryStats stats;
};

std::string summary_table(const std::vector<SummaryRow>& rows, Format format);
/// Reads back a CSV summary table (values at the printed precision).
std::vector<SummaryRow> parse_summary_csv(std::string_view text);

/// Per-replicate dump at full precision.
std::string rep_dump(const std::vector<sim::RepRecord>& records, Format format);
std::vector<sim::RepRecord> parse_rep_dump_csv(std::string_view text);

/// Long-format report row: quantity, optional label, value.
struct ReportRow {
  std::string quantity;
  std::string label;  // stratum, population or mode name
  double value = 0.0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// Rates below this are written as 0.
inline constexpr double kRateFloor = 1e-14;

struct RateRows {
  std::vector<ReportRow> rows;
  int floored = 0;
};

RateRows rate_rows(const control::ErrorRateReport& rates);
std::vector<ReportRow> critical_rows(const control::CriticalValueResult& result);

std::string report_table(const std::vector<ReportRow>& rows, Format format);
std::vector<ReportRow> parse_report_csv(std::string_view text);

std::string lfc_table(const sim::LfcReport& report, Format format);
std::vector<sim::LfcDesign> parse_lfc_csv(std::string_view text);

std::string empty_stratum_dump(const sim::EmptyStratumStudy& study, Format format);

/// Writes to a temporary file next to `path` and renames it into place, so
/// `path` never holds partial output.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits one CSV line; fields may be double-quoted.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace pwer::report
