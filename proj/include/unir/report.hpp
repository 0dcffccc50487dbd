#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unir/eval.hpp"

namespace unir {

enum class ReportFormat { Text, Csv, Json };

ReportFormat parse_report_format(std::string_view s);  // throws UnknownFormat

struct ReportRow {
  std::string dataset;
  std::string task;
  std::string metric;
  double value = 0.0;
  std::optional<double> delta;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportInput {
  const EvalReport* report = nullptr;
  const ErrorBreakdown* errors = nullptr;
};

// Flat rows in stable order: per (task, dataset) recall columns, then the
// averages, then the error taxonomy. With a baseline, each row carries
// value - baseline value.
std::vector<ReportRow> report_rows(ReportInput run, std::optional<ReportInput> baseline = std::nullopt);

// Rows with delta = value - matching baseline value; unmatched rows get none.
std::vector<ReportRow> with_baseline(std::vector<ReportRow> rows, const std::vector<ReportRow>& baseline);
std::string render_rows(const std::vector<ReportRow>& rows, ReportFormat format);

std::string render_report(ReportInput run, ReportFormat format, std::optional<ReportInput> baseline = std::nullopt);
void write_report(const std::filesystem::path& path, ReportInput run, ReportFormat format,
                  std::optional<ReportInput> baseline = std::nullopt);

std::string rows_to_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& csv);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace unir
