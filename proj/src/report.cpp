#include "unir/report.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "unir/error.hpp"

namespace unir {

namespace {

std::string recall_metric(std::size_t k) { return "R@" + std::to_string(k); }

void append_rows(std::vector<ReportRow>& rows, ReportInput in) {
  if (in.report) {
    for (const auto& [key, row] : in.report->per_dataset) {
      for (const auto& [k, r] : row.recall) rows.push_back({key.dataset, std::string(task_name(key.task)), recall_metric(k), r, {}});
      rows.push_back({key.dataset, std::string(task_name(key.task)), "primary", row.primary(), {}});
    }
    for (const auto& [k, r] : in.report->average) rows.push_back({"average", "all", recall_metric(k), r, {}});
    rows.push_back({"average", "all", "primary", in.report->average_primary, {}});
  }
  if (in.errors) {
    rows.push_back({"all", "all", "wrong_modality", in.errors->wrong_modality, {}});
    rows.push_back({"all", "all", "wrong_domain", in.errors->wrong_domain, {}});
    rows.push_back({"all", "all", "other", in.errors->other, {}});
  }
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * v;
  return os.str();
}

std::string signed_percent(double v) {
  std::string s = percent(v);
  return (v >= 0 ? "+" : "") + s;
}

std::string render_text(const std::vector<ReportRow>& rows) {
  // Pivot recall rows into one line per (dataset, task).
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::map<std::string, const ReportRow*>> cells;
  std::vector<std::string> metrics;
  std::set<std::size_t> ks;
  std::vector<const ReportRow*> errors;
  for (const auto& r : rows) {
    if (r.dataset == "all") {
      errors.push_back(&r);
      continue;
    }
    auto key = std::make_pair(r.dataset, r.task);
    if (!cells.count(key)) keys.push_back(key);
    cells[key][r.metric] = &r;
    if (r.metric.starts_with("R@")) ks.insert(std::stoul(r.metric.substr(2)));
  }
  for (std::size_t k : ks) metrics.push_back(recall_metric(k));
  metrics.push_back("primary");

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header = {"dataset", "task"};
  header.insert(header.end(), metrics.begin(), metrics.end());
  table.push_back(header);
  for (const auto& key : keys) {
    std::vector<std::string> line = {key.first, key.second};
    for (const auto& m : metrics) {
      auto it = cells[key].find(m);
      if (it == cells[key].end()) {
        line.emplace_back("-");
        continue;
      }
      std::string cell = percent(it->second->value);
      if (it->second->delta) cell += " (" + signed_percent(*it->second->delta) + ")";
      line.push_back(cell);
    }
    table.push_back(line);
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : table)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::ostringstream os;
  if (keys.empty()) table.clear();
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) os << "  ";
      os << std::setw(static_cast<int>(width[c])) << (c < 2 ? std::left : std::right) << line[c];
    }
    os << '\n';
  }
  if (!errors.empty()) {
    if (!keys.empty()) os << '\n';
    os << "error type        share of failures\n";
    for (const auto* e : errors) {
      os << std::setw(16) << std::left << e->metric << "  " << std::setw(6) << std::right << percent(e->value) << "%";
      if (e->delta) os << " (" << signed_percent(*e->delta) << ")";
      os << '\n';
    }
  }
  return os.str();
}

std::string render_json(const std::vector<ReportRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json obj = {{"dataset", r.dataset}, {"task", r.task}, {"metric", r.metric}, {"value", r.value}};
    if (r.delta) obj["delta"] = *r.delta;
    arr.push_back(obj);
  }
  return nlohmann::json{{"rows", arr}}.dump(2) + "\n";
}

}  // namespace

ReportFormat parse_report_format(std::string_view s) {
  if (s == "text" || s == "text-table") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw Error(ErrorCode::UnknownFormat, "unknown report format '" + std::string(s) + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<ReportRow> report_rows(ReportInput run, std::optional<ReportInput> baseline) {
  std::vector<ReportRow> rows;
  append_rows(rows, run);
  if (baseline) {
    std::vector<ReportRow> base;
    append_rows(base, *baseline);
    return with_baseline(std::move(rows), base);
  }
  return rows;
}

std::vector<ReportRow> with_baseline(std::vector<ReportRow> rows, const std::vector<ReportRow>& baseline) {
  std::map<std::tuple<std::string, std::string, std::string>, double> lookup;
  for (const auto& b : baseline) lookup[{b.dataset, b.task, b.metric}] = b.value;
  for (auto& r : rows) {
    r.delta.reset();
    if (auto it = lookup.find({r.dataset, r.task, r.metric}); it != lookup.end()) r.delta = r.value - it->second;
  }
  return rows;
}

std::string render_rows(const std::vector<ReportRow>& rows, ReportFormat format) {
  switch (format) {
    case ReportFormat::Text: return render_text(rows);
    case ReportFormat::Csv: return rows_to_csv(rows);
    case ReportFormat::Json: return render_json(rows);
  }
  throw Error(ErrorCode::UnknownFormat, "unknown report format");
}

std::string rows_to_csv(const std::vector<ReportRow>& rows) {
  bool with_delta = false;
  for (const auto& r : rows) with_delta |= r.delta.has_value();
  std::ostringstream os;
  os << "dataset,task,metric,value" << (with_delta ? ",delta" : "") << '\n';
  for (const auto& r : rows) {
    os << r.dataset << ',' << r.task << ',' << r.metric << ',' << format_double(r.value);
    if (with_delta) os << ',' << (r.delta ? format_double(*r.delta) : "");
    os << '\n';
  }
  return os.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("dataset,task,metric,value"))
    throw Error(ErrorCode::MalformedRecord, "report CSV header missing");
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() < 4) throw Error(ErrorCode::MalformedRecord, "report CSV row too short: " + line);
    ReportRow r{f[0], f[1], f[2], std::stod(f[3]), {}};
    if (f.size() > 4 && !f[4].empty()) r.delta = std::stod(f[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_report(ReportInput run, ReportFormat format, std::optional<ReportInput> baseline) {
  return render_rows(report_rows(run, baseline), format);
}

void write_report(const std::filesystem::path& path, ReportInput run, ReportFormat format,
                  std::optional<ReportInput> baseline) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << render_report(run, format, baseline);
}

}  // namespace unir
