#include "pwer/report_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "pwer/error.hpp"

namespace pwer::report {
namespace {

using nlohmann::json;

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double parse_double(const std::string& s, int line) {
  if (s == "inf") return mvdist::kInf;
  if (s == "-inf") return -mvdist::kInf;
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

template <class T>
T parse_int(const std::string& s, int line) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("line " + std::to_string(line) + ": not an integer: '" + s + "'");
  }
  return v;
}

// Calls f(fields, line number) for every data row after checking the header.
template <class F>
void for_each_row(std::string_view text, const std::vector<std::string>& header, F&& f) {
  std::istringstream in{std::string(text)};
  std::string line;
  int no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!seen_header) {
      if (fields.size() < header.size() ||
          !std::equal(header.begin(), header.end(), fields.begin())) {
        throw ConfigError("line " + std::to_string(no) + ": unexpected header");
      }
      seen_header = true;
      continue;
    }
    f(fields, no);
  }
  if (!seen_header) throw ConfigError("missing header");
}

std::string jsonl(const std::vector<json>& objects) {
  std::string out;
  for (const auto& o : objects) out += o.dump() + "\n";
  return out;
}

json number(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? json("nan") : json(x > 0 ? "inf" : "-inf");
}

const std::vector<std::string> kSummaryHeader = {"metric", "m", "N", "n", "mean", "sd", "min",
                                                 "q1", "med", "q3", "max"};
const std::vector<std::string> kReportHeader = {"quantity", "label", "value"};
const std::vector<std::string> kLfcHeader = {"replicate", "boundary", "pwer_theta", "pwer_zero",
                                             "diff", "se_diff", "violation"};

}  // namespace

std::string sig6(double x) {
  if (!std::isfinite(x)) return full(x);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string full(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string summary_table(const std::vector<SummaryRow>& rows, Format format) {
  if (format == Format::Jsonl) {
    std::vector<json> objs;
    for (const auto& r : rows) {
      const auto& s = r.stats;
      objs.push_back({{"metric", r.metric}, {"m", r.m}, {"N", r.N}, {"n", s.n},
                      {"mean", number(s.mean)}, {"sd", number(s.sd)}, {"min", number(s.min)},
                      {"q1", number(s.q1)}, {"med", number(s.median)}, {"q3", number(s.q3)},
                      {"max", number(s.max)}});
    }
    return jsonl(objs);
  }
  std::ostringstream os;
  for (std::size_t k = 0; k < kSummaryHeader.size(); ++k) os << (k ? "," : "") << kSummaryHeader[k];
  os << "\n";
  for (const auto& r : rows) {
    const auto& s = r.stats;
    os << quote(r.metric) << "," << r.m << "," << r.N << "," << s.n << "," << sig6(s.mean) << "," << sig6(s.sd)
       << "," << sig6(s.min) << "," << sig6(s.q1) << "," << sig6(s.median) << "," << sig6(s.q3)
       << "," << sig6(s.max) << "\n";
  }
  return os.str();
}

std::vector<SummaryRow> parse_summary_csv(std::string_view text) {
  std::vector<SummaryRow> rows;
  for_each_row(text, kSummaryHeader, [&](const std::vector<std::string>& f, int line) {
    if (f.size() != kSummaryHeader.size()) {
      throw ConfigError("line " + std::to_string(line) + ": expected " +
                        std::to_string(kSummaryHeader.size()) + " fields");
    }
    SummaryRow r;
    r.metric = f[0];
    r.m = parse_int<int>(f[1], line);
    r.N = parse_int<Count>(f[2], line);
    r.stats.n = parse_int<std::size_t>(f[3], line);
    r.stats.mean = parse_double(f[4], line);
    r.stats.sd = parse_double(f[5], line);
    r.stats.min = parse_double(f[6], line);
    r.stats.q1 = parse_double(f[7], line);
    r.stats.median = parse_double(f[8], line);
    r.stats.q3 = parse_double(f[9], line);
    r.stats.max = parse_double(f[10], line);
    rows.push_back(std::move(r));
  });
  return rows;
}

std::string rep_dump(const std::vector<sim::RepRecord>& records, Format format) {
  std::size_t width = 0;
  for (const auto& r : records) width = std::max(width, r.boundary.size());
  if (format == Format::Jsonl) {
    std::vector<json> objs;
    for (const auto& r : records) {
      json b = json::array();
      for (double c : r.boundary) b.push_back(number(c));
      objs.push_back({{"replicate", r.replicate}, {"true_pwer", r.true_pwer},
                      {"max_swer", r.max_swer}, {"mean_swer", r.mean_swer},
                      {"mc_error", r.mc_error}, {"had_empty_stratum", r.had_empty_stratum},
                      {"counts_digest", r.counts_digest}, {"boundary", b}});
    }
    return jsonl(objs);
  }
  std::ostringstream os;
  os << "replicate,true_pwer,max_swer,mean_swer,mc_error,had_empty_stratum,counts_digest";
  for (std::size_t k = 0; k < width; ++k) os << ",boundary_" << k + 1;
  os << "\n";
  for (const auto& r : records) {
    os << r.replicate << "," << full(r.true_pwer) << "," << full(r.max_swer) << ","
       << full(r.mean_swer) << "," << full(r.mc_error) << "," << (r.had_empty_stratum ? 1 : 0)
       << "," << r.counts_digest;
    for (std::size_t k = 0; k < width; ++k) {
      os << ",";
      if (k < r.boundary.size()) os << full(r.boundary[k]);
    }
    os << "\n";
  }
  return os.str();
}

std::vector<sim::RepRecord> parse_rep_dump_csv(std::string_view text) {
  const std::vector<std::string> header = {"replicate", "true_pwer", "max_swer", "mean_swer",
                                           "mc_error", "had_empty_stratum", "counts_digest"};
  std::vector<sim::RepRecord> out;
  for_each_row(text, header, [&](const std::vector<std::string>& f, int line) {
    if (f.size() < header.size()) throw ConfigError("line " + std::to_string(line) + ": too few fields");
    sim::RepRecord r;
    r.replicate = parse_int<std::uint64_t>(f[0], line);
    r.true_pwer = parse_double(f[1], line);
    r.max_swer = parse_double(f[2], line);
    r.mean_swer = parse_double(f[3], line);
    r.mc_error = parse_double(f[4], line);
    r.had_empty_stratum = parse_int<int>(f[5], line) != 0;
    r.counts_digest = parse_int<std::uint64_t>(f[6], line);
    for (std::size_t k = header.size(); k < f.size(); ++k) {
      if (!f[k].empty()) r.boundary.push_back(parse_double(f[k], line));
    }
    out.push_back(std::move(r));
  });
  return out;
}

RateRows rate_rows(const control::ErrorRateReport& rates) {
  RateRows out;
  auto floor = [&](double v) {
    if (std::abs(v) < kRateFloor) {
      ++out.floored;
      return 0.0;
    }
    return v;
  };
  out.rows.push_back({"pwer", "", floor(rates.pwer)});
  out.rows.push_back({"max_swer", "", floor(rates.max_swer)});
  out.rows.push_back({"mean_swer", "", floor(rates.mean_swer)});
  out.rows.push_back({"numerical_error", "", rates.numerical_error});
  for (const auto& [j, v] : rates.swer) out.rows.push_back({"swer", j.to_string(), floor(v)});
  return out;
}

std::vector<ReportRow> critical_rows(const control::CriticalValueResult& r) {
  std::vector<ReportRow> rows;
  rows.push_back({"mode", control::to_string(r.mode), static_cast<double>(r.mode)});
  rows.push_back({"alpha", "", r.alpha});
  if (r.boundary.size() == 1) {
    rows.push_back({"boundary", "", r.boundary[0]});
  } else {
    for (std::size_t i = 0; i < r.boundary.size(); ++i) {
      rows.push_back({"boundary", "population " + std::to_string(i + 1), r.boundary[i]});
    }
  }
  if (r.c_hat) rows.push_back({"c_hat", "", *r.c_hat});
  if (r.c_min) rows.push_back({"c_min", "", *r.c_min});
  rows.push_back({"achieved", "", r.achieved});
  rows.push_back({"numerical_error", "", r.numerical_error});
  rows.push_back({"iterations", "", static_cast<double>(r.iterations)});
  rows.push_back({"bracket_lo", "", r.bracket_lo});
  rows.push_back({"bracket_hi", "", r.bracket_hi});
  return rows;
}

std::string report_table(const std::vector<ReportRow>& rows, Format format) {
  if (format == Format::Jsonl) {
    std::vector<json> objs;
    for (const auto& r : rows) {
      objs.push_back({{"quantity", r.quantity}, {"label", r.label}, {"value", number(r.value)}});
    }
    return jsonl(objs);
  }
  std::ostringstream os;
  os << "quantity,label,value\n";
  for (const auto& r : rows) os << quote(r.quantity) << "," << quote(r.label) << "," << full(r.value) << "\n";
  return os.str();
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  for_each_row(text, kReportHeader, [&](const std::vector<std::string>& f, int line) {
    if (f.size() != 3) throw ConfigError("line " + std::to_string(line) + ": expected 3 fields");
    rows.push_back({f[0], f[1], parse_double(f[2], line)});
  });
  return rows;
}

std::string lfc_table(const sim::LfcReport& report, Format format) {
  if (format == Format::Jsonl) {
    std::vector<json> objs;
    for (const auto& d : report.designs) {
      objs.push_back({{"replicate", d.replicate}, {"boundary", d.boundary},
                      {"pwer_theta", d.pwer_theta}, {"pwer_zero", d.pwer_zero}, {"diff", d.diff},
                      {"se_diff", d.se_diff}, {"violation", d.violation}});
    }
    return jsonl(objs);
  }
  std::ostringstream os;
  for (std::size_t k = 0; k < kLfcHeader.size(); ++k) os << (k ? "," : "") << kLfcHeader[k];
  os << "\n";
  for (const auto& d : report.designs) {
    os << d.replicate << "," << full(d.boundary) << "," << full(d.pwer_theta) << ","
       << full(d.pwer_zero) << "," << full(d.diff) << "," << full(d.se_diff) << ","
       << (d.violation ? 1 : 0) << "\n";
  }
  return os.str();
}

std::vector<sim::LfcDesign> parse_lfc_csv(std::string_view text) {
  std::vector<sim::LfcDesign> out;
  for_each_row(text, kLfcHeader, [&](const std::vector<std::string>& f, int line) {
    if (f.size() != kLfcHeader.size()) throw ConfigError("line " + std::to_string(line) + ": expected 7 fields");
    sim::LfcDesign d;
    d.replicate = parse_int<std::uint64_t>(f[0], line);
    d.boundary = parse_double(f[1], line);
    d.pwer_theta = parse_double(f[2], line);
    d.pwer_zero = parse_double(f[3], line);
    d.diff = parse_double(f[4], line);
    d.se_diff = parse_double(f[5], line);
    d.violation = parse_int<int>(f[6], line) != 0;
    out.push_back(d);
  });
  return out;
}

std::string empty_stratum_dump(const sim::EmptyStratumStudy& study, Format format) {
  if (format == Format::Jsonl) {
    std::vector<json> objs;
    for (const auto& r : study.records) {
      objs.push_back({{"replicate", r.replicate}, {"c_hat", r.c_hat}, {"c_min", r.c_min},
                      {"true_pwer", r.unadjusted.pwer}, {"max_swer", r.unadjusted.max_swer},
                      {"mean_swer", r.unadjusted.mean_swer}, {"true_pwer_adj", r.adjusted.pwer},
                      {"max_swer_adj", r.adjusted.max_swer},
                      {"mean_swer_adj", r.adjusted.mean_swer}});
    }
    return jsonl(objs);
  }
  std::ostringstream os;
  os << "replicate,c_hat,c_min,true_pwer,max_swer,mean_swer,true_pwer_adj,max_swer_adj,mean_swer_adj\n";
  for (const auto& r : study.records) {
    os << r.replicate << "," << full(r.c_hat) << "," << full(r.c_min) << ","
       << full(r.unadjusted.pwer) << "," << full(r.unadjusted.max_swer) << ","
       << full(r.unadjusted.mean_swer) << "," << full(r.adjusted.pwer) << ","
       << full(r.adjusted.max_swer) << "," << full(r.adjusted.mean_swer) << "\n";
  }
  return os.str();
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move output into place at " + path.string());
  }
}

}  // namespace pwer::report
