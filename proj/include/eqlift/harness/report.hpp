// SPDX-License-Identifier: Apache-2.0
#pragma once

// Result tables: rows are model x regime, columns Original/Rotated under
// Protocol 1 and Protocol 2. Serialized as CSV (full precision, re-readable)
// and as aligned text / markdown for reading.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eqlift/metrics.hpp"

namespace eqlift::harness {

struct TableRow {
  std::string label;  // e.g. "vanilla+aug", "hybrid2"
  metrics::MetricReport original;
  metrics::MetricReport rotated;
};

enum class Column { original_p1, rotated_p1, original_p2, rotated_p2 };
inline constexpr Column kColumns[] = {Column::original_p1, Column::rotated_p1, Column::original_p2,
                                      Column::rotated_p2};

inline const char* column_title(Column c) {
  switch (c) {
    case Column::original_p1: return "Original P1";
    case Column::rotated_p1: return "Rotated P1";
    case Column::original_p2: return "Original P2";
    case Column::rotated_p2: return "Rotated P2";
  }
  return "?";
}

inline metrics::MeanStd cell(const TableRow& r, Column c) {
  switch (c) {
    case Column::original_p1: return {r.original.protocol1_mean, r.original.protocol1_std};
    case Column::rotated_p1: return {r.rotated.protocol1_mean, r.rotated.protocol1_std};
    case Column::original_p2: return {r.original.protocol2_mean, r.original.protocol2_std};
    case Column::rotated_p2: return {r.rotated.protocol2_mean, r.rotated.protocol2_std};
  }
  return {};
}

inline std::string fmt_double(double v, int precision = 17) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

inline std::string fmt_fixed(double v, int decimals = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

inline std::string join_values(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt_double(v[i]);
  return s;
}

inline std::vector<double> split_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';'))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

inline constexpr const char* kCsvHeader =
    "row,seeds,samples,original_p1_mean,original_p1_std,rotated_p1_mean,rotated_p1_std,"
    "original_p2_mean,original_p2_std,rotated_p2_mean,rotated_p2_std,"
    "original_p1_per_seed,rotated_p1_per_seed,original_p2_per_seed,rotated_p2_per_seed";

inline void write_csv(const std::vector<TableRow>& rows, std::ostream& os) {
  os << kCsvHeader << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
  for (const auto& r : rows) {
    os << r.label << ',' << std::max<std::size_t>(1, r.original.per_seed_protocol1.size()) << ','
       << r.original.sample_count << ',' << fmt_double(r.original.protocol1_mean) << ','
       << opt(r.original.protocol1_std) << ',' << fmt_double(r.rotated.protocol1_mean) << ','
       << opt(r.rotated.protocol1_std) << ',' << fmt_double(r.original.protocol2_mean) << ','
       << opt(r.original.protocol2_std) << ',' << fmt_double(r.rotated.protocol2_mean) << ','
       << opt(r.rotated.protocol2_std) << ',' << join_values(r.original.per_seed_protocol1) << ','
       << join_values(r.rotated.per_seed_protocol1) << ',' << join_values(r.original.per_seed_protocol2) << ','
       << join_values(r.rotated.per_seed_protocol2) << '\n';
  }
}

inline std::vector<TableRow> read_csv(std::istream& is, const std::string& source) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) {
    throw ParseError(source + ":1: unexpected CSV header", 1);
  }
  std::vector<TableRow> rows;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 15) throw ParseError(source + ":" + std::to_string(line_no) + ": expected 15 fields", line_no);
    try {
      auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<double>(std::stod(s)); };
      TableRow r;
      r.label = f[0];
      r.original.split = "original";
      r.rotated.split = "rotated";
      r.original.sample_count = r.rotated.sample_count = std::stoul(f[2]);
      r.original.protocol1_mean = std::stod(f[3]);
      r.original.protocol1_std = opt(f[4]);
      r.rotated.protocol1_mean = std::stod(f[5]);
      r.rotated.protocol1_std = opt(f[6]);
      r.original.protocol2_mean = std::stod(f[7]);
      r.original.protocol2_std = opt(f[8]);
      r.rotated.protocol2_mean = std::stod(f[9]);
      r.rotated.protocol2_std = opt(f[10]);
      r.original.per_seed_protocol1 = split_values(f[11]);
      r.rotated.per_seed_protocol1 = split_values(f[12]);
      r.original.per_seed_protocol2 = split_values(f[13]);
      r.rotated.per_seed_protocol2 = split_values(f[14]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": bad numeric field", line_no);
    }
  }
  return rows;
}

inline std::string format_cell(const metrics::MeanStd& v) {
  return v.std ? fmt_fixed(v.mean) + " ± " + fmt_fixed(*v.std) : fmt_fixed(v.mean);
}

inline void write_text_table(const std::vector<TableRow>& rows, std::ostream& os) {
  std::size_t label_w = 5;
  for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
  os << std::left << std::setw(static_cast<int>(label_w)) << "Model";
  for (auto c : kColumns) os << "  " << std::setw(16) << column_title(c);
  os << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(label_w)) << r.label;
    for (auto c : kColumns) {
      // setw counts bytes; "±" is two bytes in UTF-8.
      const std::string s = format_cell(cell(r, c));
      const int pad = 16 + (s.find("±") != std::string::npos ? 1 : 0);
      os << "  " << std::setw(pad) << s;
    }
    os << '\n';
  }
}

enum class Rank { none, best, second };

// Per column, lower is better. Ties share a rank; the second-best rank goes
// to the next distinct value.
inline std::vector<std::vector<Rank>> rank_cells(const std::vector<TableRow>& rows) {
  std::vector<std::vector<Rank>> ranks(rows.size(), std::vector<Rank>(std::size(kColumns), Rank::none));
  for (std::size_t c = 0; c < std::size(kColumns); ++c) {
    std::vector<double> vals;
    for (const auto& r : rows) vals.push_back(cell(r, kColumns[c]).mean);
    std::vector<double> distinct = vals;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!distinct.empty() && vals[i] == distinct[0]) ranks[i][c] = Rank::best;
      else if (distinct.size() > 1 && vals[i] == distinct[1]) ranks[i][c] = Rank::second;
    }
  }
  return ranks;
}

struct OrderingCheck {
  std::string description;
  bool holds = false;
  bool conclusive = false;  // holds with >= 5% relative margin
};

// Rotated-test Protocol 1 orderings: vanilla+aug <= equi <= vanilla and
// hybrid+aug <= hybrid. Only emitted when all rows involved are present.
inline std::vector<OrderingCheck> ordering_checks(const std::vector<TableRow>& rows, double margin = 0.05) {
  std::map<std::string, double> rot;
  for (const auto& r : rows) rot[r.label] = r.rotated.protocol1_mean;
  std::vector<OrderingCheck> out;
  auto check = [&](const std::string& better, const std::string& worse) {
    if (!rot.count(better) || !rot.count(worse)) return;
    OrderingCheck c;
    c.description = better + " <= " + worse;
    c.holds = rot[better] <= rot[worse];
    c.conclusive = rot[better] * (1.0 + margin) <= rot[worse];
    out.push_back(c);
  };
  check("vanilla+aug", "equi");
  check("equi", "vanilla");
  check("hybrid+aug", "hybrid");
  return out;
}

inline void write_markdown(const std::vector<TableRow>& rows, std::ostream& os) {
  const auto ranks = rank_cells(rows);
  os << "| Model |";
  for (auto c : kColumns) os << ' ' << column_title(c) << " |";
  os << "\n|---|";
  for (std::size_t c = 0; c < std::size(kColumns); ++c) os << "---|";
  os << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << "| " << rows[i].label << " |";
    for (std::size_t c = 0; c < std::size(kColumns); ++c) {
      const std::string s = format_cell(cell(rows[i], kColumns[c]));
      if (ranks[i][c] == Rank::best) os << " **" << s << "** |";
      else if (ranks[i][c] == Rank::second) os << " <u>" << s << "</u> |";
      else os << ' ' << s << " |";
    }
    os << '\n';
  }
  os << "\nLower is better; **bold** = best, <u>underlined</u> = second best.\n";
  const auto checks = ordering_checks(rows);
  if (!checks.empty()) {
    os << "\nRotated P1 ordering:\n\n";
    for (const auto& c : checks) {
      os << "- " << c.description << ": " << (c.holds ? (c.conclusive ? "holds" : "holds (inconclusive, margin < 5%)") : "violated")
         << '\n';
    }
  }
}

}  // namespace eqlift::harness
