#include "surpnov/records_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <tuple>

#include "surpnov/error.hpp"

namespace surpnov {

std::string escape_tsv(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (char c : field) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_tsv(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] != '\\' || i + 1 == field.size()) {
      out.push_back(field[i]);
      continue;
    }
    switch (field[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(field[i]);
    }
  }
  return out;
}

std::string to_tsv_row(const SurprisalRecord& rec) {
  char num[40];
  std::snprintf(num, sizeof num, "%.17g", rec.surprisal);
  std::string row;
  row += escape_tsv(rec.item_id) + '\t';
  row += std::to_string(rec.target_index) + '\t';
  row += escape_tsv(rec.surface) + '\t';
  row += std::string(to_string(rec.method)) + '\t';
  row += escape_tsv(rec.model_id) + '\t';
  row += std::string(to_string(rec.correction)) + '\t';
  row += std::string(num) + '\t';
  row += std::to_string(rec.span.first) + '\t';
  row += std::to_string(rec.span.last) + '\t';
  row += std::to_string(rec.span.leakage);
  return row;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::size_t parse_index(std::string_view text, const std::string& where) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ReportError(where + ": expected a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return value;
}

}  // namespace

SurprisalRecord parse_tsv_row(std::string_view line, std::size_t line_no) {
  const std::string where = "records line " + std::to_string(line_no);
  const auto fields = split_tabs(line);
  if (fields.size() != 10) {
    throw ReportError(where + ": expected 10 columns, found " + std::to_string(fields.size()));
  }
  SurprisalRecord rec;
  try {
    rec.item_id = unescape_tsv(fields[0]);
    rec.target_index = parse_index(fields[1], where);
    rec.surface = unescape_tsv(fields[2]);
    rec.method = parse_method(fields[3]);
    rec.model_id = unescape_tsv(fields[4]);
    rec.correction = parse_correction(fields[5]);
    const std::string num(fields[6]);
    std::size_t used = 0;
    rec.surprisal = std::stod(num, &used);
    if (used != num.size()) throw ReportError("bad surprisal '" + num + "'");
    rec.span.first = parse_index(fields[7], where);
    rec.span.last = parse_index(fields[8], where);
    rec.span.leakage = parse_index(fields[9], where);
  } catch (const ReportError&) {
    throw;
  } catch (const std::exception& e) {
    throw ReportError(where + ": " + e.what());
  }
  return rec;
}

std::vector<SurprisalRecord> read_records(std::istream& in) {
  std::vector<SurprisalRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kRecordTsvHeader) {
        throw ReportError("records file has unexpected header '" + line + "'");
      }
      continue;
    }
    out.push_back(parse_tsv_row(line, line_no));
  }
  return out;
}

std::vector<SurprisalRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot open records file '" + path.string() + "'");
  return read_records(in);
}

void write_records(std::ostream& out, const std::vector<SurprisalRecord>& records) {
  out << kRecordTsvHeader << '\n';
  for (const auto& rec : records) out << to_tsv_row(rec) << '\n';
}

void sort_records(std::vector<SurprisalRecord>& records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.item_id, a.target_index, a.method, a.model_id, a.correction) <
           std::tie(b.item_id, b.target_index, b.method, b.model_id, b.correction);
  });
}

}  // namespace surpnov
