#include "ct_io/luna_csv.hpp"

#include <functional>

#include "common/error.hpp"
#include "common/text.hpp"

namespace nodulekit::ct {

namespace {

using RowHandler = std::function<void(const std::vector<std::string_view>&, std::size_t line_no)>;

void for_each_row(std::string_view csv_text, std::string_view expected_header, const RowHandler& fn) {
  auto lines = split(csv_text, '\n');
  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]).empty()) ++i;
  if (i == lines.size()) return;  // blank file: no rows

  std::string_view header = trim(lines[i]);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  const auto expected = split(expected_header, ',');
  const auto got = split(header, ',');
  bool match = got.size() == expected.size();
  for (std::size_t c = 0; match && c < got.size(); ++c) match = trim(got[c]) == expected[c];
  if (!match) {
    fail(ErrorCode::kUnknownHeader, "unexpected CSV header '" + std::string(header) + "', expected '" +
                                        std::string(expected_header) + "'");
  }

  for (++i; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != expected.size()) {
      fail(ErrorCode::kMalformedRow, "line " + std::to_string(i + 1) + ": expected " +
                                         std::to_string(expected.size()) + " columns, got " +
                                         std::to_string(cells.size()));
    }
    for (auto& c : cells) c = trim(c);
    fn(cells, i + 1);
  }
}

double number_cell(std::string_view cell, std::size_t line_no) {
  const auto v = parse_double(cell);
  if (!v) {
    fail(ErrorCode::kMalformedRow, "line " + std::to_string(line_no) + ": non-numeric value '" +
                                       std::string(cell) + "'");
  }
  return *v;
}

}  // namespace

std::vector<NoduleAnnotation> load_annotations(std::string_view csv_text) {
  std::vector<NoduleAnnotation> rows;
  for_each_row(csv_text, "seriesuid,coordX,coordY,coordZ,diameter_mm",
               [&](const std::vector<std::string_view>& c, std::size_t line_no) {
                 NoduleAnnotation a;
                 a.scan_id = std::string(c[0]);
                 for (int k = 0; k < 3; ++k) a.world_center[k] = number_cell(c[k + 1], line_no);
                 a.diameter_mm = number_cell(c[4], line_no);
                 if (!(a.diameter_mm > 0.0)) {
                   fail(ErrorCode::kMalformedRow,
                        "line " + std::to_string(line_no) + ": diameter must be > 0");
                 }
                 rows.push_back(std::move(a));
               });
  return rows;
}

std::vector<Candidate> load_candidates(std::string_view csv_text) {
  std::vector<Candidate> rows;
  for_each_row(csv_text, "seriesuid,coordX,coordY,coordZ,class",
               [&](const std::vector<std::string_view>& c, std::size_t line_no) {
                 Candidate cand;
                 cand.scan_id = std::string(c[0]);
                 for (int k = 0; k < 3; ++k) cand.world_center[k] = number_cell(c[k + 1], line_no);
                 const auto label = parse_int(c[4]);
                 if (!label || (*label != 0 && *label != 1)) {
                   fail(ErrorCode::kMalformedRow,
                        "line " + std::to_string(line_no) + ": class must be 0 or 1");
                 }
                 cand.label = static_cast<int>(*label);
                 rows.push_back(std::move(cand));
               });
  return rows;
}

std::string write_annotations_csv(const std::vector<NoduleAnnotation>& rows) {
  std::string out = "seriesuid,coordX,coordY,coordZ,diameter_mm\n";
  for (const auto& a : rows) {
    out += a.scan_id + "," + format_number(a.world_center[0]) + "," +
           format_number(a.world_center[1]) + "," + format_number(a.world_center[2]) + "," +
           format_number(a.diameter_mm) + "\n";
  }
  return out;
}

std::string write_candidates_csv(const std::vector<Candidate>& rows) {
  std::string out = "seriesuid,coordX,coordY,coordZ,class\n";
  for (const auto& c : rows) {
    out += c.scan_id + "," + format_number(c.world_center[0]) + "," +
           format_number(c.world_center[1]) + "," + format_number(c.world_center[2]) + "," +
           std::to_string(c.label) + "\n";
  }
  return out;
}

}  // namespace nodulekit::ct
