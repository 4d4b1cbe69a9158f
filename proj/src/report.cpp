#include "jdlab/report.hpp"

#include <charconv>
#include <cmath>

#include "jdlab/error.hpp"

namespace jdlab {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string format_field(const Field& f) {
  if (const auto* d = std::get_if<double>(&f)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&f)) return std::to_string(*i);
  const std::string& s = std::get<std::string>(f);
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void Table::add(std::vector<Field> row) {
  if (row.size() != columns.size())
    throw Error(ErrorCode::InvalidArgument, "row width does not match table '" + name + "'");
  rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + format_field(columns[c]);
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_field(row[c]);
    out += '\n';
  }
  return out;
}

}  // namespace jdlab
