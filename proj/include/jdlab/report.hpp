#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace jdlab {

using Field = std::variant<double, std::int64_t, std::string>;

/// Shortest decimal that parses back to the same double; "nan", "inf", "-inf".
std::string format_double(double value);

/// Column-named rows rendered as CSV. Strings containing a comma, quote or
/// newline are quoted.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Field>> rows;

  Table() = default;
  Table(std::string table_name, std::vector<std::string> column_names)
      : name(std::move(table_name)), columns(std::move(column_names)) {}

  /// Throws InvalidArgument when the row width differs from the header.
  void add(std::vector<Field> row);
  std::string to_csv() const;
};

std::string format_field(const Field& f);

}  // namespace jdlab
