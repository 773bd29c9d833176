#pragma once

#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lockin {

/// Round-trip decimal form (17 significant digits).
std::string fmt17(double v);

void write_csv_header(std::ostream& os, std::initializer_list<std::string_view> names);
void write_csv_row(std::ostream& os, std::initializer_list<double> values);

/// Numeric rows of a CSV whose header must equal `names`; throws ConfigInvalid
/// on a header mismatch or a malformed row.
std::vector<std::vector<double>> read_csv_rows(std::istream& is,
                                               std::initializer_list<std::string_view> names);

}  // namespace lockin
