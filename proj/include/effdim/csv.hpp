#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace effdim {

/// Locale-independent, 17 significant digits so every double round-trips.
/// Non-finite values print as nan, inf, -inf.
std::string format_double(double x);

/// Quotes a field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace effdim
