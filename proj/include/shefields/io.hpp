#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "shefields/solver.hpp"

namespace shefields {

/// Round-trip decimal form: 17 significant digits, "nan"/"inf" spelled out.
std::string format_double(double x);

/// Comma-joined row of already formatted cells, no trailing newline.
std::string csv_row(const std::vector<std::string>& cells);

/// Columns x,value with a leading '#' comment carrying provenance, seed and grid.
void write_snapshot_csv(const FieldSnapshot& snap, std::ostream& out);

}  // namespace shefields
