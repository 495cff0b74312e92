#include "shefields/io.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace shefields {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    return line;
}

void write_snapshot_csv(const FieldSnapshot& snap, std::ostream& out) {
    const GridSpec& g = snap.grid;
    out << "# provenance=" << snap.provenance.describe() << " seed=" << snap.noise_seed
        << " time=" << format_double(snap.time) << " nx=" << g.nx
        << " length=" << format_double(g.length) << " dt=" << format_double(g.dt)
        << " nt=" << g.nt << " censored=" << (snap.censored ? 1 : 0) << "\n";
    out << "x,value\n";
    for (std::size_t i = 0; i < snap.values.size(); ++i) {
        out << format_double(g.x(i)) << ',' << format_double(snap.values[i]) << '\n';
    }
}

}  // namespace shefields
