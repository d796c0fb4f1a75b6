#pragma once

#include <cstdio>
#include <string>

namespace patan {

/// Shortest representation with 17 significant digits: round-trips any double,
/// so exported files are byte-stable and diffable.
inline std::string g17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

} // namespace patan
