#pragma once

#include <cstdio>
#include <string>

namespace rdm {

// numbers in CSV and reports: %.16e round-trips a double
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", x);
    return buf;
}

}  // namespace rdm
