#include "reem/format.hpp"

#include <cstdio>
#include <cstdlib>

namespace reem {

std::string canonical_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace reem
