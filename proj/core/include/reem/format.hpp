#pragma once

#include <string>

namespace reem {

/// Shortest decimal form of v that parses back to exactly v. Used by every
/// CSV writer so that save/load/save is byte-identical.
std::string canonical_double(double v);

}  // namespace reem
