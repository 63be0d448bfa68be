#pragma once

#include <string>

namespace fprl {

/// Shortest decimal form that round-trips the exact double ("%.17g" via
/// strtod). All CSV and checkpoint output goes through this, which is what
/// makes identical runs byte-identical on disk.
std::string format_double(double v);

}  // namespace fprl
