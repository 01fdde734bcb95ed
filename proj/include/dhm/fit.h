#pragma once

#include <vector>

namespace dhm {

// Least-squares slope of log(y) against log(x). Pairs with a non-positive or
// non-finite entry are skipped; NaN if fewer than two pairs remain.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace dhm
