#ifndef REGAUDIT_ISOTONIC_HPP
#define REGAUDIT_ISOTONIC_HPP

#include <vector>

namespace regaudit {

// Least-squares non-decreasing fit (pool-adjacent-violators).
std::vector<double> isotonic_fit(const std::vector<double>& values);

// Least-squares non-decreasing fit constrained to start at or above
// `anchor`. Since the fit is non-decreasing, the first-element bound is
// equivalent to an elementwise floor, and the constrained optimum is the
// unconstrained PAVA fit clipped from below at the anchor.
std::vector<double> isotonic_project(const std::vector<double>& values, double anchor);

}  // namespace regaudit

#endif  // REGAUDIT_ISOTONIC_HPP
