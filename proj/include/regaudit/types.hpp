#ifndef REGAUDIT_TYPES_HPP
#define REGAUDIT_TYPES_HPP

#include <Eigen/Dense>

namespace regaudit {

// Epoch x asset grids everywhere: rows are decision epochs, columns are assets.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace regaudit

#endif  // REGAUDIT_TYPES_HPP
