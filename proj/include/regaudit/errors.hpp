#ifndef REGAUDIT_ERRORS_HPP
#define REGAUDIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace regaudit {

// Two failure families, mirrored in the CLI exit codes: bad inputs or
// configuration (exit 2) and numerical breakdowns (exit 3).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedRow : ValidationError { using ValidationError::ValidationError; };
struct DuplicateKey : ValidationError { using ValidationError::ValidationError; };
struct NegativeSpend : ValidationError { using ValidationError::ValidationError; };
struct IncompleteGrid : ValidationError { using ValidationError::ValidationError; };
struct EpochOutOfRange : ValidationError { using ValidationError::ValidationError; };
struct InvalidHyper : ValidationError { using ValidationError::ValidationError; };
struct ShapeMismatch : ValidationError { using ValidationError::ValidationError; };
struct InfeasibleSet : ValidationError { using ValidationError::ValidationError; };
struct TooLarge : ValidationError { using ValidationError::ValidationError; };
struct EmptyLevels : ValidationError { using ValidationError::ValidationError; };
struct TooFewDraws : ValidationError { using ValidationError::ValidationError; };
struct ZeroBaseline : ValidationError { using ValidationError::ValidationError; };
struct MissingCombination : ValidationError { using ValidationError::ValidationError; };
struct ConfigError : ValidationError { using ValidationError::ValidationError; };

struct DegenerateData : NumericalError { using NumericalError::NumericalError; };
struct SingularKernel : NumericalError { using NumericalError::NumericalError; };
struct ProjectionDiverged : NumericalError { using NumericalError::NumericalError; };
struct EmptyFeasibleGrid : NumericalError { using NumericalError::NumericalError; };

}  // namespace regaudit

#endif  // REGAUDIT_ERRORS_HPP
