#ifndef REGAUDIT_SERIALIZE_HPP
#define REGAUDIT_SERIALIZE_HPP

#include <json.hpp>

#include "regaudit/greybox.hpp"
#include "regaudit/oracle.hpp"
#include "regaudit/types.hpp"

namespace regaudit {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

// Versioned model document: all parameters plus training data, sufficient to
// rebuild the posterior exactly.
Json response_model_to_json(const ResponseModel& model);
ResponseModel response_model_from_json(const Json& j);

Json oracle_solution_to_json(const OracleSolution& solution);

}  // namespace regaudit

#endif  // REGAUDIT_SERIALIZE_HPP
