#pragma once

#include <string>

#include "vemr/emr.hpp"
#include "vemr/json.hpp"

namespace vemr::emr {

Json value_to_json(const FieldValue& v);

/// Throws ParseError with `path` on malformed input.
FieldValue value_from_json(const Json& j, const std::string& path);

Json vitals_to_json(const VitalSigns& v);
VitalSigns vitals_from_json(const Json& j);

Json document_to_json(const Document& doc, const Schema& schema);
Document document_from_json(const Json& j, const Schema& schema);

} // namespace vemr::emr
