#pragma once

#include <json.hpp>

namespace vemr {

/// Insertion-ordered JSON; every wire document in the project uses this so
/// that serializations are byte-stable.
using Json = nlohmann::ordered_json;

} // namespace vemr
