#pragma once

#include <string>

namespace qap::detail {

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now_iso8601();

}  // namespace qap::detail
