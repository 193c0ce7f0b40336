#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tuhr {

/// UTC instant with millisecond resolution. All timestamps in the system,
/// on the wire and in the log, use this type.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Millis = std::chrono::milliseconds;

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff]Z`. Returns nullopt on anything else,
/// including out-of-range calendar fields.
std::optional<Timestamp> parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`, or with `.fff` when the
/// millisecond part is nonzero.
std::string format_iso8601(Timestamp ts);

inline std::int64_t to_epoch_ms(Timestamp ts) { return ts.time_since_epoch().count(); }
inline Timestamp from_epoch_ms(std::int64_t ms) { return Timestamp{Millis{ms}}; }

inline Timestamp wall_now()
{
    return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now());
}

}  // namespace tuhr
