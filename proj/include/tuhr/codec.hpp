#pragma once

// nlohmann::json bindings for the domain vocabulary. Timestamps travel as
// ISO 8601 strings, enums as their upper-case names.

#include <json.hpp>

#include "tuhr/domain.hpp"

namespace tuhr {

using Json = nlohmann::json;

Json timestamp_to_json(const std::optional<Timestamp>& ts);
std::optional<Timestamp> timestamp_from_json(const Json& j);  // throws INVALID on malformed text
Timestamp required_timestamp(const Json& j, const char* key);

void to_json(Json& j, const GeoPoint& p);
void from_json(const Json& j, GeoPoint& p);
void to_json(Json& j, const BinConfig& c);
void from_json(const Json& j, BinConfig& c);
void to_json(Json& j, const Thresholds& t);
void from_json(const Json& j, Thresholds& t);
void to_json(Json& j, const BinRecord& r);
void from_json(const Json& j, BinRecord& r);
void to_json(Json& j, const WorkerProfile& w);
void from_json(const Json& j, WorkerProfile& w);
void to_json(Json& j, const Zone& z);
void from_json(const Json& j, Zone& z);

}  // namespace tuhr
