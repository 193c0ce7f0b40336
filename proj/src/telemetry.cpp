#include "tuhr/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include <json.hpp>

namespace tuhr::telemetry {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

constexpr std::string_view kFields[] = {"v", "sid", "seq", "ts", "dist_cm", "gas_ppm", "batt_pct"};

ParseFailure fail(AckError e, std::string detail, std::optional<std::uint64_t> seq = std::nullopt)
{
    return ParseFailure{e, seq, std::move(detail)};
}

}  // namespace

std::string_view to_string(AckError e) noexcept
{
    switch (e) {
    case AckError::Parse: return "PARSE";
    case AckError::UnknownSensor: return "UNKNOWN_SENSOR";
    case AckError::Range: return "RANGE";
    case AckError::Version: return "VERSION";
    }
    return "PARSE";
}

std::optional<AckError> parse_ack_error(std::string_view s) noexcept
{
    if (s == "PARSE") return AckError::Parse;
    if (s == "UNKNOWN_SENSOR") return AckError::UnknownSensor;
    if (s == "RANGE") return AckError::Range;
    if (s == "VERSION") return AckError::Version;
    return std::nullopt;
}

ParseResult parse_record(std::string_view line)
{
    const Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return fail(AckError::Parse, "not a textual object");

    for (const auto& item : j.items()) {
        if (std::find(std::begin(kFields), std::end(kFields), item.key()) == std::end(kFields))
            return fail(AckError::Parse, "unexpected field " + item.key());
    }
    for (auto f : kFields) {
        if (!j.contains(f)) return fail(AckError::Parse, "missing field " + std::string(f));
    }

    // seq is echoed in any later failure ack, so read it first.
    std::optional<std::uint64_t> seq;
    const auto& jseq = j["seq"];
    if (jseq.is_number_unsigned()) {
        seq = jseq.get<std::uint64_t>();
    } else if (jseq.is_number_integer()) {
        return fail(AckError::Range, "negative seq");
    } else {
        return fail(AckError::Parse, "seq must be an integer");
    }

    const auto& jv = j["v"];
    if (!jv.is_number_integer()) return fail(AckError::Parse, "v must be an integer", seq);
    if (jv.get<std::int64_t>() != 1) return fail(AckError::Version, "unsupported version", seq);

    const auto& jsid = j["sid"];
    if (!jsid.is_string() || jsid.get_ref<const std::string&>().empty())
        return fail(AckError::Parse, "sid must be a nonempty string", seq);

    const auto& jts = j["ts"];
    if (!jts.is_string()) return fail(AckError::Parse, "ts must be a string", seq);
    auto ts = parse_iso8601(jts.get_ref<const std::string&>());
    if (!ts) return fail(AckError::Range, "unparsable timestamp", seq);

    double values[3];
    const char* numeric[3] = {"dist_cm", "gas_ppm", "batt_pct"};
    for (int i = 0; i < 3; ++i) {
        const auto& x = j[numeric[i]];
        if (!x.is_number()) return fail(AckError::Parse, std::string(numeric[i]) + " must be a number", seq);
        values[i] = x.get<double>();
        if (!std::isfinite(values[i]) || values[i] < 0.0)
            return fail(AckError::Range, std::string(numeric[i]) + " out of range", seq);
    }
    if (values[2] > 100.0) return fail(AckError::Range, "batt_pct out of range", seq);

    ReadingEnvelope env;
    env.version = 1;
    env.sensor_id = jsid.get<std::string>();
    env.seq = *seq;
    env.ts = *ts;
    env.distance_cm = values[0];
    env.gas_ppm = values[1];
    env.battery_pct = values[2];
    return env;
}

std::string serialize_record(const ReadingEnvelope& env)
{
    OrderedJson j;
    j["v"] = env.version;
    j["sid"] = env.sensor_id;
    j["seq"] = env.seq;
    j["ts"] = format_iso8601(env.ts);
    j["dist_cm"] = env.distance_cm;
    j["gas_ppm"] = env.gas_ppm;
    j["batt_pct"] = env.battery_pct;
    return j.dump();
}

std::string serialize_ack(const AckRecord& ack)
{
    OrderedJson j;
    j["ok"] = ack.ok;
    if (ack.seq)
        j["seq"] = *ack.seq;
    else
        j["seq"] = nullptr;
    if (ack.dup) j["dup"] = true;
    if (!ack.ok) j["err"] = to_string(ack.err.value_or(AckError::Parse));
    auto out = j.dump();
    out.push_back('\n');
    return out;
}

std::optional<AckRecord> parse_ack(std::string_view line)
{
    if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
    const Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("ok") || !j["ok"].is_boolean()) return std::nullopt;
    AckRecord ack;
    ack.ok = j["ok"].get<bool>();
    if (j.contains("seq") && j["seq"].is_number_unsigned()) ack.seq = j["seq"].get<std::uint64_t>();
    ack.dup = j.value("dup", false);
    if (j.contains("err")) {
        if (!j["err"].is_string()) return std::nullopt;
        ack.err = parse_ack_error(j["err"].get<std::string>());
        if (!ack.err) return std::nullopt;
    }
    if (!ack.ok && !ack.err) return std::nullopt;
    return ack;
}

bool SeqIntervals::contains(std::uint64_t seq) const
{
    auto it = runs_.upper_bound(seq);
    if (it == runs_.begin()) return false;
    --it;
    return seq <= it->second;
}

bool SeqIntervals::insert(std::uint64_t seq)
{
    if (contains(seq)) return false;
    auto next = runs_.upper_bound(seq);
    bool joined_prev = false;
    if (next != runs_.begin()) {
        auto prev = std::prev(next);
        if (prev->second + 1 == seq) {
            prev->second = seq;
            joined_prev = true;
            if (next != runs_.end() && next->first == seq + 1) {
                prev->second = next->second;
                runs_.erase(next);
            }
        }
    }
    if (!joined_prev) {
        if (next != runs_.end() && next->first == seq + 1) {
            const auto last = next->second;
            runs_.erase(next);
            runs_.emplace(seq, last);
        } else {
            runs_.emplace(seq, seq);
        }
    }
    return true;
}

DedupeVerdict DedupeTable::check_duplicate(const ReadingEnvelope& env)
{
    return sensors_[env.sensor_id].insert(env.seq) ? DedupeVerdict::Fresh : DedupeVerdict::Duplicate;
}

bool DedupeTable::seen(const std::string& sensor_id, std::uint64_t seq) const
{
    auto it = sensors_.find(sensor_id);
    return it != sensors_.end() && it->second.contains(seq);
}

void DedupeTable::mark(const std::string& sensor_id, std::uint64_t seq) { sensors_[sensor_id].insert(seq); }

LineOutcome IngestSession::handle_line(std::string_view line)
{
    auto parsed = parse_record(line);
    if (!parsed) {
        const auto& f = parsed.failure();
        return {AckRecord::rejected(f.error, f.seq), std::nullopt};
    }
    const auto& env = parsed.value();
    switch (sink_->accept(env)) {
    case SinkVerdict::Forwarded: return {AckRecord::accepted(env.seq), env};
    case SinkVerdict::Duplicate: return {AckRecord::accepted(env.seq, true), std::nullopt};
    case SinkVerdict::UnknownSensor: break;
    }
    return {AckRecord::rejected(AckError::UnknownSensor, env.seq), std::nullopt};
}

std::vector<LineOutcome> IngestSession::handle_stream(std::string_view bytes)
{
    std::vector<LineOutcome> out;
    std::size_t start = 0;
    for (;;) {
        const auto nl = bytes.find('\n', start);
        if (nl == std::string_view::npos) break;
        out.push_back(handle_line(bytes.substr(start, nl - start)));
        start = nl + 1;
    }
    return out;
}

}  // namespace tuhr::telemetry
