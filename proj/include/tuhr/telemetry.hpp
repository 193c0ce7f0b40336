#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tuhr/time.hpp"

namespace tuhr::telemetry {

/// One sensor report as it travels on the wire.
struct ReadingEnvelope {
    int version = 1;
    std::string sensor_id;
    std::uint64_t seq = 0;
    Timestamp ts;
    double distance_cm = 0.0;
    double gas_ppm = 0.0;
    double battery_pct = 0.0;

    friend bool operator==(const ReadingEnvelope&, const ReadingEnvelope&) = default;
};

enum class AckError : std::uint8_t { Parse, UnknownSensor, Range, Version };

std::string_view to_string(AckError e) noexcept;
std::optional<AckError> parse_ack_error(std::string_view s) noexcept;

struct AckRecord {
    bool ok = true;
    std::optional<std::uint64_t> seq;
    std::optional<AckError> err;
    bool dup = false;

    static AckRecord accepted(std::uint64_t seq, bool dup = false) { return {true, seq, std::nullopt, dup}; }
    static AckRecord rejected(AckError e, std::optional<std::uint64_t> seq = std::nullopt)
    {
        return {false, seq, e, false};
    }

    friend bool operator==(const AckRecord&, const AckRecord&) = default;
};

/// Failure of parse_record. `seq` is set when the record's own seq field
/// was readable so the ack can echo it.
struct ParseFailure {
    AckError error;
    std::optional<std::uint64_t> seq;
    std::string detail;
};

/// Either an envelope or the reason the line was refused.
class ParseResult {
public:
    ParseResult(ReadingEnvelope env) : value_(std::move(env)) {}
    ParseResult(ParseFailure f) : failure_(std::move(f)) {}

    bool ok() const noexcept { return value_.has_value(); }
    explicit operator bool() const noexcept { return ok(); }
    const ReadingEnvelope& value() const { return *value_; }
    const ParseFailure& failure() const { return *failure_; }

private:
    std::optional<ReadingEnvelope> value_;
    std::optional<ParseFailure> failure_;
};

/// Parses one record line (without its terminating LF).
ParseResult parse_record(std::string_view line);

/// Wire line for an envelope, without the trailing LF. Field order is fixed:
/// v, sid, seq, ts, dist_cm, gas_ppm, batt_pct.
std::string serialize_record(const ReadingEnvelope& env);

/// One ack line including the trailing LF.
std::string serialize_ack(const AckRecord& ack);

/// Inverse of serialize_ack; accepts the line with or without its LF.
std::optional<AckRecord> parse_ack(std::string_view line);

/// Closed-interval set of accepted sequence numbers. Contiguous runs merge,
/// so a sensor that never loses a record costs one interval.
class SeqIntervals {
public:
    bool contains(std::uint64_t seq) const;
    /// Returns false if `seq` was already present.
    bool insert(std::uint64_t seq);

    const std::map<std::uint64_t, std::uint64_t>& intervals() const noexcept { return runs_; }
    void assign(std::map<std::uint64_t, std::uint64_t> runs) { runs_ = std::move(runs); }

    friend bool operator==(const SeqIntervals&, const SeqIntervals&) = default;

private:
    std::map<std::uint64_t, std::uint64_t> runs_;  // start -> last (inclusive)
};

enum class DedupeVerdict : std::uint8_t { Fresh, Duplicate };

/// Per-sensor record of accepted (sensor_id, seq) pairs.
class DedupeTable {
public:
    /// Fresh marks the pair accepted; Duplicate leaves the table unchanged.
    DedupeVerdict check_duplicate(const ReadingEnvelope& env);
    bool seen(const std::string& sensor_id, std::uint64_t seq) const;
    void mark(const std::string& sensor_id, std::uint64_t seq);

    const std::map<std::string, SeqIntervals>& sensors() const noexcept { return sensors_; }
    std::map<std::string, SeqIntervals>& sensors() noexcept { return sensors_; }

    friend bool operator==(const DedupeTable&, const DedupeTable&) = default;

private:
    std::map<std::string, SeqIntervals> sensors_;
};

enum class SinkVerdict : std::uint8_t { Forwarded, Duplicate, UnknownSensor };

/// Receiver of parsed envelopes. Implementations own dedupe and persistence;
/// they throw `IO_FAILURE` when the reading could not be made durable.
class ReadingSink {
public:
    virtual ~ReadingSink() = default;
    virtual SinkVerdict accept(const ReadingEnvelope& env) = 0;
};

struct LineOutcome {
    AckRecord ack;
    std::optional<ReadingEnvelope> forwarded;
};

/// Per-connection handler. Lines are processed strictly in order and a bad
/// line never affects its neighbours.
class IngestSession {
public:
    explicit IngestSession(ReadingSink& sink) : sink_(&sink) {}

    LineOutcome handle_line(std::string_view line);

    /// Convenience for tests and batch tools: handles every LF-terminated
    /// line in `bytes`; a trailing partial line is ignored.
    std::vector<LineOutcome> handle_stream(std::string_view bytes);

private:
    ReadingSink* sink_;
};

}  // namespace tuhr::telemetry
