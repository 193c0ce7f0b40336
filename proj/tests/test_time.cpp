#include <doctest.h>

#include "tuhr/time.hpp"

using namespace tuhr;

TEST_CASE("iso8601 round trip")
{
    auto ts = parse_iso8601("2025-06-01T10:00:00Z");
    REQUIRE(ts);
    CHECK(to_epoch_ms(*ts) == 1748772000000);
    CHECK(format_iso8601(*ts) == "2025-06-01T10:00:00Z");

    auto ms = parse_iso8601("2025-06-01T10:00:00.250Z");
    REQUIRE(ms);
    CHECK(to_epoch_ms(*ms) == 1748772000250);
    CHECK(format_iso8601(*ms) == "2025-06-01T10:00:00.250Z");
}

TEST_CASE("iso8601 rejects malformed text")
{
    for (const char* bad : {"", "2025-06-01", "2025-06-01T10:00:00", "2025-06-01T10:00:00+03:00",
                            "2025-02-30T00:00:00Z", "2025-06-01T24:00:00Z", "2025-06-01T10:60:00Z",
                            "2025-06-01 10:00:00Z", "2025-06-01T10:00:00.Z", "x025-06-01T10:00:00Z"}) {
        CAPTURE(std::string(bad));
        CHECK_FALSE(parse_iso8601(bad));
    }
}

TEST_CASE("fractional seconds of any width")
{
    CHECK(to_epoch_ms(*parse_iso8601("2025-06-01T10:00:00.5Z")) == 1748772000500);
    CHECK(to_epoch_ms(*parse_iso8601("2025-06-01T10:00:00.123456Z")) == 1748772000123);
}

TEST_CASE("leap day parses")
{
    CHECK(parse_iso8601("2024-02-29T23:59:59Z"));
    CHECK_FALSE(parse_iso8601("2023-02-29T00:00:00Z"));
}
