#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>

#include "clab/core/error.hpp"

namespace clab::lab {

using Seconds = std::int64_t;  // UTC seconds since the epoch

class Clock {
public:
    virtual ~Clock() = default;
    virtual Seconds now() const = 0;
};

class SystemClock : public Clock {
public:
    Seconds now() const override { return static_cast<Seconds>(std::time(nullptr)); }
};

class ManualClock : public Clock {
public:
    explicit ManualClock(Seconds t = 0) : t_(t) {}
    Seconds now() const override { return t_.load(); }
    void set(Seconds t) { t_.store(t); }
    void advance(Seconds d) { t_.fetch_add(d); }

private:
    std::atomic<Seconds> t_;
};

constexpr Seconds kDay = 86400;

// Days since 1970-01-01 for a proleptic Gregorian date.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
    std::int64_t y;
    unsigned m, d;
};

constexpr Civil civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2), m, d};
}

inline Seconds floor_div(Seconds a, Seconds b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

inline Seconds day_floor(Seconds t) { return floor_div(t, kDay) * kDay; }
inline Seconds time_of_day(Seconds t) { return t - day_floor(t); }

inline std::string format_date(Seconds t) {
    auto c = civil_from_days(floor_div(t, kDay));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(c.y), c.m, c.d);
    return buf;
}

inline std::string format_time(Seconds t) {
    Seconds s = time_of_day(t);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lldZ", format_date(t).c_str(), static_cast<long long>(s / 3600),
                  static_cast<long long>(s / 60 % 60), static_cast<long long>(s % 60));
    return buf;
}

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS][Z]" or a plain integer epoch.
inline Seconds parse_time(const std::string& s) {
    long long y = 0;
    unsigned mo = 0, d = 0, h = 0, mi = 0, se = 0;
    int n = std::sscanf(s.c_str(), "%lld-%u-%uT%u:%u:%u", &y, &mo, &d, &h, &mi, &se);
    if (n >= 3 && s.find('-') != std::string::npos) {
        require(mo >= 1 && mo <= 12 && d >= 1 && d <= 31 && h < 24 && mi < 60 && se < 60, "bad date/time '" + s + "'");
        return days_from_civil(y, mo, d) * kDay + h * 3600 + mi * 60 + se;
    }
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    require(!s.empty() && end && *end == '\0', "bad date/time '" + s + "'");
    return v;
}

} // namespace clab::lab
