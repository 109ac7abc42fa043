#pragma once

// Daily demand series, calendar-aligned average lines, ratio curves and
// period statistics for the control-panel and meter views.

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "demandflow/calendar.hpp"
#include "demandflow/error.hpp"
#include "demandflow/ingest.hpp"

namespace demandflow {

enum class Band { full_day, peak_window, valley_window };

constexpr std::string_view to_string(Band band) noexcept {
    switch (band) {
    case Band::full_day: return "full_day";
    case Band::peak_window: return "peak_window";
    case Band::valley_window: return "valley_window";
    }
    return "full_day";
}

inline std::optional<Band> parse_band(std::string_view s) {
    if (s == "full_day") return Band::full_day;
    if (s == "peak_window") return Band::peak_window;
    if (s == "valley_window") return Band::valley_window;
    return std::nullopt;
}

inline double band_value(const DailyReading& r, Band band) {
    switch (band) {
    case Band::peak_window: return r.peak;
    case Band::valley_window: return r.valley;
    case Band::full_day: break;
    }
    return r.total;
}

struct TimePeriod {
    Day start{};
    Day end{};
    Band band = Band::full_day;

    long days() const { return day_count(start, end); }

    friend bool operator==(const TimePeriod&, const TimePeriod&) = default;
};

inline std::string describe(const TimePeriod& p) {
    return format_day(p.start) + ".." + format_day(p.end) + "/" + std::string(to_string(p.band));
}

/// Throws a range error unless start <= end and both lie in the dataset.
inline void validate_period(const Dataset& ds, const TimePeriod& p) {
    if (p.end < p.start) throw Error(ErrorKind::range, "period end precedes start: " + describe(p));
    if (p.start < ds.first_day() || p.end > ds.last_day())
        throw Error(ErrorKind::range, "period " + describe(p) + " outside dataset range " +
                                          format_day(ds.first_day()) + ".." + format_day(ds.last_day()));
}

inline TimePeriod full_range(const Dataset& ds, Band band = Band::full_day) {
    return {ds.first_day(), ds.last_day(), band};
}

struct DemandSeries {
    std::vector<Day> days;
    std::vector<double> total;
    std::vector<double> peak;
    std::vector<double> valley;

    std::size_t size() const { return days.size(); }
};

inline DemandSeries daily_series(const Dataset& ds) {
    const auto n = static_cast<std::size_t>(ds.day_span());
    DemandSeries s;
    s.days.reserve(n);
    for (Day d = ds.first_day(); d <= ds.last_day(); d += std::chrono::days{1}) s.days.push_back(d);
    s.total.assign(n, 0.0);
    s.peak.assign(n, 0.0);
    s.valley.assign(n, 0.0);
    for (const auto& r : ds.readings()) {
        const auto i = static_cast<std::size_t>((r.date - ds.first_day()).count());
        s.total[i] += r.total;
        s.peak[i] += r.peak;
        s.valley[i] += r.valley;
    }
    return s;
}

enum class Granularity { yearly, quarterly, monthly };

constexpr std::string_view to_string(Granularity g) noexcept {
    switch (g) {
    case Granularity::yearly: return "yearly";
    case Granularity::quarterly: return "quarterly";
    case Granularity::monthly: return "monthly";
    }
    return "monthly";
}

inline std::optional<Granularity> parse_granularity(std::string_view s) {
    if (s == "yearly") return Granularity::yearly;
    if (s == "quarterly") return Granularity::quarterly;
    if (s == "monthly") return Granularity::monthly;
    return std::nullopt;
}

struct AuxSegment {
    Day start{};  // first day of the segment present in the series
    Day end{};    // last day present, inclusive
    std::size_t day_count = 0;
    double mean = 0.0;  // kWh/day
};

struct AuxLine {
    Granularity granularity = Granularity::monthly;
    std::vector<AuxSegment> segments;
};

namespace detail {

inline int calendar_bucket(Day d, Granularity g) {
    const std::chrono::year_month_day ymd{d};
    const int y = static_cast<int>(ymd.year());
    const int m = static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
    switch (g) {
    case Granularity::yearly: return y;
    case Granularity::quarterly: return y * 4 + m / 3;
    case Granularity::monthly: break;
    }
    return y * 12 + m;
}

}  // namespace detail

/// Calendar-aligned mean of daily totals. Partial first/last segments are
/// averaged over the days actually in the series.
inline AuxLine aux_lines(const DemandSeries& series, Granularity g) {
    AuxLine line{g, {}};
    double sum = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const bool new_bucket = line.segments.empty() ||
                                detail::calendar_bucket(series.days[i], g) !=
                                    detail::calendar_bucket(line.segments.back().start, g);
        if (new_bucket) {
            if (!line.segments.empty()) line.segments.back().mean = sum / static_cast<double>(line.segments.back().day_count);
            line.segments.push_back({series.days[i], series.days[i], 0, 0.0});
            sum = 0.0;
        }
        auto& seg = line.segments.back();
        seg.end = series.days[i];
        ++seg.day_count;
        sum += series.total[i];
    }
    if (!line.segments.empty()) line.segments.back().mean = sum / static_cast<double>(line.segments.back().day_count);
    return line;
}

enum class RatioKind { peak_to_valley, peak_to_total };

constexpr std::string_view to_string(RatioKind k) noexcept {
    return k == RatioKind::peak_to_valley ? "peak_to_valley" : "peak_to_total";
}

inline std::optional<RatioKind> parse_ratio_kind(std::string_view s) {
    if (s == "peak_to_valley") return RatioKind::peak_to_valley;
    if (s == "peak_to_total") return RatioKind::peak_to_total;
    return std::nullopt;
}

struct RatioPoint {
    Day day{};
    double ratio = 0.0;
};

/// Days with a zero denominator are left out rather than emitted as inf/NaN.
inline std::vector<RatioPoint> ratio_series(const DemandSeries& series, RatioKind kind) {
    std::vector<RatioPoint> out;
    out.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double den = kind == RatioKind::peak_to_valley ? series.valley[i] : series.total[i];
        if (den == 0.0) continue;
        out.push_back({series.days[i], series.peak[i] / den});
    }
    return out;
}

struct MeterStats {
    double total = 0.0;
    double peak = 0.0;
    double valley = 0.0;
    double mean_daily = 0.0;  // total / calendar days in the period
    std::size_t household_count = 0;
};

inline MeterStats meter_stats(const Dataset& ds, const TimePeriod& period) {
    validate_period(ds, period);
    MeterStats m;
    std::vector<bool> seen(ds.households().size(), false);
    for (const auto& r : ds.readings_between(period.start, period.end)) {
        m.total += r.total;
        m.peak += r.peak;
        m.valley += r.valley;
        if (!seen[r.household]) {
            seen[r.household] = true;
            ++m.household_count;
        }
    }
    m.mean_daily = m.total / static_cast<double>(period.days());
    return m;
}

}  // namespace demandflow
