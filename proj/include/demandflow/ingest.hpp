#pragma once

// Household consumption CSV ingestion and the immutable Dataset built from it.
//
// One row is one household-day: total, peak-window (06:00-22:00) and
// valley-window (22:00-06:00) energy in kWh, plus the meter's location.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "demandflow/calendar.hpp"
#include "demandflow/error.hpp"
#include "demandflow/geo.hpp"

namespace demandflow {

inline constexpr std::string_view csv_header = "household_id,date,pap_r,pap_r1,pap_r2,lon,lat";

struct ConsumptionRecord {
    std::string household_id;
    Day date{};
    double pap_r = 0.0;   // total kWh for the day
    double pap_r1 = 0.0;  // peak window kWh
    double pap_r2 = 0.0;  // valley window kWh
    double lon = 0.0;
    double lat = 0.0;

    friend bool operator==(const ConsumptionRecord&, const ConsumptionRecord&) = default;
};

struct ValidationIssue {
    std::size_t line = 0;
    std::string reason;

    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

struct ValidationReport {
    std::size_t accepted_count = 0;
    std::vector<ValidationIssue> rejected;
    std::vector<ValidationIssue> warnings;

    std::size_t total_rows() const { return accepted_count + rejected.size(); }

    friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

struct ParseOptions {
    double consistency_tol = 0.01;
    bool strict = false;
};

struct ParseResult {
    std::vector<ConsumptionRecord> records;
    ValidationReport report;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    // from_chars rejects a leading '+', meters sometimes emit one.
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Hard invariants of a single record. Returns the rejection reason, if any.
inline std::optional<std::string> check_record_bounds(const ConsumptionRecord& r) {
    if (r.household_id.empty()) return "empty household_id";
    for (double v : {r.pap_r, r.pap_r1, r.pap_r2})
        if (!std::isfinite(v)) return "non-finite energy value";
    if (r.pap_r < 0 || r.pap_r1 < 0 || r.pap_r2 < 0) return "negative energy value";
    if (!std::isfinite(r.lat) || r.lat < -90.0 || r.lat > 90.0) return "latitude out of range";
    if (!std::isfinite(r.lon) || r.lon < -180.0 || r.lon > 180.0) return "longitude out of range";
    return std::nullopt;
}

/// Checks |pap_r - (pap_r1 + pap_r2)| <= tol * max(pap_r, 1).
inline std::optional<std::string> check_record_consistency(const ConsumptionRecord& r, double tol) {
    const double parts = r.pap_r1 + r.pap_r2;
    if (std::abs(r.pap_r - parts) <= tol * std::max(r.pap_r, 1.0)) return std::nullopt;
    return parts > r.pap_r ? "peak+valley exceeds total" : "peak+valley below total";
}

inline ParseResult parse_consumption_csv(std::istream& in, const ParseOptions& options = {}) {
    if (!in.good()) throw Error(ErrorKind::stream, "input stream is not readable");

    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;

    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (!have_header) {
            if (view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
            if (detail::trim(view).empty()) continue;
            const auto fields = detail::split_fields(view);
            std::string joined;
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (i) joined += ',';
                joined += fields[i];
            }
            if (joined != csv_header)
                throw Error(ErrorKind::format, "invalid header: expected '" + std::string(csv_header) + "'");
            have_header = true;
            continue;
        }
        if (detail::trim(view).empty()) continue;

        auto reject = [&](std::string reason) {
            result.report.rejected.push_back({line_no, std::move(reason)});
        };

        const auto fields = detail::split_fields(view);
        if (fields.size() != 7) {
            reject("expected 7 columns, found " + std::to_string(fields.size()));
            continue;
        }
        ConsumptionRecord rec;
        rec.household_id = std::string(fields[0]);
        const auto day = parse_day(fields[1]);
        if (!day) {
            reject("invalid date");
            continue;
        }
        rec.date = *day;

        static constexpr const char* names[] = {"pap_r", "pap_r1", "pap_r2", "lon", "lat"};
        double* targets[] = {&rec.pap_r, &rec.pap_r1, &rec.pap_r2, &rec.lon, &rec.lat};
        bool numbers_ok = true;
        for (std::size_t k = 0; k < 5; ++k) {
            const auto v = detail::parse_number(fields[k + 2]);
            if (!v) {
                reject(std::string("invalid number in column ") + names[k]);
                numbers_ok = false;
                break;
            }
            *targets[k] = *v;
        }
        if (!numbers_ok) continue;

        if (auto reason = check_record_bounds(rec)) {
            reject(std::move(*reason));
            continue;
        }
        if (auto reason = check_record_consistency(rec, options.consistency_tol)) {
            if (options.strict) {
                reject(std::move(*reason));
                continue;
            }
            result.report.warnings.push_back({line_no, std::move(*reason)});
        }
        result.records.push_back(std::move(rec));
        ++result.report.accepted_count;
    }

    if (in.bad()) throw Error(ErrorKind::stream, "read error on input stream");
    if (!have_header) throw Error(ErrorKind::format, "missing header");
    if (result.report.accepted_count == 0) {
        std::string msg = "no rows accepted";
        if (!result.report.rejected.empty())
            msg += " (" + std::to_string(result.report.rejected.size()) + " rejected; first at line " +
                   std::to_string(result.report.rejected.front().line) + ": " +
                   result.report.rejected.front().reason + ")";
        throw Error(ErrorKind::empty_dataset, msg);
    }
    return result;
}

inline ParseResult parse_consumption_csv(std::string_view text, const ParseOptions& options = {}) {
    std::istringstream in{std::string(text)};
    return parse_consumption_csv(in, options);
}

struct Household {
    std::string id;
    GeoPoint location;
    PlanarPoint position;

    friend bool operator==(const Household&, const Household&) = default;
};

struct DailyReading {
    std::uint32_t household = 0;  // index into Dataset::households()
    Day date{};
    double total = 0.0;
    double peak = 0.0;
    double valley = 0.0;

    friend bool operator==(const DailyReading&, const DailyReading&) = default;
};

/// Immutable, indexed consumption data. Households are ordered by id and
/// readings by (date, household), so two datasets built from the same set
/// of records compare equal regardless of input order.
class Dataset {
public:
    std::span<const Household> households() const { return households_; }
    std::span<const DailyReading> readings() const { return readings_; }

    Day first_day() const { return first_; }
    Day last_day() const { return last_; }
    long day_span() const { return day_count(first_, last_); }

    const Projection& projection() const { return projection_; }
    const BoundingBox& bounding_box() const { return bbox_; }

    std::optional<std::uint32_t> find_household(std::string_view id) const {
        const auto it = std::lower_bound(households_.begin(), households_.end(), id,
                                         [](const Household& h, std::string_view key) { return h.id < key; });
        if (it == households_.end() || it->id != id) return std::nullopt;
        return static_cast<std::uint32_t>(it - households_.begin());
    }

    /// Readings with first <= date <= last, in (date, household) order.
    std::span<const DailyReading> readings_between(Day first, Day last) const {
        const auto lo = std::lower_bound(readings_.begin(), readings_.end(), first,
                                         [](const DailyReading& r, Day d) { return r.date < d; });
        const auto hi = std::upper_bound(lo, readings_.end(), last,
                                         [](Day d, const DailyReading& r) { return d < r.date; });
        return {readings_.data() + (lo - readings_.begin()), static_cast<std::size_t>(hi - lo)};
    }

    std::vector<ConsumptionRecord> to_records() const {
        std::vector<ConsumptionRecord> out;
        out.reserve(readings_.size());
        for (const auto& r : readings_) {
            const auto& h = households_[r.household];
            out.push_back({h.id, r.date, r.total, r.peak, r.valley, h.location.lon, h.location.lat});
        }
        return out;
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;

    friend Dataset build_dataset(std::span<const ConsumptionRecord> records);

private:
    std::vector<Household> households_;
    std::vector<DailyReading> readings_;
    Day first_{};
    Day last_{};
    Projection projection_;
    BoundingBox bbox_;
};

inline Dataset build_dataset(std::span<const ConsumptionRecord> records) {
    if (records.empty()) throw Error(ErrorKind::empty_dataset, "no records");

    std::map<std::string, GeoPoint, std::less<>> locations;
    for (const auto& r : records) {
        if (auto reason = check_record_bounds(r))
            throw Error(ErrorKind::range, "household " + r.household_id + " on " + format_day(r.date) + ": " + *reason);
        const GeoPoint loc{r.lon, r.lat};
        auto [it, inserted] = locations.emplace(r.household_id, loc);
        if (!inserted && it->second != loc)
            throw Error(ErrorKind::inconsistency, "household " + r.household_id + " has conflicting locations");
    }

    Dataset ds;
    double sum_lon = 0.0, sum_lat = 0.0;
    ds.households_.reserve(locations.size());
    for (const auto& [id, loc] : locations) {
        ds.households_.push_back({id, loc, {}});
        sum_lon += loc.lon;
        sum_lat += loc.lat;
    }
    const double n = static_cast<double>(ds.households_.size());
    ds.projection_ = Projection({sum_lon / n, sum_lat / n});
    for (auto& h : ds.households_) {
        h.position = ds.projection_.forward(h.location);
        ds.bbox_.extend(h.position);
    }

    ds.readings_.reserve(records.size());
    for (const auto& r : records) {
        const auto idx = *ds.find_household(r.household_id);
        ds.readings_.push_back({idx, r.date, r.pap_r, r.pap_r1, r.pap_r2});
    }
    std::sort(ds.readings_.begin(), ds.readings_.end(), [](const DailyReading& a, const DailyReading& b) {
        return a.date != b.date ? a.date < b.date : a.household < b.household;
    });
    for (std::size_t i = 1; i < ds.readings_.size(); ++i) {
        const auto& a = ds.readings_[i - 1];
        const auto& b = ds.readings_[i];
        if (a.date == b.date && a.household == b.household)
            throw Error(ErrorKind::duplicate, "duplicate record for household " + ds.households_[a.household].id +
                                                  " on " + format_day(a.date));
    }
    ds.first_ = ds.readings_.front().date;
    ds.last_ = ds.readings_.back().date;
    return ds;
}

inline Dataset build_dataset(const std::vector<ConsumptionRecord>& records) {
    return build_dataset(std::span<const ConsumptionRecord>(records));
}

/// Writes records in the ingest CSV format. Numbers use the shortest
/// representation that parses back to the same double.
inline void write_consumption_csv(std::ostream& out, std::span<const ConsumptionRecord> records) {
    out << csv_header << '\n';
    for (const auto& r : records) {
        out << r.household_id << ',' << format_day(r.date) << ',' << detail::format_number(r.pap_r) << ','
            << detail::format_number(r.pap_r1) << ',' << detail::format_number(r.pap_r2) << ','
            << detail::format_number(r.lon) << ',' << detail::format_number(r.lat) << '\n';
    }
}

inline std::string to_csv(const Dataset& ds) {
    std::ostringstream out;
    const auto records = ds.to_records();
    write_consumption_csv(out, records);
    return out.str();
}

}  // namespace demandflow
