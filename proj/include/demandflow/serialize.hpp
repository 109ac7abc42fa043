#pragma once

// JSON encodings shared by the HTTP service and the CLI. Both emit result
// bodies through these functions so their bytes match.

#include <string>
#include <vector>

#include "json.hpp"

#include "demandflow/calendar.hpp"
#include "demandflow/error.hpp"
#include "demandflow/hexbin.hpp"
#include "demandflow/ingest.hpp"
#include "demandflow/shift.hpp"
#include "demandflow/spatial.hpp"
#include "demandflow/temporal.hpp"

namespace demandflow {

using Json = nlohmann::json;

inline Json to_json(const ValidationReport& r) {
    auto issues = [](const std::vector<ValidationIssue>& list) {
        Json a = Json::array();
        for (const auto& i : list) a.push_back({{"line", i.line}, {"reason", i.reason}});
        return a;
    };
    return {{"accepted_count", r.accepted_count},
            {"rejected", issues(r.rejected)},
            {"warnings", issues(r.warnings)}};
}

inline Json to_json(const TimePeriod& p) {
    return {{"start", format_day(p.start)}, {"end", format_day(p.end)}, {"band", to_string(p.band)}};
}

namespace detail {

inline Json dated_values(const std::vector<Day>& days, const std::vector<double>& values) {
    Json a = Json::array();
    for (std::size_t i = 0; i < days.size(); ++i) a.push_back({{"date", format_day(days[i])}, {"value", values[i]}});
    return a;
}

}  // namespace detail

inline Json to_json(const DemandSeries& s) {
    return {{"total", detail::dated_values(s.days, s.total)},
            {"peak", detail::dated_values(s.days, s.peak)},
            {"valley", detail::dated_values(s.days, s.valley)}};
}

inline Json to_json(const AuxLine& line) {
    Json segs = Json::array();
    for (const auto& s : line.segments)
        segs.push_back({{"date", format_day(s.start)},
                        {"end", format_day(s.end)},
                        {"days", s.day_count},
                        {"value", s.mean}});
    return {{"granularity", to_string(line.granularity)}, {"segments", segs}};
}

inline Json ratio_to_json(const std::vector<RatioPoint>& points, RatioKind kind) {
    Json a = Json::array();
    for (const auto& p : points) a.push_back({{"date", format_day(p.day)}, {"value", p.ratio}});
    return {{"kind", to_string(kind)}, {"values", a}};
}

inline Json to_json(const MeterStats& m) {
    return {{"total", m.total},
            {"peak", m.peak},
            {"valley", m.valley},
            {"mean_daily", m.mean_daily},
            {"household_count", m.household_count}};
}

inline Json to_json(const GridSpec& g) {
    return {{"nx", g.nx}, {"ny", g.ny}, {"x0", g.x0}, {"y0", g.y0}, {"dx", g.dx}, {"dy", g.dy}};
}

inline Json to_json(const ScalarField& f) {
    return {{"grid", to_json(f.grid)}, {"scale_kwh", f.scale_kwh}, {"values", f.values}};
}

inline Json to_json(const VectorField& f) {
    return {{"grid", to_json(f.grid)}, {"u", f.u}, {"v", f.v}};
}

inline Json to_json(const WindowStat& w) {
    return {{"i", w.i},
            {"j", w.j},
            {"extent", {w.xmin, w.ymin, w.xmax, w.ymax}},
            {"signed_change", w.signed_change},
            {"abs_change", w.abs_change}};
}

/// Arrows as a GeoJSON FeatureCollection of two-point LineStrings in lon/lat.
inline Json arrows_to_geojson(const std::vector<Arrow>& arrows, const Projection& projection) {
    Json features = Json::array();
    for (const auto& a : arrows) {
        const GeoPoint tail = projection.inverse(a.origin);
        const GeoPoint head =
            projection.inverse({a.origin.x + a.ux * a.length_m, a.origin.y + a.uy * a.length_m});
        features.push_back({{"type", "Feature"},
                            {"geometry",
                             {{"type", "LineString"},
                              {"coordinates", {{tail.lon, tail.lat}, {head.lon, head.lat}}}}},
                            {"properties",
                             {{"magnitude", a.magnitude},
                              {"direction", {a.ux, a.uy}},
                              {"cell", {a.i, a.j}},
                              {"origin_xy", {a.origin.x, a.origin.y}}}}});
    }
    return {{"type", "FeatureCollection"}, {"features", features}};
}

inline Json to_json(const Bandwidth& H) {
    return Json::array({Json::array({H.h11(), H.h12()}), Json::array({H.h12(), H.h22()})});
}

inline Json to_json(const ShiftResult& r) {
    Json pairs = Json::array();
    for (const auto& p : r.pairs) {
        Json windows = Json::array();
        for (const auto& w : p.windows) windows.push_back(to_json(w));
        pairs.push_back({{"label", p.label},
                         {"period_a", to_json(p.periods.a)},
                         {"period_b", to_json(p.periods.b)},
                         {"scale_a_kwh", p.scale_a_kwh},
                         {"scale_b_kwh", p.scale_b_kwh},
                         {"phi", to_json(p.phi.kwh)},
                         {"phi_norm", to_json(p.phi.normalized)},
                         {"nu", to_json(p.nu)},
                         {"windows", windows},
                         {"arrows", arrows_to_geojson(p.arrows, r.projection)}});
    }
    return {{"grid", to_json(r.grid)},
            {"bandwidth", to_json(r.bandwidth)},
            {"origin", {{"lon", r.projection.origin().lon}, {"lat", r.projection.origin().lat}}},
            {"pairs", pairs}};
}

/// The exact body served by /api/tasks/{id}/result and written by `shift`.
inline std::string result_body(const ShiftResult& r) { return to_json(r).dump() + "\n"; }

inline Json to_json(const std::vector<HexCell>& cells, const Projection& projection) {
    Json a = Json::array();
    for (const auto& c : cells) {
        const GeoPoint g = projection.inverse(c.center);
        a.push_back({{"q", c.coord.q},
                     {"r", c.coord.r},
                     {"center", {{"lon", g.lon}, {"lat", g.lat}}},
                     {"center_xy", {c.center.x, c.center.y}},
                     {"demand", c.demand},
                     {"household_count", c.household_count}});
    }
    return a;
}

inline Json dataset_summary(const Dataset& ds) {
    const auto& b = ds.bounding_box();
    return {{"households", ds.households().size()},
            {"records", ds.readings().size()},
            {"first_day", format_day(ds.first_day())},
            {"last_day", format_day(ds.last_day())},
            {"origin", {{"lon", ds.projection().origin().lon}, {"lat", ds.projection().origin().lat}}},
            {"bounding_box", {b.xmin, b.ymin, b.xmax, b.ymax}}};
}

/// Defaults applied to task fields the request leaves out.
struct TaskDefaults {
    int grid_nx = 128;
    int grid_ny = 128;
    int windows_x = 8;
    int windows_y = 8;
    int arrow_stride = 4;
    double min_magnitude = 0.05;
};

namespace detail {

inline Day day_field(const Json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw Error(ErrorKind::invalid_task, std::string("missing date '") + key + "'");
    const auto d = parse_day(j[key].get<std::string>());
    if (!d) throw Error(ErrorKind::invalid_task, std::string("invalid date in '") + key + "'");
    return *d;
}

inline Band band_field(const Json& j, Band fallback) {
    if (!j.contains("band")) return fallback;
    const auto b = j["band"].is_string() ? parse_band(j["band"].get<std::string>()) : std::nullopt;
    if (!b) throw Error(ErrorKind::invalid_task, "invalid band");
    return *b;
}

inline TimePeriod period_field(const Json& j) {
    return {day_field(j, "start"), day_field(j, "end"), band_field(j, Band::full_day)};
}

inline int int_field(const Json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) throw Error(ErrorKind::invalid_task, std::string("'") + key + "' must be an integer");
    return j[key].get<int>();
}

}  // namespace detail

/// Parses a task request. Throws invalid_task for anything malformed,
/// including invariant violations (k < 2, overlapping periods, ...).
inline ShiftTask task_from_json(const Json& j, const TaskDefaults& defaults = {}) {
    using detail::int_field;
    if (!j.is_object()) throw Error(ErrorKind::invalid_task, "task must be a JSON object");
    ShiftTask t;
    t.grid_nx = defaults.grid_nx;
    t.grid_ny = defaults.grid_ny;
    t.windows_x = defaults.windows_x;
    t.windows_y = defaults.windows_y;
    t.arrow_stride = defaults.arrow_stride;
    t.min_magnitude = defaults.min_magnitude;

    if (!j.contains("kind") || !j["kind"].is_string()) throw Error(ErrorKind::invalid_task, "missing 'kind'");
    const auto kind = parse_task_kind(j["kind"].get<std::string>());
    if (!kind) throw Error(ErrorKind::invalid_task, "unknown kind '" + j["kind"].get<std::string>() + "'");
    t.kind = *kind;

    if (t.kind == TaskKind::multi_period) {
        if (!j.contains("periods") || !j["periods"].is_array())
            throw Error(ErrorKind::invalid_task, "multi_period needs a 'periods' array");
        for (const auto& p : j["periods"]) {
            if (!p.is_object()) throw Error(ErrorKind::invalid_task, "each period must be an object");
            t.periods.push_back(detail::period_field(p));
        }
        if (!t.periods.empty())
            t.base_period = {t.periods.front().start, t.periods.back().end, t.periods.front().band};
    } else {
        t.base_period = detail::period_field(j);
    }
    if (t.kind == TaskKind::regular_split) t.split_count = int_field(j, "split_count", int_field(j, "k", 2));

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (g.is_number_integer()) {
            t.grid_nx = t.grid_ny = g.get<int>();
        } else if (g.is_object()) {
            t.grid_nx = int_field(g, "nx", t.grid_nx);
            t.grid_ny = int_field(g, "ny", t.grid_ny);
            if (g.contains("dx")) {
                GridSpec spec{t.grid_nx, t.grid_ny, 0, 0, 0, 0};
                try {
                    spec.x0 = g.at("x0").get<double>();
                    spec.y0 = g.at("y0").get<double>();
                    spec.dx = g.at("dx").get<double>();
                    spec.dy = g.at("dy").get<double>();
                } catch (const nlohmann::json::exception&) {
                    throw Error(ErrorKind::invalid_task, "explicit grid needs numeric nx, ny, x0, y0, dx, dy");
                }
                if (!(spec.dx > 0.0) || !(spec.dy > 0.0))
                    throw Error(ErrorKind::invalid_task, "grid cell size must be positive");
                t.grid = spec;
            }
        } else {
            throw Error(ErrorKind::invalid_task, "'grid' must be an integer or an object");
        }
    }

    if (j.contains("bandwidth")) {
        const auto& b = j["bandwidth"];
        try {
            if (b.is_string()) {
                if (b.get<std::string>() != "auto") throw Error(ErrorKind::invalid_task, "bandwidth must be 'auto', h, or a 2x2 matrix");
            } else if (b.is_number()) {
                t.bandwidth = Bandwidth::isotropic(b.get<double>());
            } else if (b.is_array() && b.size() == 2 && b[0].is_array() && b[1].is_array() && b[0].size() == 2 &&
                       b[1].size() == 2) {
                t.bandwidth = Bandwidth(b[0][0].get<double>(), b[0][1].get<double>(), b[1][0].get<double>(),
                                        b[1][1].get<double>());
            } else {
                throw Error(ErrorKind::invalid_task, "bandwidth must be 'auto', h, or a 2x2 matrix");
            }
        } catch (const Error& e) {
            throw Error(ErrorKind::invalid_task, e.what());
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorKind::invalid_task, "bandwidth matrix entries must be numbers");
        }
    }

    if (j.contains("windows")) {
        const auto& w = j["windows"];
        if (w.is_number_integer()) {
            t.windows_x = t.windows_y = w.get<int>();
        } else if (w.is_array() && w.size() == 2 && w[0].is_number_integer() && w[1].is_number_integer()) {
            t.windows_x = w[0].get<int>();
            t.windows_y = w[1].get<int>();
        } else {
            throw Error(ErrorKind::invalid_task, "'windows' must be an integer or [x, y]");
        }
    }
    t.arrow_stride = int_field(j, "arrow_stride", t.arrow_stride);
    if (j.contains("min_magnitude")) {
        if (!j["min_magnitude"].is_number()) throw Error(ErrorKind::invalid_task, "'min_magnitude' must be a number");
        t.min_magnitude = j["min_magnitude"].get<double>();
    }
    if (j.contains("per_day")) {
        if (!j["per_day"].is_boolean()) throw Error(ErrorKind::invalid_task, "'per_day' must be a boolean");
        t.per_day = j["per_day"].get<bool>();
    }
    validate_task(t);
    return t;
}

}  // namespace demandflow
