#pragma once

// Spatiotemporal demand-shift as a potential flow.
//
// The potential phi of a pair of periods is the discrepancy between their
// demand fields (later minus earlier), and the shift velocity is its
// gradient, nu = grad(phi). A task expands into consecutive period pairs;
// each pair yields phi, nu, window totals and flow-map arrows.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demandflow/error.hpp"
#include "demandflow/geo.hpp"
#include "demandflow/ingest.hpp"
#include "demandflow/spatial.hpp"
#include "demandflow/temporal.hpp"

namespace demandflow {

enum class TaskKind { peak_valley, regular_split, multi_period };
enum class TaskState { pending, running, done, failed };

constexpr std::string_view to_string(TaskKind k) noexcept {
    switch (k) {
    case TaskKind::peak_valley: return "peak_valley";
    case TaskKind::regular_split: return "regular_split";
    case TaskKind::multi_period: return "multi_period";
    }
    return "peak_valley";
}

inline std::optional<TaskKind> parse_task_kind(std::string_view s) {
    if (s == "peak_valley") return TaskKind::peak_valley;
    if (s == "regular_split") return TaskKind::regular_split;
    if (s == "multi_period") return TaskKind::multi_period;
    return std::nullopt;
}

constexpr std::string_view to_string(TaskState s) noexcept {
    switch (s) {
    case TaskState::pending: return "pending";
    case TaskState::running: return "running";
    case TaskState::done: return "done";
    case TaskState::failed: return "failed";
    }
    return "pending";
}

struct ShiftTask {
    TaskKind kind = TaskKind::peak_valley;
    TimePeriod base_period;
    int split_count = 2;               // regular_split
    std::vector<TimePeriod> periods;   // multi_period, ordered and disjoint

    int grid_nx = 128;
    int grid_ny = 128;
    std::optional<GridSpec> grid;      // explicit grid; otherwise fitted to the data
    std::optional<Bandwidth> bandwidth;  // nullopt = automatic

    int windows_x = 8;
    int windows_y = 8;
    int arrow_stride = 4;
    double min_magnitude = 0.05;
    bool per_day = false;  // divide phi and nu by the day gap between periods

    TaskState state = TaskState::pending;
    std::string error;
};

/// Structural checks that need no data. Throws invalid_task.
inline void validate_task(const ShiftTask& t) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_task, msg); };
    auto check_period = [&](const TimePeriod& p) {
        if (p.end < p.start) fail("period end precedes start: " + describe(p));
    };
    check_period(t.base_period);
    if (t.kind == TaskKind::regular_split && t.split_count < 2)
        fail("regular_split needs split_count >= 2, got " + std::to_string(t.split_count));
    if (t.kind == TaskKind::multi_period) {
        if (t.periods.size() < 2) fail("multi_period needs at least two periods");
        for (std::size_t i = 0; i < t.periods.size(); ++i) {
            check_period(t.periods[i]);
            if (i > 0 && !(t.periods[i - 1].end < t.periods[i].start))
                fail("multi_period periods must be ordered and non-overlapping: " + describe(t.periods[i - 1]) +
                     " and " + describe(t.periods[i]));
        }
    }
    if (t.grid) {
        if (t.grid->nx < 3 || t.grid->ny < 3) fail("grid needs at least 3 cells per axis for the gradient");
    } else if (t.grid_nx < 3 || t.grid_ny < 3) {
        fail("grid needs at least 3 cells per axis for the gradient");
    }
    const int nx = t.grid ? t.grid->nx : t.grid_nx;
    const int ny = t.grid ? t.grid->ny : t.grid_ny;
    if (t.windows_x < 1 || t.windows_y < 1 || t.windows_x > nx || t.windows_y > ny)
        fail("window counts must lie in [1, grid cells] per axis");
    if (t.arrow_stride < 1) fail("arrow stride must be >= 1");
    if (!(t.min_magnitude >= 0.0 && t.min_magnitude < 1.0)) fail("min_magnitude must lie in [0, 1)");
}

/// Structural checks plus every period lying inside the dataset.
inline void validate_task(const ShiftTask& t, const Dataset& ds) {
    validate_task(t);
    auto in_range = [&](const TimePeriod& p) {
        try {
            validate_period(ds, p);
        } catch (const Error& e) {
            throw Error(ErrorKind::invalid_task, e.what());
        }
    };
    if (t.kind == TaskKind::multi_period)
        for (const auto& p : t.periods) in_range(p);
    else
        in_range(t.base_period);
}

struct PeriodPair {
    TimePeriod a;  // earlier / reference snapshot
    TimePeriod b;  // later / compared snapshot

    friend bool operator==(const PeriodPair&, const PeriodPair&) = default;
};

/// Splits [start, end] into k contiguous runs of near-equal length; the
/// first (days mod k) runs get one extra day.
inline std::vector<TimePeriod> split_period(const TimePeriod& p, int k) {
    const long days = p.days();
    if (k < 1 || days < k)
        throw Error(ErrorKind::split, "cannot split " + std::to_string(days) + " days into " + std::to_string(k) +
                                          " non-empty sub-periods");
    const long base = days / k;
    const long extra = days % k;
    std::vector<TimePeriod> out;
    Day cursor = p.start;
    for (int i = 0; i < k; ++i) {
        const long len = base + (i < extra ? 1 : 0);
        out.push_back({cursor, cursor + std::chrono::days{len - 1}, p.band});
        cursor += std::chrono::days{len};
    }
    return out;
}

inline std::vector<PeriodPair> expand_task(const ShiftTask& task, const Dataset& ds) {
    validate_task(task, ds);
    std::vector<PeriodPair> pairs;
    switch (task.kind) {
    case TaskKind::peak_valley: {
        TimePeriod peak = task.base_period, valley = task.base_period;
        peak.band = Band::peak_window;
        valley.band = Band::valley_window;
        pairs.push_back({peak, valley});
        break;
    }
    case TaskKind::regular_split: {
        const auto parts = split_period(task.base_period, task.split_count);
        for (std::size_t i = 1; i < parts.size(); ++i) pairs.push_back({parts[i - 1], parts[i]});
        break;
    }
    case TaskKind::multi_period:
        for (std::size_t i = 1; i < task.periods.size(); ++i) pairs.push_back({task.periods[i - 1], task.periods[i]});
        break;
    }
    return pairs;
}

struct PotentialField {
    ScalarField normalized;  // field_B - field_A, distributions only
    ScalarField kwh;         // s_B*field_B - s_A*field_A, kWh per m^2
};

inline PotentialField potential_field(const ScalarField& a, const ScalarField& b) {
    if (!(a.grid == b.grid) || a.values.size() != b.values.size())
        throw Error(ErrorKind::grid, "potential needs both fields on the same grid");
    PotentialField phi{{a.grid, std::vector<double>(a.values.size()), 1.0},
                       {a.grid, std::vector<double>(a.values.size()), 1.0}};
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        phi.normalized.values[k] = b.values[k] - a.values[k];
        phi.kwh.values[k] = b.scale_kwh * b.values[k] - a.scale_kwh * a.values[k];
    }
    return phi;
}

struct VectorField {
    GridSpec grid;
    std::vector<double> u;
    std::vector<double> v;

    double magnitude(std::size_t k) const { return std::hypot(u[k], v[k]); }
};

/// Gradient of phi: central differences inside, one-sided at the edges.
inline VectorField velocity_field(const ScalarField& phi) {
    const auto& g = phi.grid;
    g.validate(3);
    VectorField nu{g, std::vector<double>(g.cell_count()), std::vector<double>(g.cell_count())};
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const auto k = g.index(i, j);
            if (i == 0)
                nu.u[k] = (phi.at(1, j) - phi.at(0, j)) / g.dx;
            else if (i == g.nx - 1)
                nu.u[k] = (phi.at(i, j) - phi.at(i - 1, j)) / g.dx;
            else
                nu.u[k] = (phi.at(i + 1, j) - phi.at(i - 1, j)) / (2.0 * g.dx);

            if (j == 0)
                nu.v[k] = (phi.at(i, 1) - phi.at(i, 0)) / g.dy;
            else if (j == g.ny - 1)
                nu.v[k] = (phi.at(i, j) - phi.at(i, j - 1)) / g.dy;
            else
                nu.v[k] = (phi.at(i, j + 1) - phi.at(i, j - 1)) / (2.0 * g.dy);
        }
    }
    return nu;
}

struct WindowStat {
    int i = 0;  // window column (x)
    int j = 0;  // window row (y)
    double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
    double signed_change = 0.0;  // kWh
    double abs_change = 0.0;     // kWh
};

namespace detail {

// Cell boundaries of `parts` near-equal runs over n cells, remainder first.
inline std::vector<int> partition_bounds(int n, int parts) {
    std::vector<int> bounds{0};
    const int base = n / parts, extra = n % parts;
    for (int p = 0; p < parts; ++p) bounds.push_back(bounds.back() + base + (p < extra ? 1 : 0));
    return bounds;
}

}  // namespace detail

inline std::vector<WindowStat> window_summary(const ScalarField& phi_kwh, int windows_x, int windows_y) {
    const auto& g = phi_kwh.grid;
    if (windows_x < 1 || windows_y < 1 || windows_x > g.nx || windows_y > g.ny)
        throw Error(ErrorKind::grid, "window counts must lie in [1, grid cells] per axis");
    const auto bx = detail::partition_bounds(g.nx, windows_x);
    const auto by = detail::partition_bounds(g.ny, windows_y);
    const double area = g.cell_area();

    std::vector<WindowStat> out;
    out.reserve(static_cast<std::size_t>(windows_x) * windows_y);
    for (int wj = 0; wj < windows_y; ++wj) {
        for (int wi = 0; wi < windows_x; ++wi) {
            WindowStat w;
            w.i = wi;
            w.j = wj;
            w.xmin = g.x0 + bx[wi] * g.dx;
            w.xmax = g.x0 + bx[wi + 1] * g.dx;
            w.ymin = g.y0 + by[wj] * g.dy;
            w.ymax = g.y0 + by[wj + 1] * g.dy;
            double s = 0.0, a = 0.0;
            for (int j = by[wj]; j < by[wj + 1]; ++j)
                for (int i = bx[wi]; i < bx[wi + 1]; ++i) {
                    const double val = phi_kwh.at(i, j);
                    s += val;
                    a += std::abs(val);
                }
            w.signed_change = s * area;
            w.abs_change = a * area;
            out.push_back(w);
        }
    }
    return out;
}

struct Arrow {
    int i = 0;
    int j = 0;
    PlanarPoint origin;
    GeoPoint origin_geo;
    double ux = 0.0;  // unit direction
    double uy = 0.0;
    double magnitude = 0.0;
    double length_m = 0.0;  // display length, proportional to magnitude
};

/// Samples every stride-th cell from (0, 0). Arrows weaker than
/// min_magnitude times the strongest cell anywhere in the field are dropped,
/// as are zero vectors. The strongest arrow is drawn stride * 0.9 cells long.
inline std::vector<Arrow> flow_arrows(const VectorField& nu, int stride, double min_magnitude,
                                      const Projection* projection = nullptr) {
    if (stride < 1) throw Error(ErrorKind::grid, "arrow stride must be >= 1");
    const auto& g = nu.grid;
    double max_mag = 0.0;
    for (std::size_t k = 0; k < nu.u.size(); ++k) max_mag = std::max(max_mag, nu.magnitude(k));
    std::vector<Arrow> out;
    if (!(max_mag > 0.0)) return out;

    const double full_length = 0.9 * stride * std::min(g.dx, g.dy);
    for (int j = 0; j < g.ny; j += stride) {
        for (int i = 0; i < g.nx; i += stride) {
            const auto k = g.index(i, j);
            const double mag = nu.magnitude(k);
            if (mag == 0.0 || mag < min_magnitude * max_mag) continue;
            Arrow a;
            a.i = i;
            a.j = j;
            a.origin = g.cell_center(i, j);
            if (projection) a.origin_geo = projection->inverse(a.origin);
            a.ux = nu.u[k] / mag;
            a.uy = nu.v[k] / mag;
            a.magnitude = mag;
            a.length_m = full_length * mag / max_mag;
            out.push_back(a);
        }
    }
    return out;
}

struct ShiftPair {
    std::string label;
    PeriodPair periods;
    double scale_a_kwh = 0.0;
    double scale_b_kwh = 0.0;
    PotentialField phi;
    VectorField nu;
    std::vector<WindowStat> windows;
    std::vector<Arrow> arrows;
};

struct ShiftResult {
    GridSpec grid;
    Bandwidth bandwidth;
    Projection projection;
    std::vector<ShiftPair> pairs;
};

struct FieldSetup {
    GridSpec grid;
    Bandwidth bandwidth;
};

/// Resolves the grid and bandwidth shared by every pair of a task. The
/// automatic bandwidth uses all household positions with equal weight, so
/// each snapshot of the task is smoothed identically.
inline FieldSetup resolve_field_setup(const ShiftTask& task, const Dataset& ds) {
    std::vector<WeightedPoint> all;
    all.reserve(ds.households().size());
    const double w = 1.0 / static_cast<double>(ds.households().size());
    for (const auto& h : ds.households()) all.push_back({h.position, w});

    FieldSetup setup;
    if (task.grid) {
        setup.grid = *task.grid;
        setup.grid.validate(3);
        setup.bandwidth = task.bandwidth ? *task.bandwidth
                                         : default_bandwidth(all, std::max(setup.grid.dx, setup.grid.dy));
        return setup;
    }
    const Bandwidth initial = task.bandwidth ? *task.bandwidth : default_bandwidth(all);
    setup.grid = fit_grid(ds.bounding_box(), task.grid_nx, task.grid_ny, initial);
    setup.grid.validate(3);
    setup.bandwidth = task.bandwidth ? *task.bandwidth
                                     : default_bandwidth(all, std::max(setup.grid.dx, setup.grid.dy));
    return setup;
}

namespace detail {

inline double midpoint_days(const TimePeriod& p) {
    return static_cast<double>(p.start.time_since_epoch().count() + p.end.time_since_epoch().count()) / 2.0;
}

struct PeriodKey {
    long start, end;
    int band;
    friend auto operator<=>(const PeriodKey&, const PeriodKey&) = default;
};

}  // namespace detail

/// All-or-nothing: on failure the task is marked failed with the first
/// error and the exception propagates; nothing partial is returned.
inline ShiftResult run_task(ShiftTask& task, const Dataset& ds) {
    task.state = TaskState::running;
    try {
        const auto pairs = expand_task(task, ds);
        const auto setup = resolve_field_setup(task, ds);

        ShiftResult result{setup.grid, setup.bandwidth, ds.projection(), {}};
        std::map<detail::PeriodKey, ScalarField> cache;
        auto field_for = [&](const TimePeriod& p) -> const ScalarField& {
            const detail::PeriodKey key{p.start.time_since_epoch().count(), p.end.time_since_epoch().count(),
                                        static_cast<int>(p.band)};
            auto it = cache.find(key);
            if (it == cache.end())
                it = cache.emplace(key, estimate_demand_field(ds, p, setup.grid, setup.bandwidth)).first;
            return it->second;
        };

        for (const auto& pp : pairs) {
            const ScalarField& fa = field_for(pp.a);
            const ScalarField& fb = field_for(pp.b);
            ShiftPair out;
            out.label = describe(pp.a) + " -> " + describe(pp.b);
            out.periods = pp;
            out.scale_a_kwh = fa.scale_kwh;
            out.scale_b_kwh = fb.scale_kwh;
            out.phi = potential_field(fa, fb);
            if (task.per_day) {
                const double gap = detail::midpoint_days(pp.b) - detail::midpoint_days(pp.a);
                if (gap > 0.0)
                    for (double& v : out.phi.kwh.values) v /= gap;
            }
            out.nu = velocity_field(out.phi.kwh);
            out.windows = window_summary(out.phi.kwh, task.windows_x, task.windows_y);
            out.arrows = flow_arrows(out.nu, task.arrow_stride, task.min_magnitude, &result.projection);
            result.pairs.push_back(std::move(out));
        }
        task.state = TaskState::done;
        task.error.clear();
        return result;
    } catch (const std::exception& e) {
        task.state = TaskState::failed;
        task.error = e.what();
        throw;
    }
}

}  // namespace demandflow
