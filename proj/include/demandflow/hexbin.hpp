#pragma once

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "demandflow/error.hpp"
#include "demandflow/geo.hpp"
#include "demandflow/ingest.hpp"
#include "demandflow/temporal.hpp"

namespace demandflow {

/// Axial coordinates of a pointy-top hexagon.
struct HexCoord {
    int q = 0;
    int r = 0;

    friend auto operator<=>(const HexCoord&, const HexCoord&) = default;
};

/// Pointy-top hexagonal tiling with circumradius `size`, anchored so that
/// hexagon (0, 0) is centered on `anchor`.
class HexLayout {
public:
    HexLayout(PlanarPoint anchor, double size) : anchor_(anchor), size_(size) {
        if (!(size > 0.0) || !std::isfinite(size)) throw Error(ErrorKind::range, "hexagon size must be positive");
    }

    double size() const { return size_; }

    PlanarPoint center(HexCoord h) const {
        return {anchor_.x + size_ * std::sqrt(3.0) * (h.q + 0.5 * h.r), anchor_.y + size_ * 1.5 * h.r};
    }

    /// Cube rounding: round all three cube coordinates, then recompute the
    /// one with the largest rounding error from the other two. Equal errors
    /// resolve in the order q, then r. Points on a shared edge therefore
    /// always land in the same hexagon.
    HexCoord locate(PlanarPoint p) const {
        const double x = p.x - anchor_.x;
        const double y = p.y - anchor_.y;
        const double qf = (std::sqrt(3.0) / 3.0 * x - y / 3.0) / size_;
        const double rf = (2.0 / 3.0 * y) / size_;
        const double sf = -qf - rf;
        double q = std::round(qf), r = std::round(rf), s = std::round(sf);
        const double dq = std::abs(q - qf), dr = std::abs(r - rf), ds = std::abs(s - sf);
        if (dq >= dr && dq >= ds)
            q = -r - s;
        else if (dr >= ds)
            r = -q - s;
        return {static_cast<int>(q), static_cast<int>(r)};
    }

private:
    PlanarPoint anchor_;
    double size_;
};

struct HexCell {
    HexCoord coord;
    PlanarPoint center;
    double demand = 0.0;
    std::size_t household_count = 0;
};

/// Band demand per hexagon over the period. Tiling is anchored at the
/// dataset bounding box's lower-left corner; empty hexagons are omitted and
/// cells come out ordered by (q, r).
inline std::vector<HexCell> hexbin_demand(const Dataset& ds, const TimePeriod& period, double hex_size) {
    validate_period(ds, period);
    const HexLayout layout({ds.bounding_box().xmin, ds.bounding_box().ymin}, hex_size);

    std::vector<double> demand(ds.households().size(), 0.0);
    std::vector<bool> present(ds.households().size(), false);
    for (const auto& r : ds.readings_between(period.start, period.end)) {
        demand[r.household] += band_value(r, period.band);
        present[r.household] = true;
    }

    std::map<HexCoord, HexCell> cells;
    for (std::size_t h = 0; h < demand.size(); ++h) {
        if (!present[h]) continue;
        const auto coord = layout.locate(ds.households()[h].position);
        auto& cell = cells[coord];
        cell.coord = coord;
        cell.demand += demand[h];
        ++cell.household_count;
    }

    std::vector<HexCell> out;
    out.reserve(cells.size());
    for (auto& [coord, cell] : cells) {
        cell.center = layout.center(coord);
        out.push_back(cell);
    }
    return out;
}

}  // namespace demandflow
