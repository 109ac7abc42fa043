#pragma once

// Weighted Gaussian kernel density estimation of spatial demand on a
// regular planar grid.
//
// A snapshot is the set of households with demand in one period and band.
// Each household becomes a WeightedPoint whose weight is its share of the
// snapshot's total demand, so every snapshot field integrates to one and
// fields from different periods are directly comparable. The snapshot total
// is carried alongside as ScalarField::scale_kwh to recover kWh.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "demandflow/error.hpp"
#include "demandflow/geo.hpp"
#include "demandflow/ingest.hpp"
#include "demandflow/temporal.hpp"

namespace demandflow {

/// Cell (i, j) covers [x0 + i*dx, x0 + (i+1)*dx) x [y0 + j*dy, y0 + (j+1)*dy);
/// values live at cell centers. Storage is row-major with rows along y.
struct GridSpec {
    int nx = 0;
    int ny = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double dx = 1.0;
    double dy = 1.0;

    std::size_t cell_count() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
    double cell_area() const { return dx * dy; }
    double xmax() const { return x0 + nx * dx; }
    double ymax() const { return y0 + ny * dy; }

    PlanarPoint cell_center(int i, int j) const { return {x0 + (i + 0.5) * dx, y0 + (j + 0.5) * dy}; }

    bool contains(PlanarPoint p) const { return p.x >= x0 && p.x <= xmax() && p.y >= y0 && p.y <= ymax(); }

    void validate(int min_cells = 2) const {
        if (nx < min_cells || ny < min_cells)
            throw Error(ErrorKind::grid, "grid needs at least " + std::to_string(min_cells) + " cells per axis, got " +
                                             std::to_string(nx) + "x" + std::to_string(ny));
        if (!(dx > 0.0) || !(dy > 0.0) || !std::isfinite(dx) || !std::isfinite(dy) || !std::isfinite(x0) ||
            !std::isfinite(y0))
            throw Error(ErrorKind::grid, "grid cell size must be positive and finite");
    }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Symmetric positive-definite 2x2 smoothing matrix, in m^2.
class Bandwidth {
public:
    Bandwidth() : Bandwidth(1.0, 0.0, 0.0, 1.0) {}

    Bandwidth(double h11, double h12, double h21, double h22) {
        const double scale = std::max({std::abs(h11), std::abs(h12), std::abs(h21), std::abs(h22)});
        if (!std::isfinite(h11) || !std::isfinite(h12) || !std::isfinite(h21) || !std::isfinite(h22))
            throw Error(ErrorKind::bandwidth, "bandwidth matrix has non-finite entries");
        if (std::abs(h12 - h21) > 1e-12 * scale) throw Error(ErrorKind::bandwidth, "bandwidth matrix is not symmetric");
        h11_ = h11;
        h12_ = 0.5 * (h12 + h21);
        h22_ = h22;
        const double half_trace = 0.5 * (h11_ + h22_);
        const double det = h11_ * h22_ - h12_ * h12_;
        const double disc = std::sqrt(std::max(0.0, half_trace * half_trace - det));
        if (!(half_trace - disc > 0.0) || !(det > 0.0))
            throw Error(ErrorKind::bandwidth, "bandwidth matrix is not positive definite");
        inv11_ = h22_ / det;
        inv12_ = -h12_ / det;
        inv22_ = h11_ / det;
        norm_ = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
    }

    static Bandwidth isotropic(double h) { return diagonal(h, h); }
    static Bandwidth diagonal(double hx, double hy) {
        if (!(hx > 0.0) || !(hy > 0.0)) throw Error(ErrorKind::bandwidth, "bandwidth must be positive");
        return Bandwidth(hx * hx, 0.0, 0.0, hy * hy);
    }

    double h11() const { return h11_; }
    double h12() const { return h12_; }
    double h22() const { return h22_; }
    bool is_diagonal() const { return h12_ == 0.0; }

    /// Marginal standard deviations along x and y.
    double sigma_x() const { return std::sqrt(h11_); }
    double sigma_y() const { return std::sqrt(h22_); }

    /// 1 / (2*pi*sqrt(det H))
    double normalization() const { return norm_; }

    /// u^T H^-1 u
    double mahalanobis_sq(double ux, double uy) const {
        return inv11_ * ux * ux + 2.0 * inv12_ * ux * uy + inv22_ * uy * uy;
    }

    friend bool operator==(const Bandwidth& a, const Bandwidth& b) {
        return a.h11_ == b.h11_ && a.h12_ == b.h12_ && a.h22_ == b.h22_;
    }

private:
    double h11_ = 1.0, h12_ = 0.0, h22_ = 1.0;
    double inv11_ = 1.0, inv12_ = 0.0, inv22_ = 1.0;
    double norm_ = 0.0;
};

/// Normalized bivariate Gaussian K_H(u).
inline double gaussian_kernel(PlanarPoint u, const Bandwidth& H) {
    return H.normalization() * std::exp(-0.5 * H.mahalanobis_sq(u.x, u.y));
}

struct ScalarField {
    GridSpec grid;
    std::vector<double> values;
    double scale_kwh = 1.0;

    double at(int i, int j) const { return values[grid.index(i, j)]; }
    double& at(int i, int j) { return values[grid.index(i, j)]; }

    /// Midpoint-rule integral over the grid.
    double integral() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s * grid.cell_area();
    }
};

struct WeightedPoint {
    PlanarPoint x;
    double c = 0.0;
};

inline std::vector<double> normalize_weights(std::span<const double> demands) {
    double sum = 0.0;
    for (double d : demands) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw Error(ErrorKind::degenerate_weights, "demands must be finite and >= 0");
        sum += d;
    }
    if (!(sum > 0.0)) throw Error(ErrorKind::degenerate_weights, "all demands are zero; no field can be formed");
    std::vector<double> out;
    out.reserve(demands.size());
    for (double d : demands) out.push_back(d / sum);
    return out;
}

/// sum_k c_k K_H(center - x_k) at every cell center, without renormalizing
/// the weights. Per cell the terms are accumulated in point order, so the
/// result is independent of anything but the inputs.
inline std::vector<double> evaluate_kde(std::span<const WeightedPoint> points, const GridSpec& grid,
                                        const Bandwidth& H) {
    grid.validate();
    std::vector<double> values(grid.cell_count(), 0.0);
    const double norm = H.normalization();

    if (H.is_diagonal()) {
        // exp(-q/2) factors into an x part and a y part.
        const double ax = -0.5 / H.h11();
        const double ay = -0.5 / H.h22();
        std::vector<double> ex(grid.nx), ey(grid.ny);
        for (const auto& p : points) {
            for (int i = 0; i < grid.nx; ++i) {
                const double u = grid.x0 + (i + 0.5) * grid.dx - p.x.x;
                ex[i] = std::exp(ax * u * u);
            }
            const double w = p.c * norm;
            for (int j = 0; j < grid.ny; ++j) {
                const double v = grid.y0 + (j + 0.5) * grid.dy - p.x.y;
                ey[j] = w * std::exp(ay * v * v);
            }
            for (int j = 0; j < grid.ny; ++j) {
                double* row = values.data() + grid.index(0, j);
                const double wy = ey[j];
                for (int i = 0; i < grid.nx; ++i) row[i] += wy * ex[i];
            }
        }
        return values;
    }

    for (const auto& p : points) {
        const double w = p.c * norm;
        for (int j = 0; j < grid.ny; ++j) {
            const double v = grid.y0 + (j + 0.5) * grid.dy - p.x.y;
            double* row = values.data() + grid.index(0, j);
            for (int i = 0; i < grid.nx; ++i) {
                const double u = grid.x0 + (i + 0.5) * grid.dx - p.x.x;
                row[i] += w * std::exp(-0.5 * H.mahalanobis_sq(u, v));
            }
        }
    }
    return values;
}

struct Snapshot {
    std::vector<WeightedPoint> points;  // normalized weights, household order
    std::vector<std::uint32_t> households;
    double total_kwh = 0.0;
};

/// Per-household band demand over the period, normalized to weights.
/// Households with zero demand in the period carry no weight and are dropped.
inline Snapshot snapshot_points(const Dataset& ds, const TimePeriod& period) {
    validate_period(ds, period);
    const auto readings = ds.readings_between(period.start, period.end);
    if (readings.empty()) throw Error(ErrorKind::empty_period, "no records in period " + describe(period));

    std::vector<double> demand(ds.households().size(), 0.0);
    for (const auto& r : readings) demand[r.household] += band_value(r, period.band);

    Snapshot snap;
    std::vector<double> positive;
    for (std::uint32_t h = 0; h < demand.size(); ++h) {
        if (demand[h] > 0.0) {
            snap.households.push_back(h);
            positive.push_back(demand[h]);
        }
    }
    if (positive.empty())
        throw Error(ErrorKind::degenerate_weights, "all demands are zero in period " + describe(period));
    const auto weights = normalize_weights(positive);
    for (double d : positive) snap.total_kwh += d;
    snap.points.reserve(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k)
        snap.points.push_back({ds.households()[snap.households[k]].position, weights[k]});
    return snap;
}

inline ScalarField estimate_demand_field(const Dataset& ds, const TimePeriod& period, const GridSpec& grid,
                                         const Bandwidth& H) {
    grid.validate();
    const auto snap = snapshot_points(ds, period);
    for (const auto& p : snap.points)
        if (!grid.contains(p.x))
            throw Error(ErrorKind::coverage, "grid does not cover household at (" + std::to_string(p.x.x) + ", " +
                                                 std::to_string(p.x.y) + ")");
    return {grid, evaluate_kde(snap.points, grid, H), snap.total_kwh};
}

/// Silverman-style isotropic bandwidth: h = sigma * n^(-1/6), with sigma the
/// mean of the per-axis sample standard deviations, floored at min_h.
inline Bandwidth default_bandwidth(std::span<const WeightedPoint> points, double min_h = 0.0) {
    const auto n = points.size();
    if (n < 2) throw Error(ErrorKind::bandwidth, "bandwidth selection needs at least two points");
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x.x;
        my += p.x.y;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0;
    for (const auto& p : points) {
        sxx += (p.x.x - mx) * (p.x.x - mx);
        syy += (p.x.y - my) * (p.x.y - my);
    }
    const double sigma =
        0.5 * (std::sqrt(sxx / static_cast<double>(n - 1)) + std::sqrt(syy / static_cast<double>(n - 1)));
    if (!(sigma > 0.0))
        throw Error(ErrorKind::bandwidth, "all points coincide; supply an explicit bandwidth");
    const double h = std::max(sigma * std::pow(static_cast<double>(n), -1.0 / 6.0), min_h);
    return Bandwidth::isotropic(h);
}

namespace detail {

// Solves for the cell size d along one axis with margin m = max(2*sigma, 4*d)
// on each side of an extent of the given width: d = (width + 2m) / n.
inline std::pair<double, double> fit_axis(double lo, double width, int n, double sigma) {
    const double d_a = (width + 4.0 * sigma) / n;
    if (4.0 * d_a <= 2.0 * sigma) return {lo - 2.0 * sigma, d_a};
    if (n > 8) {
        const double d_b = width / (n - 8);
        if (4.0 * d_b >= 2.0 * sigma) return {lo - 4.0 * d_b, d_b};
    }
    // Too few cells for a 4-cell margin; fall back to the bandwidth margin.
    return {lo - 2.0 * sigma, d_a};
}

}  // namespace detail

/// Grid of nx x ny cells covering the box with margin max(2*sigma, 4*cell)
/// per axis, sigma being the bandwidth's marginal deviation on that axis.
inline GridSpec fit_grid(const BoundingBox& box, int nx, int ny, const Bandwidth& H) {
    if (box.empty()) throw Error(ErrorKind::grid, "cannot fit a grid to an empty bounding box");
    GridSpec g{nx, ny, 0.0, 0.0, 1.0, 1.0};
    if (nx < 2 || ny < 2) g.validate();
    std::tie(g.x0, g.dx) = detail::fit_axis(box.xmin, box.width(), nx, H.sigma_x());
    std::tie(g.y0, g.dy) = detail::fit_axis(box.ymin, box.height(), ny, H.sigma_y());
    g.validate();
    return g;
}

}  // namespace demandflow
