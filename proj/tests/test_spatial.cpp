#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "demandflow/spatial.hpp"
#include "support/oracle.hpp"
#include "support/synthetic.hpp"

using namespace demandflow;

namespace {

oracle::Grid to_oracle(const GridSpec& g) { return {g.nx, g.ny, g.x0, g.y0, g.dx, g.dy}; }

std::vector<oracle::Point> to_oracle(const std::vector<WeightedPoint>& pts) {
    std::vector<oracle::Point> out;
    for (const auto& p : pts) out.push_back({p.x.x, p.x.y, p.c});
    return out;
}

std::vector<WeightedPoint> random_points(std::mt19937_64& rng, std::size_t n, double spread) {
    std::normal_distribution<double> pos(0.0, spread);
    std::uniform_real_distribution<double> w(0.1, 5.0);
    std::vector<WeightedPoint> pts;
    for (std::size_t k = 0; k < n; ++k) pts.push_back({{pos(rng), pos(rng)}, w(rng)});
    return pts;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::invalid_task;
}

}  // namespace

TEST(Projection, OriginMapsToOrigin) {
    const auto p = project_coordinates(121.55, 31.22, 121.55, 31.22);
    EXPECT_EQ(p.x, 0.0);
    EXPECT_EQ(p.y, 0.0);
}

TEST(Projection, OneDegreeOfLatitude) {
    const auto p = project_coordinates(121.55, 32.22, 121.55, 31.22);
    EXPECT_EQ(p.x, 0.0);
    // R * pi / 180, evaluated in extended precision.
    EXPECT_NEAR(p.y, 111194.92664455873, 1e-6);
}

TEST(Projection, PreservesSignsAndInverts) {
    const Projection proj({121.55, 31.22});
    for (double dlon : {-0.1, 0.05}) {
        for (double dlat : {-0.07, 0.2}) {
            const auto p = proj.forward({121.55 + dlon, 31.22 + dlat});
            EXPECT_EQ(std::signbit(p.x), std::signbit(dlon));
            EXPECT_EQ(std::signbit(p.y), std::signbit(dlat));
            const auto back = proj.inverse(p);
            EXPECT_NEAR(back.lon, 121.55 + dlon, 1e-12);
            EXPECT_NEAR(back.lat, 31.22 + dlat, 1e-12);
        }
    }
}

TEST(NormalizeWeights, Examples) {
    const std::vector<double> d = {2, 3, 5};
    const auto c = normalize_weights(d);
    EXPECT_DOUBLE_EQ(c[0], 0.2);
    EXPECT_DOUBLE_EQ(c[1], 0.3);
    EXPECT_DOUBLE_EQ(c[2], 0.5);
    EXPECT_EQ(normalize_weights(std::vector<double>{7})[0], 1.0);
    EXPECT_EQ(kind_of([] { normalize_weights(std::vector<double>{0, 0}); }), ErrorKind::degenerate_weights);
    EXPECT_EQ(kind_of([] { normalize_weights(std::vector<double>{1, -1}); }), ErrorKind::degenerate_weights);
}

TEST(GaussianKernel, AnalyticValues) {
    const Bandwidth I;
    EXPECT_NEAR(gaussian_kernel({0, 0}, I), 0.15915494309189535, 1e-16);
    // e^(-1/2) / (2 pi), evaluated in extended precision.
    EXPECT_NEAR(gaussian_kernel({1, 0}, I), 0.09653235263005391, 1e-16);
    // Scaling H by s^2 scales the peak by 1/s^2.
    EXPECT_NEAR(gaussian_kernel({0, 0}, Bandwidth::isotropic(3.0)), 0.15915494309189535 / 9.0, 1e-16);
}

TEST(GaussianKernel, EvenSymmetry) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 2.0);
    const Bandwidth H(2.0, 0.7, 0.7, 1.5);
    for (int k = 0; k < 100; ++k) {
        const PlanarPoint u{n(rng), n(rng)};
        EXPECT_EQ(gaussian_kernel(u, H), gaussian_kernel({-u.x, -u.y}, H));
    }
}

TEST(Bandwidth, RejectsInvalidMatrices) {
    EXPECT_EQ(kind_of([] { Bandwidth(1, 0, 0, -1); }), ErrorKind::bandwidth);
    EXPECT_EQ(kind_of([] { Bandwidth(1, 2, 2, 1); }), ErrorKind::bandwidth);     // indefinite
    EXPECT_EQ(kind_of([] { Bandwidth(1, 0.5, 0.3, 1); }), ErrorKind::bandwidth); // asymmetric
    EXPECT_EQ(kind_of([] { Bandwidth(0, 0, 0, 0); }), ErrorKind::bandwidth);
    EXPECT_EQ(kind_of([] { Bandwidth::isotropic(0.0); }), ErrorKind::bandwidth);
    EXPECT_NO_THROW(Bandwidth(2, -1, -1, 2));
}

TEST(DemandField, SingleHouseholdAtCellCenter) {
    const auto ds = build_dataset(std::vector<ConsumptionRecord>{synth::record("H1", make_day(2019, 7, 1), 10, 7, 3)});
    const GridSpec grid{5, 5, -2.5, -2.5, 1.0, 1.0};  // cell (2, 2) centered on the household
    const auto H = Bandwidth::isotropic(2.0);
    const auto f = estimate_demand_field(ds, full_range(ds), grid, H);
    EXPECT_DOUBLE_EQ(f.at(2, 2), 1.0 / (2.0 * std::numbers::pi * 4.0));
    EXPECT_EQ(f.scale_kwh, 10.0);
    const auto peak = estimate_demand_field(ds, full_range(ds, Band::peak_window), grid, H);
    EXPECT_EQ(peak.scale_kwh, 7.0);
}

TEST(DemandField, MatchesDirectSumOracle) {
    synth::CityOptions opt;
    opt.households = 3;
    opt.days = 4;
    const auto ds = build_dataset(synth::random_city(21, opt));
    const auto period = full_range(ds);
    const auto snap = snapshot_points(ds, period);
    const auto H = Bandwidth(9.0e5, 2.0e5, 2.0e5, 6.0e5);
    const auto grid = fit_grid(ds.bounding_box(), 24, 20, H);
    const auto f = estimate_demand_field(ds, period, grid, H);
    const auto expected = oracle::direct_kde(to_oracle(snap.points), to_oracle(grid), 9.0e5, 2.0e5, 6.0e5);
    std::mt19937 rng(4);
    for (int probe = 0; probe < 5; ++probe) {
        const auto k = rng() % f.values.size();
        EXPECT_NEAR(f.values[k], expected[k], 1e-12 * std::abs(expected[k]));
    }
}

TEST(DemandField, OracleEquivalenceOverRandomConfigurations) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 50;
        auto pts = random_points(rng, n, 2000.0);
        const double h = 300.0 + static_cast<double>(rng() % 1000);
        const bool diagonal = trial % 2 == 0;
        const double h12 = diagonal ? 0.0 : 0.3 * h * h;
        const Bandwidth H(h * h, h12, h12, 1.4 * h * h);
        BoundingBox box;
        for (const auto& p : pts) box.extend(p.x);
        const auto grid = fit_grid(box, 8 + static_cast<int>(rng() % 25), 8 + static_cast<int>(rng() % 25), H);
        const auto got = evaluate_kde(pts, grid, H);
        const auto want = oracle::direct_kde(to_oracle(pts), to_oracle(grid), H.h11(), H.h12(), H.h22());
        for (std::size_t k = 0; k < got.size(); ++k)
            ASSERT_NEAR(got[k], want[k], 1e-12 * std::abs(want[k])) << "trial " << trial << " cell " << k;
    }
}

TEST(DemandField, MassNearOneWithWideMargin) {
    std::mt19937_64 rng(5);
    auto pts = random_points(rng, 40, 1500.0);
    double sum = 0.0;
    for (const auto& p : pts) sum += p.c;
    for (auto& p : pts) p.c /= sum;
    const double sigma = 400.0;
    const auto H = Bandwidth::isotropic(sigma);
    BoundingBox box;
    for (const auto& p : pts) box.extend(p.x);
    const double dx = sigma / 4.0;
    const double margin = 4.0 * sigma;
    const GridSpec grid{static_cast<int>(std::ceil((box.width() + 2 * margin) / dx)),
                        static_cast<int>(std::ceil((box.height() + 2 * margin) / dx)), box.xmin - margin,
                        box.ymin - margin, dx, dx};
    ScalarField f{grid, evaluate_kde(pts, grid, H), 1.0};
    EXPECT_NEAR(f.integral(), 1.0, 0.02);
}

TEST(DemandField, MassDefectShrinksWithMargin) {
    std::mt19937_64 rng(6);
    auto pts = random_points(rng, 30, 1000.0);
    for (auto& p : pts) p.c = 1.0 / 30.0;
    const double sigma = 500.0;
    const auto H = Bandwidth::isotropic(sigma);
    BoundingBox box;
    for (const auto& p : pts) box.extend(p.x);
    double previous = 1.0;
    for (double m : {0.5, 1.0, 2.0, 4.0}) {
        const double margin = m * sigma, dx = sigma / 4.0;
        const GridSpec grid{static_cast<int>(std::ceil((box.width() + 2 * margin) / dx)),
                            static_cast<int>(std::ceil((box.height() + 2 * margin) / dx)), box.xmin - margin,
                            box.ymin - margin, dx, dx};
        const double defect = std::abs(1.0 - ScalarField{grid, evaluate_kde(pts, grid, H), 1.0}.integral());
        EXPECT_LT(defect, previous);
        previous = defect;
    }
    EXPECT_LT(previous, 0.02);
}

TEST(DemandField, LinearInUnnormalizedWeights) {
    std::mt19937_64 rng(8);
    const auto a = random_points(rng, 12, 1000.0);
    const auto b = random_points(rng, 9, 1000.0);
    auto both = a;
    both.insert(both.end(), b.begin(), b.end());
    for (const auto& H : {Bandwidth::isotropic(400.0), Bandwidth(1.6e5, -4e4, -4e4, 2.5e5)}) {
        BoundingBox box;
        for (const auto& p : both) box.extend(p.x);
        const auto grid = fit_grid(box, 30, 26, H);
        const auto fa = evaluate_kde(a, grid, H), fb = evaluate_kde(b, grid, H), fab = evaluate_kde(both, grid, H);
        const double scale = max_abs(fab);
        for (std::size_t k = 0; k < fab.size(); ++k) EXPECT_NEAR(fab[k], fa[k] + fb[k], 1e-12 * scale);
    }
}

TEST(DemandField, TranslationEquivariant) {
    std::mt19937_64 rng(12);
    const auto pts = random_points(rng, 20, 1500.0);
    const auto H = Bandwidth(3e5, 5e4, 5e4, 2e5);
    BoundingBox box;
    for (const auto& p : pts) box.extend(p.x);
    const auto grid = fit_grid(box, 32, 32, H);
    const auto base = evaluate_kde(pts, grid, H);
    const PlanarPoint t{12345.678, -9876.5};
    auto moved = pts;
    for (auto& p : moved) p.x = {p.x.x + t.x, p.x.y + t.y};
    auto moved_grid = grid;
    moved_grid.x0 += t.x;
    moved_grid.y0 += t.y;
    const auto shifted = evaluate_kde(moved, moved_grid, H);
    const double scale = max_abs(base);
    for (std::size_t k = 0; k < base.size(); ++k) EXPECT_NEAR(shifted[k], base[k], 1e-12 * scale);
}

TEST(DemandField, Nonnegative) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const auto pts = random_points(rng, 25, 3000.0);
        const auto H = Bandwidth::isotropic(100.0 + trial * 50.0);
        BoundingBox box;
        for (const auto& p : pts) box.extend(p.x);
        for (double v : evaluate_kde(pts, fit_grid(box, 40, 40, H), H)) EXPECT_GE(v, 0.0);
    }
}

TEST(DemandField, Errors) {
    const auto ds = build_dataset(std::vector<ConsumptionRecord>{
        synth::record("H1", make_day(2019, 7, 1), 10, 10, 0),
        synth::record("H1", make_day(2019, 7, 3), 10, 7, 3),
    });
    const auto H = Bandwidth::isotropic(100.0);
    const GridSpec grid{10, 10, -500, -500, 100, 100};
    const GridSpec far{10, 10, 5000, 5000, 100, 100};
    EXPECT_EQ(kind_of([&] { estimate_demand_field(ds, full_range(ds), far, H); }), ErrorKind::coverage);
    EXPECT_EQ(kind_of([&] {
                  estimate_demand_field(ds, {make_day(2019, 7, 2), make_day(2019, 7, 2), Band::full_day}, grid, H);
              }),
              ErrorKind::empty_period);
    EXPECT_EQ(kind_of([&] {
                  estimate_demand_field(ds, {make_day(2019, 7, 1), make_day(2019, 7, 1), Band::valley_window}, grid, H);
              }),
              ErrorKind::degenerate_weights);
    EXPECT_EQ(kind_of([&] {
                  estimate_demand_field(ds, {make_day(2019, 6, 1), make_day(2019, 7, 1), Band::full_day}, grid, H);
              }),
              ErrorKind::range);
    EXPECT_EQ(kind_of([&] { estimate_demand_field(ds, full_range(ds), GridSpec{1, 10, 0, 0, 1, 1}, H); }),
              ErrorKind::grid);
}

TEST(DefaultBandwidth, SilvermanExample) {
    // 64 points at x = +-a, y = +-a with sample std exactly 1000 m per axis.
    const double a = 1000.0 * std::sqrt(63.0 / 64.0);
    std::vector<WeightedPoint> pts;
    for (int k = 0; k < 64; ++k) pts.push_back({{k % 2 ? a : -a, (k / 2) % 2 ? a : -a}, 1.0 / 64});
    const auto H = default_bandwidth(pts);
    EXPECT_NEAR(H.sigma_x(), 500.0, 1e-9);
    EXPECT_TRUE(H.is_diagonal());
    EXPECT_EQ(H.h11(), H.h22());
    EXPECT_NEAR(default_bandwidth(pts, 800.0).sigma_x(), 800.0, 1e-12);
}

TEST(DefaultBandwidth, CoincidentPointsAreError) {
    const std::vector<WeightedPoint> pts(5, WeightedPoint{{3.0, 4.0}, 0.2});
    EXPECT_EQ(kind_of([&] { default_bandwidth(pts); }), ErrorKind::bandwidth);
    EXPECT_EQ(kind_of([&] { default_bandwidth(std::span(pts).first(1)); }), ErrorKind::bandwidth);
}

TEST(FitGrid, MarginsCoverBandwidthAndCells) {
    BoundingBox box{-3000, -1000, 4000, 2500};
    for (int n : {3, 8, 16, 64, 128}) {
        for (double h : {50.0, 400.0, 3000.0}) {
            const auto H = Bandwidth::isotropic(h);
            const auto g = fit_grid(box, n, n, H);
            const double left = box.xmin - g.x0, right = g.xmax() - box.xmax;
            const double bottom = box.ymin - g.y0, top = g.ymax() - box.ymax;
            EXPECT_NEAR(left, right, 1e-6);
            EXPECT_NEAR(bottom, top, 1e-6);
            EXPECT_GE(left, 2 * h - 1e-9);
            EXPECT_GE(bottom, 2 * h - 1e-9);
            if (n > 8) {
                EXPECT_GE(left, 4 * g.dx - 1e-9);
                EXPECT_GE(bottom, 4 * g.dy - 1e-9);
            }
        }
    }
}
