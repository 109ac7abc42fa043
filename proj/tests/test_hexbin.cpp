#include <gtest/gtest.h>

#include <random>

#include "demandflow/hexbin.hpp"
#include "support/synthetic.hpp"

using namespace demandflow;

TEST(Hexbin, TwoHouseholdsShareACell) {
    const Day d = make_day(2019, 7, 1);
    const auto ds = build_dataset(std::vector<ConsumptionRecord>{
        synth::record("H1", d, 5, 3, 2, 121.55, 31.22),
        synth::record("H2", d, 7, 4, 3, 121.5501, 31.2201),
    });
    const auto cells = hexbin_demand(ds, full_range(ds), 500.0);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].demand, 12.0);
    EXPECT_EQ(cells[0].household_count, 2u);
    const auto peak = hexbin_demand(ds, full_range(ds, Band::peak_window), 500.0);
    EXPECT_EQ(peak[0].demand, 7.0);
}

TEST(Hexbin, ConservesDemandExactly) {
    synth::CityOptions opt;
    opt.households = 300;
    opt.days = 20;
    opt.dyadic = true;
    const auto ds = build_dataset(synth::random_city(17, opt));
    for (Band band : {Band::full_day, Band::peak_window, Band::valley_window}) {
        const TimePeriod p{make_day(2019, 7, 3), make_day(2019, 7, 15), band};
        double expected = 0.0;
        for (const auto& r : ds.readings_between(p.start, p.end)) expected += band_value(r, band);
        for (double size : {100.0, 750.0, 5000.0}) {
            double sum = 0.0;
            std::size_t households = 0;
            for (const auto& c : hexbin_demand(ds, p, size)) {
                sum += c.demand;
                households += c.household_count;
                EXPECT_GT(c.household_count, 0u);
            }
            EXPECT_EQ(sum, expected);
            EXPECT_EQ(households, ds.households().size());
        }
    }
}

TEST(Hexbin, AssignsEachHouseholdToNearestCenter) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5000, 5000);
    const HexLayout layout({-5000, -5000}, 333.0);
    for (int k = 0; k < 2000; ++k) {
        const PlanarPoint p{u(rng), u(rng)};
        const auto h = layout.locate(p);
        const auto c = layout.center(h);
        const double d = std::hypot(p.x - c.x, p.y - c.y);
        EXPECT_LE(d, 333.0 * (1 + 1e-12));
        static constexpr int nb[6][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};
        for (const auto& n : nb) {
            const auto o = layout.center({h.q + n[0], h.r + n[1]});
            EXPECT_LE(d, std::hypot(p.x - o.x, p.y - o.y) + 1e-9);
        }
    }
}

TEST(Hexbin, CentersLocateToThemselves) {
    const HexLayout layout({10, -20}, 250.0);
    for (int q = -6; q <= 6; ++q)
        for (int r = -6; r <= 6; ++r) EXPECT_EQ(layout.locate(layout.center({q, r})), (HexCoord{q, r}));
}

TEST(Hexbin, SharedEdgeTieBreakIsStable) {
    const HexLayout layout({0, 0}, 100.0);
    // Midpoint between the centers of (0,0) and (1,0) lies on their shared edge.
    const auto a = layout.center({0, 0}), b = layout.center({1, 0});
    const PlanarPoint mid{(a.x + b.x) / 2, (a.y + b.y) / 2};
    const auto first = layout.locate(mid);
    EXPECT_TRUE(first == (HexCoord{0, 0}) || first == (HexCoord{1, 0}));
    for (int k = 0; k < 10; ++k) EXPECT_EQ(layout.locate(mid), first);
    // A vertex shared by three hexagons also resolves to one of them.
    const PlanarPoint vertex{a.x + 100.0 * std::sqrt(3.0) / 2, a.y + 50.0};
    const auto v = layout.locate(vertex);
    EXPECT_TRUE(v == (HexCoord{0, 0}) || v == (HexCoord{1, 0}) || v == (HexCoord{0, 1}));
}

TEST(Hexbin, OmitsHouseholdsWithoutRecordsInPeriod) {
    const auto ds = build_dataset(std::vector<ConsumptionRecord>{
        synth::record("H1", make_day(2019, 7, 1), 5, 3, 2, 121.55, 31.22),
        synth::record("H2", make_day(2019, 7, 2), 7, 4, 3, 121.60, 31.22),
    });
    const auto cells = hexbin_demand(ds, {make_day(2019, 7, 1), make_day(2019, 7, 1), Band::full_day}, 200.0);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].demand, 5.0);
}

TEST(Hexbin, RejectsNonPositiveSize) {
    const auto ds = build_dataset(std::vector<ConsumptionRecord>{synth::record("H1", make_day(2019, 7, 1), 5, 3, 2)});
    EXPECT_THROW(hexbin_demand(ds, full_range(ds), 0.0), Error);
    EXPECT_THROW(hexbin_demand(ds, full_range(ds), -3.0), Error);
}
