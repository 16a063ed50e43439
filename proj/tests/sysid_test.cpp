#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "clab/plant/experiment.hpp"
#include "clab/sysid/fft_bode.hpp"
#include "clab/sysid/io.hpp"
#include "clab/sysid/margins.hpp"
#include "clab/sysid/plot.hpp"

using namespace clab;
using namespace clab::plant;
using namespace clab::sysid;

namespace {

struct Fixture {
    const char* name;
    TransferFunction tf;
    double delay;
};

ChirpConfig fidelity_chirp() {
    ChirpConfig c;
    c.omega_0 = 1;
    c.omega_1 = 300;
    return c;
}

ExperimentRecord run_tf(const Fixture& fx, const ChirpConfig& c, NoiseConfig n = {0.0, 1}) {
    PlantParams p;
    p.loop_delay = fx.delay;
    return plant::detail::run_cascade(p, c, n, {discretize(fx.tf, p.f_s)});
}

double wrap180(double d) { return d - 360.0 * std::round(d / 360.0); }

struct Deviation {
    double max_db = 0, max_deg = 0, mean_db = 0;
    double within_frac = 0;
};

Deviation compare(const BodeData& m, const Fixture& fx, std::size_t skip, double tol_db = 2, double tol_deg = 10) {
    auto a = analytic_bode(fx.tf, fx.delay, m.omega);
    Deviation d;
    std::size_t n = 0, ok = 0;
    for (std::size_t i = skip; i + skip < m.size(); ++i, ++n) {
        double e_db = std::abs(m.mag_db[i] - a.mag_db[i]);
        double e_deg = std::abs(wrap180(m.phase_deg[i] - a.phase_deg[i]));
        d.max_db = std::max(d.max_db, e_db);
        d.max_deg = std::max(d.max_deg, e_deg);
        d.mean_db += e_db;
        ok += (e_db <= tol_db && e_deg <= tol_deg);
    }
    d.mean_db /= static_cast<double>(n);
    d.within_frac = static_cast<double>(ok) / static_cast<double>(n);
    return d;
}

std::vector<Fixture> fixtures() {
    PlantParams p;
    return {
        {"gain", gain(3.0), 0.0},
        {"first_order", {{50.0}, {1.0, 50.0}}, 0.0},
        {"first_order_delay", {{50.0}, {1.0, 50.0}}, 0.005},
        {"overdamped", {{3e5}, {1.0, 700.0, 30000.0}}, 0.0},
        {"underdamped_default", plant_tf(p), 0.0},
        {"underdamped_default_delay", plant_tf(p), p.loop_delay},
    };
}

BodeData integrator_grid() { return analytic_bode({{1.0}, {1.0, 0.0}}, 0.0, logspace(0.01, 100, 301)); }

} // namespace

TEST(PiecewiseFft, PureGainIsFlat) {
    Fixture g{"gain", gain(4.0), 0.0};
    auto b = piecewise_fft_bode(run_tf(g, ChirpConfig{}));
    EXPECT_EQ(b.size(), 120u);
    EXPECT_EQ(b.dropped, 0);
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_NEAR(b.mag_db[i], 20 * std::log10(4.0), 0.05);
        EXPECT_NEAR(b.phase_deg[i], 0.0, 0.5);
    }
}

TEST(PiecewiseFft, DropsSegmentsBelowResolution) {
    Fixture g{"gain", gain(1.0), 0.0};
    auto b = piecewise_fft_bode(run_tf(g, fidelity_chirp()));
    EXPECT_GT(b.dropped, 0);
    EXPECT_EQ(b.size() + static_cast<std::size_t>(b.dropped), 120u);
    EXPECT_GE(b.omega.front(), 2 * std::numbers::pi);
}

TEST(PiecewiseFft, RejectsShortSegments) {
    Fixture g{"gain", gain(1.0), 0.0};
    ChirpConfig c;
    c.t_f = 5;
    auto r = run_tf(g, c);
    EXPECT_THROW(piecewise_fft_bode(r, 1000), Error);
    EXPECT_NO_THROW(piecewise_fft_bode(r, 70));
}

TEST(PiecewiseFftProperty, OracleEquivalenceOnFixturePlants) {
    for (const auto& fx : fixtures()) {
        auto b = piecewise_fft_bode(run_tf(fx, fidelity_chirp()));
        validate(b);
        auto d = compare(b, fx, 3);
        EXPECT_LT(d.max_db, 0.5) << fx.name;
        EXPECT_LT(d.max_deg, 3.0) << fx.name;
    }
}

TEST(PiecewiseFftProperty, OutputOrderedAndContinuous) {
    for (const auto& fx : fixtures()) {
        auto b = piecewise_fft_bode(run_tf(fx, ChirpConfig{}, {0.5, 2}));
        for (std::size_t i = 1; i < b.size(); ++i) {
            ASSERT_GT(b.omega[i], b.omega[i - 1]) << fx.name;
            ASSERT_LE(std::abs(b.phase_deg[i] - b.phase_deg[i - 1]), 180.0) << fx.name;
        }
    }
}

TEST(PiecewiseFftProperty, NoiseRobustnessOnDefaultRun) {
    PlantParams p;
    Fixture fx{"default", plant_tf(p), p.effective_delay()};
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        auto b = piecewise_fft_bode(run_open_loop(p, ChirpConfig{}, {0.5, seed}));
        EXPECT_GE(compare(b, fx, 0).within_frac, 0.95) << seed;
    }
}

TEST(SingleFft, PureGainIsFlat) {
    Fixture g{"gain", gain(2.0), 0.0};
    ChirpConfig c;
    c.t_f = 20;
    auto b = single_fft_bode(run_tf(g, c));
    for (double m : b.mag_db) EXPECT_NEAR(m, 20 * std::log10(2.0), 0.1);
}

TEST(SingleFft, NoiselessDefaultPlantNearAnalytic) {
    PlantParams p;
    Fixture fx{"default", plant_tf(p), p.effective_delay()};
    ChirpConfig c = fidelity_chirp();
    auto b = single_fft_bode(run_open_loop(p, c, {0.0, 1}));
    BodeData band;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b.omega[i] >= 2 * c.omega_0 && b.omega[i] <= c.omega_1 / 2) {
            band.omega.push_back(b.omega[i]);
            band.mag_db.push_back(b.mag_db[i]);
            band.phase_deg.push_back(b.phase_deg[i]);
        }
    auto d = compare(band, fx, 0);
    EXPECT_LT(d.max_db, 1.0);
    EXPECT_LT(d.max_deg, 5.0);
}

TEST(SingleFft, NoisierThanPiecewiseOnSameRecord) {
    PlantParams p;
    Fixture fx{"default", plant_tf(p), p.effective_delay()};
    auto r = run_open_loop(p, ChirpConfig{}, {0.5, 7});
    EXPECT_GT(compare(single_fft_bode(r), fx, 0).mean_db, compare(piecewise_fft_bode(r), fx, 0).mean_db);
}

TEST(Margins, FlatZeroDbHasNoCrossover) {
    BodeData b;
    b.omega = {1, 2, 3};
    b.mag_db = {0, 0, 0};
    b.phase_deg = {0, 0, 0};
    EXPECT_FALSE(measure_margins(b).crossover_found);
}

TEST(Margins, IntegratorCrossesAtOne) {
    auto m = measure_margins(integrator_grid());
    ASSERT_TRUE(m.crossover_found);
    EXPECT_NEAR(m.omega_gc, 1.0, 1e-3);
    EXPECT_NEAR(m.phi_pm, 90.0, 0.09);
}

TEST(Margins, DefaultLoopHasNegativeMargin) {
    PlantParams p;
    auto b = scale_gain(analytic_bode(plant_tf(p), p.loop_delay, logspace(1, 1000, 400)), 0.0966);
    auto m = measure_margins(b);
    ASSERT_TRUE(m.crossover_found);
    EXPECT_LT(m.phi_pm, 0.0);
}

// Closed-form oracle: bisection on |L(jw)| = 1 and the phase from atan2.
TEST(MarginsProperty, MatchesRootFindingOracle) {
    for (double kss : {0.05, 0.0966, 0.2, 0.5}) {
        for (double delay : {0.0, 0.002, 0.004}) {
            PlantParams p;
            auto mag = [&](double w) { return kss * p.beta * p.k_s / std::hypot(p.k_s - p.m_k * w * w, p.b_eff * w); };
            double lo = std::sqrt(p.k_s / p.m_k), hi = 1e4;
            if (mag(lo) < 1) continue;
            for (int it = 0; it < 200; ++it) {
                double mid = std::sqrt(lo * hi);
                (mag(mid) > 1 ? lo : hi) = mid;
            }
            double wgc = lo;
            double ph = -std::atan2(p.b_eff * wgc, p.k_s - p.m_k * wgc * wgc) - wgc * delay;
            double pm = 180.0 + ph * 180 / std::numbers::pi;
            auto b = scale_gain(analytic_bode(plant_tf(p), delay, logspace(1, 3000, 600)), kss);
            auto m = measure_margins(b);
            ASSERT_TRUE(m.crossover_found);
            EXPECT_LT(std::abs(m.omega_gc - wgc) / wgc, 0.005) << kss << " " << delay;
            EXPECT_NEAR(wrap180(m.phi_pm - pm), 0.0, 0.2) << kss << " " << delay;
        }
    }
}

TEST(ShiftedCrossover, ZeroShiftEqualsMargins) {
    auto b = integrator_grid();
    EXPECT_DOUBLE_EQ(shifted_crossover(b, 0.0), measure_margins(b).omega_gc);
}

TEST(ShiftedCrossover, IntegratorPlus20DbMovesToTen) {
    EXPECT_NEAR(shifted_crossover(integrator_grid(), 20.0), 10.0, 0.01);
}

TEST(ShiftedCrossover, NoCrossingIsDomainError) {
    try {
        shifted_crossover(integrator_grid(), 60.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::domain);
    }
    EXPECT_THROW(shifted_crossover(integrator_grid(), INFINITY), Error);
}

TEST(ShiftedCrossoverProperty, MonotoneInShift) {
    PlantParams p;
    auto b = scale_gain(analytic_bode({{1e6}, {1.0, 30.0, 0.0}}, 0.0, logspace(1, 1e4, 300)), 1.0);
    double prev = 0;
    for (double s = -20; s <= 30; s += 0.5) {
        double w = shifted_crossover(b, s);
        EXPECT_GE(w, prev);
        prev = w;
    }
}

TEST(DisplayWindow, InsideUnchangedAndClipPreservesData) {
    BodeData b;
    b.omega = {1, 2, 3};
    b.mag_db = {0, -1, -2};
    b.phase_deg = {10, -100, -300};
    auto clip = display_phase_window(b);
    EXPECT_EQ(clip.data.phase_deg, b.phase_deg);
    EXPECT_EQ(clip.axis_lo, -270.0);
    EXPECT_EQ(clip.axis_hi, 90.0);
    auto wrap = display_phase_window(b, -270, 90, PhaseWindowMode::wrap);
    EXPECT_DOUBLE_EQ(wrap.data.phase_deg[0], 10.0);
    EXPECT_DOUBLE_EQ(wrap.data.phase_deg[1], -100.0);
    EXPECT_DOUBLE_EQ(wrap.data.phase_deg[2], 60.0);
    EXPECT_THROW(display_phase_window(b, 90, -270), Error);
}

TEST(DisplayWindow, DefaultOpenLoopFitsWindow) {
    PlantParams p;
    auto b = piecewise_fft_bode(run_open_loop(p, ChirpConfig{}, {0.5, 7}));
    for (double ph : b.phase_deg) {
        EXPECT_GE(ph, -270.0);
        EXPECT_LE(ph, 90.0);
    }
}

TEST(BodeIo, CsvRoundTrip) {
    PlantParams p;
    auto b = piecewise_fft_bode(run_open_loop(p, ChirpConfig{}, {0.5, 7}));
    auto back = parse_bode(bode_csv(b), bode_metadata(b));
    EXPECT_EQ(bode_csv(back), bode_csv(b));
    EXPECT_EQ(back.source, BodeSource::piecewise_fft);
    EXPECT_EQ(back.segments, 120);
    EXPECT_THROW(parse_bode("w,m,p\n1,2,3\n"), Error);
    EXPECT_THROW(parse_bode("omega_rad_s,mag_db,phase_deg\n2,0,0\n1,0,0\n"), Error);
}

TEST(BodePlot, SvgHasBothPanels) {
    auto b = integrator_grid();
    auto svg = bode_svg(b, &b);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_GE(std::count(svg.begin(), svg.end(), '\n'), 4);
    EXPECT_NE(svg.find("polyline"), std::string::npos);
}
