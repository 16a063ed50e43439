#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "clab/lab/store.hpp"
#include "clab/lead/checker.hpp"
#include "clab/lead/design.hpp"
#include "clab/plant/experiment.hpp"
#include "clab/sysid/fft_bode.hpp"
#include "clab/sysid/margins.hpp"

using namespace clab;
using namespace clab::lead;

namespace {

constexpr double kKss = 0.0966;

const sysid::BodeData& measured() {
    static const sysid::BodeData b = [] {
        plant::PlantParams p;
        return sysid::scale_gain(sysid::piecewise_fft_bode(plant::run_open_loop(p, plant::ChirpConfig{}, {0.5, 7})), kKss);
    }();
    return b;
}

const QuestionCatalog& catalog() {
    static const QuestionCatalog c = parse_catalog(lab::read_json_file(std::string(CLAB_SOURCE_DIR) + "/data/questions/feedback.json"));
    return c;
}

LeadDesignState fresh_state(double phi_d) {
    auto m = sysid::measure_margins(measured());
    LeadDesignState s;
    s.k_ss = kKss;
    s.phi_pm = m.phi_pm;
    s.omega_gc_min = m.omega_gc;
    s.phi_d = phi_d;
    return s;
}

double analytic_pm(const ReferenceDesign& r) {
    plant::PlantParams p;
    auto L = plant::loop_tf(p, lead_section(r.k, r.p, r.z), kKss);
    auto m = sysid::measure_margins(plant::analytic_bode(L, p.effective_delay(), plant::logspace(1, 3000, 2000)));
    EXPECT_TRUE(m.crossover_found);
    return m.phi_pm;
}

} // namespace

TEST(DeltaPhi, Arithmetic) {
    EXPECT_DOUBLE_EQ(delta_phi(30, 30), 0.0);
    EXPECT_DOUBLE_EQ(delta_phi(50, -10), 60.0);
}

TEST(DeltaPhi, DefaultOpenLoopAgainstAnalyticMargin) {
    plant::PlantParams p;
    auto truth = sysid::measure_margins(
        sysid::scale_gain(plant::analytic_bode(plant::plant_tf(p), p.effective_delay(), plant::logspace(1, 1000, 800)), kKss));
    auto s = fresh_state(45);
    EXPECT_NEAR(delta_phi(45, s.phi_pm), 45 - truth.phi_pm, 1.0);
}

TEST(PhiMaxRange, RuleOfThumbBounds) {
    auto r = phi_max_accepted_range(0);
    EXPECT_DOUBLE_EQ(r.lo, 5);
    EXPECT_DOUBLE_EQ(r.hi, 10);
    r = phi_max_accepted_range(60);
    EXPECT_DOUBLE_EQ(r.lo, 65);
    EXPECT_DOUBLE_EQ(r.hi, 70);
    EXPECT_DOUBLE_EQ(r.reference, 67.5);
}

TEST(PhiMaxRange, InfeasibleNearNinety) {
    try {
        phi_max_accepted_range(85);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::domain);
    }
    EXPECT_THROW(phi_max_accepted_range(-1), Error);
}

TEST(Alpha, KnownValues) {
    EXPECT_DOUBLE_EQ(alpha_from_phi_max(0), 1.0);
    EXPECT_NEAR(alpha_from_phi_max(45), 3 + 2 * std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(alpha_from_phi_max(45), 5.8284, 1e-4);
    EXPECT_EQ(alpha_from_phi_max(30), 3.0);
    EXPECT_THROW(alpha_from_phi_max(90), Error);
}

TEST(SinDeg, ExactAtRationalAnglesAndMatchesSinElsewhere) {
    EXPECT_EQ(sin_deg(30), 0.5);
    EXPECT_EQ(sin_deg(150), 0.5);
    EXPECT_EQ(sin_deg(-30), -0.5);
    EXPECT_EQ(sin_deg(450), 1.0);
    EXPECT_EQ(sin_deg(180), 0.0);
    for (double d = -720; d <= 720; d += 0.37) EXPECT_NEAR(sin_deg(d), std::sin(d * std::numbers::pi / 180), 1e-12) << d;
}

TEST(AlphaProperty, StrictlyIncreasing) {
    double prev = 0;
    for (double ph = 0; ph < 90; ph += 0.01) {
        double a = alpha_from_phi_max(ph);
        ASSERT_GT(a, prev) << ph;
        prev = a;
    }
}

TEST(ControllerParams, ClosedForms) {
    auto u = controller_params(1, 7);
    EXPECT_DOUBLE_EQ(u.k, 1);
    EXPECT_DOUBLE_EQ(u.p, 7);
    EXPECT_DOUBLE_EQ(u.z, 7);
    auto c = controller_params(4, 10);
    EXPECT_DOUBLE_EQ(c.k, 4);
    EXPECT_DOUBLE_EQ(c.p, 20);
    EXPECT_DOUBLE_EQ(c.z, 5);
    EXPECT_THROW(controller_params(0.5, 10), Error);
}

TEST(ControllerParamsProperty, GeometricMeanIsCrossover) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> A(1, 100), W(0.1, 1000);
    for (int i = 0; i < 1000; ++i) {
        double a = A(rng), w = W(rng);
        auto c = controller_params(a, w);
        ASSERT_NEAR(std::sqrt(c.p * c.z), w, 1e-9 * w);
    }
}

TEST(ControllerTf, UnityIsKss) {
    LeadDesignState s;
    s.k_ss = 0.3;
    s.k = 1;
    s.p = s.z = 12;
    auto tf = controller_tf(s);
    for (double w : {0.1, 12.0, 1e4}) EXPECT_NEAR(std::abs(tf({0, w})), 0.3, 1e-12);
}

TEST(ControllerTf, MaxLeadAtGeometricMean) {
    for (double phi : {20.0, 45.0, 70.0}) {
        double a = alpha_from_phi_max(phi);
        auto c = controller_params(a, 50);
        LeadDesignState s;
        s.k = c.k;
        s.p = c.p;
        s.z = c.z;
        auto b = plant::analytic_bode(controller_tf(s), 0.0, plant::logspace(0.5, 5000, 4001));
        auto it = std::max_element(b.phase_deg.begin(), b.phase_deg.end());
        EXPECT_NEAR(b.omega[std::size_t(it - b.phase_deg.begin())], 50.0, 0.2);
        EXPECT_NEAR(plant::analytic_bode(controller_tf(s), 0.0, {50.0}).phase_deg[0], phi, 0.01);
        double hi = std::abs(controller_tf(s)({0, 1e9})), lo = std::abs(controller_tf(s)({0, 0}));
        EXPECT_NEAR(hi / lo, a, 1e-6 * a);
    }
}

TEST(ControllerTf, RejectsUnsetFields) {
    LeadDesignState s;
    s.k = 2;
    EXPECT_THROW(controller_tf(s), Error);
}

TEST(CheckAnswer, DeltaPhiExact) {
    auto s = fresh_state(45);
    EXPECT_TRUE(check_answer(catalog(), "delta_phi", {45 - s.phi_pm}, s, measured()).correct);
    EXPECT_TRUE(s.delta_phi.has_value());
    auto t = fresh_state(45);
    EXPECT_FALSE(check_answer(catalog(), "delta_phi", {45 - t.phi_pm + 0.6}, t, measured()).correct);
    EXPECT_FALSE(t.delta_phi.has_value());
}

TEST(CheckAnswer, AlphaTolerance) {
    auto s = fresh_state(45);
    s.delta_phi = 22;
    s.phi_max = 30;
    EXPECT_TRUE(check_answer(catalog(), "alpha", {3.05}, s, measured()).correct);
    s.alpha.reset();
    EXPECT_FALSE(check_answer(catalog(), "alpha", {3.5}, s, measured()).correct);
    EXPECT_FALSE(s.alpha.has_value());
}

TEST(CheckAnswer, OmegaGcIntervalIsOpen) {
    auto s = fresh_state(45);
    s.delta_phi = 46;
    s.phi_max = 53;
    s.alpha = alpha_from_phi_max(53);
    s.omega_gc_max = 150;
    EXPECT_FALSE(check_answer(catalog(), "omega_gc", {s.omega_gc_min}, s, measured()).correct);
    EXPECT_FALSE(check_answer(catalog(), "omega_gc", {150}, s, measured()).correct);
    EXPECT_TRUE(check_answer(catalog(), "omega_gc", {100}, s, measured()).correct);
}

TEST(CheckAnswer, OmegaGcMaxWithinTenPercent) {
    auto s = fresh_state(45);
    s.delta_phi = 46;
    s.phi_max = 53;
    s.alpha = alpha_from_phi_max(53);
    double e = sysid::shifted_crossover(measured(), 20 * std::log10(*s.alpha));
    EXPECT_TRUE(check_answer(catalog(), "omega_gc_max", {e * 1.09}, s, measured()).correct);
    s.omega_gc_max.reset();
    EXPECT_FALSE(check_answer(catalog(), "omega_gc_max", {e * 1.11}, s, measured()).correct);
}

TEST(CheckAnswer, KpzEachComponentChecked) {
    auto s = fresh_state(45);
    s.alpha = 4;
    s.omega_gc = 10;
    s.omega_gc_max = 20;
    EXPECT_FALSE(check_answer(catalog(), "kpz", {4, 20, 5.2}, s, measured()).correct);
    EXPECT_THROW(check_answer(catalog(), "kpz", {4, 20}, s, measured()), Error);
    EXPECT_TRUE(check_answer(catalog(), "kpz", {4.05, 19.8, 5.05}, s, measured()).correct);
    EXPECT_DOUBLE_EQ(*s.p, 19.8);
}

TEST(CheckAnswer, UnknownQuestionRejected) {
    auto s = fresh_state(45);
    try {
        check_answer(catalog(), "gamma", {1}, s, measured());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_argument);
    }
}

// Any subset of accepted fields: a question grades iff its predecessors are set, else protocol_violation.
TEST(CheckAnswerProperty, NeverReadsUnpopulatedPredecessors) {
    auto ids = catalog().ids();
    for (unsigned mask = 0; mask < (1u << ids.size()); ++mask) {
        static const auto r = reference_design(measured(), 45);
        // Accepted subset written directly, bypassing prerequisites.
        LeadDesignState s = fresh_state(45);
        if (mask & 1) s.delta_phi = r.delta_phi;
        if (mask & 2) s.phi_max = r.phi_max;
        if (mask & 4) s.alpha = r.alpha;
        if (mask & 8) s.omega_gc_max = r.omega_gc_max;
        if (mask & 16) s.omega_gc = r.omega_gc;
        if (mask & 32) s.k = r.k, s.p = r.p, s.z = r.z;
        for (const auto& q : catalog().questions) {
            bool ready = true;
            for (const auto& p : q.prerequisites) ready = ready && is_accepted(s, p);
            auto probe = s;
            if (ready) {
                EXPECT_NO_THROW(check_answer(catalog(), q.id, reference_answer(r, q.id), probe, measured()));
            } else {
                try {
                    check_answer(catalog(), q.id, reference_answer(r, q.id), probe, measured());
                    ADD_FAILURE() << q.id << " graded without predecessors, mask " << mask;
                } catch (const Error& e) {
                    EXPECT_EQ(e.code(), ErrorCode::protocol_violation);
                }
            }
        }
    }
}

TEST(ReferenceProperty, EndToEndSoundness) {
    for (double phi_d = 20; phi_d <= 62; phi_d += 3) {
        auto r = reference_design(measured(), phi_d);
        auto s = fresh_state(phi_d);
        for (const auto& id : catalog().ids())
            EXPECT_TRUE(check_answer(catalog(), id, reference_answer(r, id), s, measured()).correct) << id << " phi_d=" << phi_d;
        ASSERT_NO_THROW(controller_tf(s));
    }
}

TEST(ReferenceProperty, DesignedControllerMeetsTarget) {
    for (double phi_d : {30.0, 45.0, 60.0}) {
        auto r = reference_design(measured(), phi_d);
        EXPECT_NEAR(analytic_pm(r), phi_d, 6.0) << phi_d;
        EXPECT_GT(r.omega_gc, r.omega_gc_min);
        EXPECT_LT(r.omega_gc, r.omega_gc_max);
    }
}

TEST(ApplyLead, UnityLeavesBodeUnchanged) {
    auto b = apply_lead(measured(), 1, 40, 40);
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_NEAR(b.mag_db[i], measured().mag_db[i], 1e-12);
        EXPECT_NEAR(b.phase_deg[i], measured().phase_deg[i], 1e-12);
    }
}

TEST(DesignState, JsonRoundTrip) {
    auto s = fresh_state(45);
    s.delta_phi = 46;
    s.alpha = 8;
    nlohmann::json j = s;
    auto back = j.get<LeadDesignState>();
    EXPECT_EQ(back.delta_phi, s.delta_phi);
    EXPECT_FALSE(back.phi_max.has_value());
    EXPECT_DOUBLE_EQ(back.phi_pm, s.phi_pm);
}
