#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "dwelldos/analysis.hpp"
#include "dwelldos/oracles.hpp"

using namespace dwelldos;

namespace {

LayerStack fixture_stack() {
    std::ifstream in(DWELLDOS_FIXTURES "/random_stack_seed42.json");
    auto j = nlohmann::json::parse(in);
    std::vector<Layer> layers;
    for (const auto& l : j["stack"]) layers.push_back({l["d"].get<double>(), l["V"].get<double>()});
    return build_stack(layers);
}

LayerStack resonant_stack() { return double_barrier(0.5, 6.0, 3.0); }

// t of a square barrier (height v, width d) with the same amplitude convention
cplx square_t(double e, double v, double d) {
    const cplx i(0.0, 1.0);
    cplx k = std::sqrt(cplx(e)), q = std::sqrt(cplx(e - v));
    cplx denom = std::cos(q * d) - i * (k * k + q * q) / (2.0 * k * q) * std::sin(q * d);
    return std::exp(-i * k * d) / denom;
}

}  // namespace

TEST(ShiftedSMatrix, NullShift) {
    auto st = fixture_stack();
    auto a = shifted_smatrix(st, 1.7, 0.0);
    auto b = smatrix(scattering_amplitudes(st, 1.7));
    EXPECT_LT((a.s - b.s).cwiseAbs().maxCoeff(), 1e-14);
    auto sys = LatticeSystem::disordered(2, 6, 1, 0.5);
    auto la = shifted_smatrix(sys, sys.full_region(), 0.3, 0.0);
    EXPECT_LT((la.s - scattering_states(sys, 0.3).s.s).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ShiftedSMatrix, UniformShiftPhase) {
    auto st = build_stack({{2.0, 0.0}});
    const double e = 1.0;
    const double t0 = std::arg(shifted_smatrix(st, e, 0.0).s(1, 0));
    for (double v : {1e-6, -1e-5, 1e-5}) {
        double dphase = std::arg(shifted_smatrix(st, e, v).s(1, 0)) - t0;
        EXPECT_NEAR(dphase, (std::sqrt(e - v) - std::sqrt(e)) * 2.0, 1e-10) << v;
    }
    for (double v : {-0.3, 0.1, 0.5}) {
        auto s = shifted_smatrix(st, e, v);
        EXPECT_NEAR(std::abs(s.s(1, 0) - square_t(e, v, 2.0)), 0.0, 1e-12) << v;
        EXPECT_LT(s.unitarity_defect(), 1e-12);
    }
}

TEST(ShiftedSMatrix, ThresholdCrossing) {
    auto st = build_stack({{1.0, 0.3}});
    try {
        shifted_smatrix(st, 0.2, 0.25);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::threshold_crossing);
    }
}

TEST(VDeriv, FreeStack) {
    StackBackend b(build_stack({{2.0, 0.0}}));
    auto r = dwell_times_vderiv(b, 1.0, 1e-4);
    ASSERT_EQ(r.tau.size(), 2u);
    EXPECT_NEAR(r.tau[0], 1.0, 1e-7);
    EXPECT_NEAR(r.tau[1], 1.0, 1e-7);
    EXPECT_NEAR(dwell_time_vderiv(b, 1.0, 0, 1e-4), 1.0, 1e-7);
}

TEST(VDeriv, BarrierRichardson) {
    StackBackend b(rectangular_barrier(1.0, 1.0));
    const double direct = dwell_time_direct_1d(b.stack(), 0.5, Side::left);
    const double inf = std::numeric_limits<double>::infinity();
    auto r1 = dwell_times_vderiv(b, 0.5, 1e-2, false, inf);
    auto r2 = dwell_times_vderiv(b, 0.5, 5e-3, false, inf);
    const double slope = std::log2(std::abs(r1.tau[0] - direct) / std::abs(r2.tau[0] - direct));
    EXPECT_GE(slope, 1.7);
    EXPECT_LE(slope, 2.3);
    const double imag_slope = std::log2(std::abs(r1.imag_residual[0]) / std::abs(r2.imag_residual[0]));
    EXPECT_NEAR(imag_slope, 2.0, 0.3);
    EXPECT_LT(std::abs(dwell_time_vderiv(b, 0.5, 0, 1e-5) - direct), 1e-5);
}

TEST(VDeriv, LatticeAgreement) {
    LatticeBackend b(LatticeSystem::disordered(2, 8, 5, 0.5));
    for (double e : {-0.6, 0.2, 1.1}) {
        auto direct = b.dwell_times(e);
        auto v = dwell_times_vderiv(b, e, 1e-5);
        ASSERT_EQ(direct.size(), v.tau.size());
        for (std::size_t i = 0; i < direct.size(); ++i) {
            EXPECT_EQ(direct[i].id, v.channels[i]);
            EXPECT_NEAR(v.tau[i], direct[i].tau, 1e-5) << e << " " << direct[i].id;
        }
    }
}

TEST(VDeriv, StepTooLarge) {
    StackBackend b(rectangular_barrier(30.0, 0.5));
    try {
        dwell_times_vderiv(b, 2.0, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_TRUE(e.kind() == ErrorKind::step_too_large || e.kind() == ErrorKind::numerical_failure);
    }
    // with halving the same request succeeds
    auto r = dwell_times_vderiv(b, 2.0, 1.0, true);
    EXPECT_LT(r.dv, 1.0);
    EXPECT_NEAR(r.tau[0], dwell_time_direct_1d(b.stack(), 2.0, Side::left), 1e-3);
}

TEST(Wavepacket, DeltaLimit) {
    std::vector<EnergySample> tau{{1.0, 3.0}, {2.0, 5.0}};
    EXPECT_NEAR(wavepacket_dwell_time(SpectralWeight::delta(1.5), tau), 4.0, 1e-15);
}

TEST(Wavepacket, UniformFreeStack) {
    auto free = build_stack({{2.0, 0.0}});
    auto w = SpectralWeight::uniform(1.0, 2.0, 4001);
    double v = wavepacket_dwell_time(w, [&](double e) { return dwell_time_direct_1d(free, e, Side::left); });
    EXPECT_NEAR(v, 2.0 * (std::sqrt(2.0) - 1.0), 1e-7);
}

TEST(Wavepacket, GaussianBounded) {
    auto st = fixture_stack();
    auto w = SpectralWeight::gaussian(2.5, 0.2, 2.0, 3.0, 201);
    double lo = 1e300, hi = 0.0;
    std::vector<EnergySample> tau;
    for (const auto& s : w.samples()) {
        double t = dwell_time_direct_1d(st, s.energy, Side::left);
        tau.push_back({s.energy, t});
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    double v = wavepacket_dwell_time(w, tau);
    EXPECT_GE(v, lo);
    EXPECT_LE(v, hi);
}

TEST(Wavepacket, Coverage) {
    std::vector<EnergySample> tau{{1.0, 3.0}, {1.5, 5.0}};
    try {
        wavepacket_dwell_time(SpectralWeight::uniform(1.0, 2.0, 11), tau);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::coverage);
    }
}

TEST(Verify, FreeStackExact) {
    StackBackend b(build_stack({{2.0, 0.0}}));
    auto run = verify_identity(b, EnergyGrid(0.2, 5.0, 50));
    EXPECT_EQ(run.summary.skipped, 0u);
    EXPECT_LT(run.summary.max_residual_rel, 1e-12);
    for (const auto& r : run.reports) EXPECT_EQ(r.residual_rel, DwellReport::residual(r.dos_green, r.dos_sum));
}

TEST(Verify, RandomFixture) {
    StackBackend b(fixture_stack());
    auto run = verify_identity(b, EnergyGrid(0.05, 10.0, 1000));
    EXPECT_EQ(run.summary.skipped, 0u);
    EXPECT_LT(run.summary.max_residual_rel, 1e-8);
    for (const auto& r : run.reports) {
        EXPECT_GT(r.dos_green, 0.0);
        EXPECT_GT(r.dos_sum, 0.0);
    }
}

TEST(Verify, SymmetricBarrierRatio) {
    StackBackend b(rectangular_barrier(1.0, 1.0));
    auto run = verify_identity(b, EnergyGrid(0.5, 0.5 + 1e-3, 2));
    ASSERT_TRUE(run.reports[0].symmetric_ratio.has_value());
    EXPECT_NEAR(*run.reports[0].symmetric_ratio, 1.0, 1e-10);
    EXPECT_TRUE(run.summary.palindromic);
}

TEST(Verify, ThresholdPointsSkipped) {
    StackBackend b(build_stack({{1.0, 1.0}}, 0.0, 0.5));
    auto run = verify_identity(b, EnergyGrid(-1.0, 1.0, 5));   // hits -1, -0.5, 0, 0.5, 1
    EXPECT_TRUE(run.reports[0].skipped);
    EXPECT_TRUE(run.reports[2].skipped);
    EXPECT_TRUE(run.reports[3].skipped);
    EXPECT_FALSE(run.reports[4].skipped);
    EXPECT_EQ(run.summary.skipped, 4u);
}

TEST(Verify, DeterministicAcrossWorkers) {
    LatticeBackend b(LatticeSystem::disordered(3, 10, 9, 1.0));
    EnergyGrid g(-3.5, 3.5, 40);
    VerifyOptions one, four;
    one.workers = 1;
    four.workers = 4;
    one.methods.vderiv = four.methods.vderiv = true;
    auto a = verify_identity(b, g, one), c = verify_identity(b, g, four);
    ASSERT_EQ(a.reports.size(), c.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        EXPECT_EQ(a.reports[i].energy, c.reports[i].energy);
        EXPECT_EQ(a.reports[i].skipped, c.reports[i].skipped);
        if (a.reports[i].skipped) continue;
        EXPECT_EQ(a.reports[i].dos_green, c.reports[i].dos_green);
        EXPECT_EQ(a.reports[i].residual_rel, c.reports[i].residual_rel);
        for (std::size_t k = 0; k < a.reports[i].channels.size(); ++k)
            EXPECT_EQ(a.reports[i].channels[k].tau_vderiv, c.reports[i].channels[k].tau_vderiv);
    }
    EXPECT_LT(a.summary.max_residual_rel, 1e-9);
}

TEST(Resonances, InsufficientData) {
    StackBackend b(build_stack({{2.0, 0.0}}));
    auto run = verify_identity(b, EnergyGrid(1.0, 2.0, 2));
    try {
        find_resonances(run.reports);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::insufficient_data);
    }
}

TEST(Resonances, FreeStackHasNone) {
    StackBackend b(build_stack({{2.0, 0.0}}));
    auto table = find_resonances(verify_identity(b, EnergyGrid(0.1, 5.0, 200)).reports);
    EXPECT_TRUE(table.dos_peaks.empty());
    EXPECT_TRUE(table.dwell_peaks.empty());
}

TEST(Resonances, DoubleBarrierMatches) {
    StackBackend b(resonant_stack());
    EnergyGrid grid(0.05, 5.9, 3000);
    auto run = verify_identity(b, grid);
    auto table = find_resonances(run.reports);
    ASSERT_GE(table.dos_peaks.size(), 2u);
    EXPECT_EQ(table.sum_unmatched(), 0u);
    EXPECT_EQ(table.unmatched(), 0u);
    for (std::size_t i = 1; i < table.dos_peaks.size(); ++i) EXPECT_LT(table.dos_peaks[i - 1].energy, table.dos_peaks[i].energy);

    // transmission maxima coincide with the dos peaks
    for (const auto& p : table.dos_peaks) {
        auto T = [&](double e) { return std::norm(scattering_amplitudes(b.stack(), e).t()); };
        double peak = oracles::golden_section_max(T, p.energy - 2.0 * grid.step(), p.energy + 2.0 * grid.step(), 1e-12);
        EXPECT_LE(std::abs(peak - p.energy), 2.0 * grid.step());
    }
}

TEST(Resonances, ReversalSymmetric) {
    StackBackend b(resonant_stack());
    auto run = verify_identity(b, EnergyGrid(0.05, 5.9, 800));
    auto fwd = find_resonances(run.reports);
    std::vector<DwellReport> rev(run.reports.rbegin(), run.reports.rend());
    for (auto& r : rev) r.energy = -r.energy;
    auto bwd = find_resonances(rev);
    ASSERT_EQ(fwd.dos_peaks.size(), bwd.dos_peaks.size());
    const std::size_t n = fwd.dos_peaks.size();
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(fwd.dos_peaks[i].energy, -bwd.dos_peaks[n - 1 - i].energy, 1e-12);
        EXPECT_NEAR(fwd.dos_peaks[i].width, bwd.dos_peaks[n - 1 - i].width, 1e-12);
        EXPECT_NEAR(fwd.matches[i].distance, bwd.matches[n - 1 - i].distance, 1e-12);
    }
}

TEST(Resonances, PlateauAndEdges) {
    auto make = [](std::vector<double> y) {
        std::vector<DwellReport> reps;
        for (std::size_t i = 0; i < y.size(); ++i) {
            DwellReport r;
            r.energy = static_cast<double>(i);
            r.dos_green = y[i];
            r.dos_sum = y[i];
            r.channels.push_back({"L", y[i] * pi, std::nullopt, 1.0});
            r.channels.push_back({"R", y[i] * pi, std::nullopt, 1.0});
            reps.push_back(r);
        }
        return reps;
    };
    auto t = find_resonances(make({1, 2, 3, 3, 2, 1}));
    ASSERT_EQ(t.dos_peaks.size(), 1u);
    EXPECT_DOUBLE_EQ(t.dos_peaks[0].energy, 2.5);
    // boundary maxima are not peaks
    EXPECT_TRUE(find_resonances(make({5, 4, 3, 2, 1})).dos_peaks.empty());
    // small bumps below the prominence floor are dropped
    EXPECT_EQ(find_resonances(make({1, 10, 1, 1.2, 1, 1})).dos_peaks.size(), 1u);
    EXPECT_EQ(find_resonances(make({1, 10, 1, 1.2, 1, 1}), 0.01).dos_peaks.size(), 2u);
}
