#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "magtomo/snr.hpp"

using namespace magtomo;

namespace {

WaveguideScenario infrared_at(double l_um) {
    const auto p = yig_preset(YigBand::infrared);
    return resonant_scenario(p.material, units::wavelength_to_omega(p.wavelength), p.omega_m, units::um_to_m(l_um));
}

std::vector<SnrRow> infrared_sweep() {
    const auto p = yig_preset(YigBand::infrared);
    return snr_sweep(p.material, units::wavelength_to_omega(p.wavelength), p.omega_m,
                     log_grid(units::um_to_m(1.0), units::um_to_m(1000.0), 31), 0.0);
}

}  // namespace

TEST(Units, RoundTrip) {
    for (double x : {1e-3, 0.5, 200.0, 3000.0, 1.7e5}) {
        EXPECT_NEAR(units::rad_per_m_to_deg_per_cm(units::deg_per_cm_to_rad_per_m(x)) / x, 1.0, 1e-12);
        EXPECT_NEAR(units::per_m_to_per_cm(units::per_cm_to_per_m(x)) / x, 1.0, 1e-12);
        EXPECT_NEAR(units::kg_per_m3_to_g_per_cm3(units::g_per_cm3_to_kg_per_m3(x)) / x, 1.0, 1e-12);
    }
    EXPECT_NEAR(units::deg_per_cm_to_rad_per_m(180.0), 100.0 * pi, 1e-12);
}

TEST(Material, Validation) {
    auto m = yig_preset(YigBand::visible).material;
    EXPECT_NO_THROW(m.validate());
    m.eps_r = 5.0;
    EXPECT_THROW(m.validate(), ConfigError);
    m = yig_preset(YigBand::visible).material;
    m.alpha_abs = 0.0;
    EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Scenario, BoundaryUnitarity) {
    auto s = infrared_at(50.0);
    for (double r : {0.0, 0.3, 0.9, 0.999}) {
        s.rho = r;
        EXPECT_NEAR(s.material.mu_ref * s.tau() * s.tau() + r * r, 1.0, 1e-15);
    }
    s.rho = 1.0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(HeatingBudget, Scaling) {
    auto s = infrared_at(100.0);
    const double b = heating_budget_amplitude(s);
    EXPECT_GT(b, 0.0);
    EXPECT_TRUE(std::isfinite(b));
    auto s2 = s;
    s2.material.alpha_abs *= 2.0;
    EXPECT_NEAR(heating_budget_amplitude(s2) / b, 0.5, 1e-14);
    s2 = s;
    s2.l *= 2.0;
    EXPECT_NEAR(heating_budget_amplitude(s2) / b, 0.5, 1e-14);
}

TEST(ThetaFull, NoMagnetoOpticsGivesZero) {
    auto s = infrared_at(100.0);
    s.material.theta_F = 0.0;
    s.material.theta_C = 0.0;
    EXPECT_EQ(theta_full(s), 0.0);
}

TEST(ThetaFull, PulseAndVolumeDropOut) {
    auto s = infrared_at(100.0);
    const double t0 = theta_full(s);
    for (double T : {1e-12, 1e-9, 3.7e-6}) {
        s.T_pul = T;
        EXPECT_NEAR(theta_full(s) / t0, 1.0, 1e-12);
    }
    for (double V : {1e-18, 1e-12, 4e-9}) {
        s.V_mag = V;
        EXPECT_NEAR(theta_full(s) / t0, 1.0, 1e-12);
    }
}

TEST(ThetaFull, ExplicitAmplitudeMatchesBudgetMode) {
    auto s = infrared_at(300.0);
    EXPECT_NEAR(theta_full(s, budget_travelling_amplitude(s)) / theta_full(s), 1.0, 1e-12);
}

TEST(ThetaFull, InfraredSweepRange) {
    const auto rows = infrared_sweep();
    double lo = 1.0, hi = 0.0;
    for (const auto& r : rows) {
        lo = std::min(lo, r.theta);
        hi = std::max(hi, r.theta);
        EXPECT_GT(r.theta, 0.15);
        EXPECT_LT(r.theta, 0.30);
    }
    // covers (0.18, 0.25) within a 0.03 band
    EXPECT_LE(lo, 0.18 + 0.03);
    EXPECT_GE(lo, 0.18 - 0.03);
    EXPECT_GE(hi, 0.25 - 0.03);
    EXPECT_LE(hi, 0.25 + 0.03);
}

TEST(ThetaFull, ResonanceDivergence) {
    WaveguideScenario s = infrared_at(1.0);
    s.material.alpha_abs = 1e-12;
    s.omega_m = 0.0;
    s.rho = 1.0 - 1e-14;
    EXPECT_THROW(theta_full(s), ResonanceDivergence);
}

TEST(OptimalReflectivity, LosslessResonantLimit) {
    auto s = infrared_at(1.0);
    s.material.alpha_abs = 1e-9;
    s.omega_m = 1e3;
    EXPECT_GT(optimal_reflectivity(s), 1.0 - 1e-6);
}

TEST(OptimalReflectivity, StrongAbsorptionGivesZero) {
    auto s = infrared_at(100.0);
    s.material.alpha_abs = 2.0 * std::log(2.0) / s.l;  // Gamma^2 = 1/4
    EXPECT_EQ(optimal_reflectivity(s), 0.0);
}

TEST(OptimalReflectivity, OneMinusRhoTracksDetuning) {
    const auto p = yig_preset(YigBand::infrared);
    for (double l_um : {1.0, 3.0, 10.0, 30.0, 100.0}) {
        const auto s = infrared_at(l_um);
        const double x = p.omega_m * s.l / s.v();
        ASSERT_LT(1.0 - s.Gamma(), 0.1 * x);
        const double ratio = (1.0 - optimal_reflectivity(s)) / x;
        EXPECT_GE(ratio, 0.5) << l_um;
        EXPECT_LE(ratio, 2.0) << l_um;
    }
}

TEST(OptimalReflectivity, MaximizesTheta) {
    auto s = infrared_at(200.0);
    const double best = theta_full(s);
    const double r0 = s.rho;
    for (double dr : {-1e-2, -1e-3, 1e-3, 5e-3}) {
        s.rho = r0 + dr;
        EXPECT_LE(theta_full(s), best * (1.0 + 1e-12));
    }
}

TEST(ThetaOff, VisiblePreset) {
    const auto p = yig_preset(YigBand::visible);
    EXPECT_NEAR(theta_off_resonance(p.material, units::wavelength_to_omega(p.wavelength)), 0.02, 0.005);
}

TEST(ThetaOff, Scaling) {
    const auto p = yig_preset(YigBand::infrared);
    const double w = units::wavelength_to_omega(p.wavelength);
    const double t = theta_off_resonance(p.material, w);
    auto m = p.material;
    m.alpha_abs *= 4.0;
    EXPECT_NEAR(theta_off_resonance(m, w) / t, 0.5, 1e-14);
    m = p.material;
    double prev = 0.0;
    for (double f : {0.5, 1.0, 2.0, 4.0}) {
        m.theta_F = f * p.material.theta_F;
        const double cur = theta_off_resonance(m, w);
        EXPECT_GT(cur, prev);
        prev = cur;
    }
}

TEST(ThetaOff, AgreesWithFullThetaAcrossSweep) {
    const auto p = yig_preset(YigBand::infrared);
    const double t = theta_off_resonance(p.material, units::wavelength_to_omega(p.wavelength));
    for (const auto& r : infrared_sweep()) {
        EXPECT_GE(r.theta / t, 0.5);
        EXPECT_LE(r.theta / t, 2.0);
    }
}

TEST(OutputNoise, Limits) {
    auto s = infrared_at(100.0);
    auto [a, b] = output_noise_sigma(s, 0.0);
    EXPECT_NEAR(a, 1.0, 1e-15);
    EXPECT_NEAR(b, 1.0, 1e-15);
    s.material.alpha_abs = 1e-300;  // Gamma = 1
    std::tie(a, b) = output_noise_sigma(s, 1.3);
    EXPECT_NEAR(a * a, std::exp(-1.3), 1e-15);
    EXPECT_NEAR(b * b, std::exp(1.3), 1e-12);
}

TEST(OutputNoise, ImpedanceMatchedResonanceHasNoSqueezing) {
    auto s = infrared_at(100.0);
    s.material.alpha_abs = 500.0;
    s.rho = s.Gamma();
    // (k_in + k_m) l = 2 pi n
    s.omega_in = 2.0 * pi * 40.0 * s.v() / s.l - s.omega_m;
    for (double r : {0.2, 1.0, 2.3}) EXPECT_NEAR(output_noise_sigma(s, r).first, 1.0, 1e-12);
}

TEST(OutputNoise, UncertaintyProduct) {
    auto s = infrared_at(100.0);
    for (double alpha : {1.0, 100.0, 3000.0})
        for (double rho : {0.0, 0.5, 0.95})
            for (double r : {0.0, 0.4, 1.6, 3.0})
                for (double win_shift : {0.0, 0.3, 1.1}) {
                    s.material.alpha_abs = alpha;
                    s.rho = rho;
                    auto t = s;
                    t.omega_in += win_shift * s.v() / s.l;
                    const auto [a, b] = output_noise_sigma(t, r);
                    EXPECT_GE(a * b, 1.0 - 1e-12);
                    EXPECT_GE(a, std::exp(-0.5 * r) - 1e-15);
                }
}

TEST(Intracavity, NoReflection) {
    auto s = infrared_at(100.0);
    s.rho = 0.0;
    s.P_in = 1e-3;
    const double expect = s.material.mu_ref / std::sqrt(s.material.mu_ref) *
                          std::sqrt(*s.P_in / (PhysicalConstants::hbar * s.omega_in * PhysicalConstants::c));
    EXPECT_NEAR(std::abs(intracavity_amplitude(s)) / expect, 1.0, 1e-14);
}

TEST(Intracavity, PeaksOnResonanceAndScalesWithPower) {
    auto s = infrared_at(100.0);
    s.rho = 0.9;
    s.P_in = 1e-3;
    const double base = s.omega_in;  // k_in l = 2 pi n
    const double peak = std::abs(intracavity_amplitude(s));
    for (double f : {0.05, 0.2, 0.5}) {
        s.omega_in = base + f * pi * s.v() / s.l;
        EXPECT_LT(std::abs(intracavity_amplitude(s)), peak);
    }
    s.omega_in = base + pi * s.v() / s.l;  // k_in l = (2n+1) pi
    // the drive carries 1/sqrt(omega_in)
    EXPECT_NEAR(std::abs(intracavity_amplitude(s)) / peak, std::sqrt(base / s.omega_in), 1e-9);
    s.omega_in = base;
    s.P_in = 2e-3;
    EXPECT_NEAR(std::abs(intracavity_amplitude(s)) / peak, std::sqrt(2.0), 1e-12);
}

TEST(SignalAmplitude, ZeroWithoutMagnetoOptics) {
    auto s = infrared_at(100.0);
    s.P_in = 1e-3;
    s.material.theta_F = 0.0;
    EXPECT_EQ(std::abs(signal_amplitude_S(s)), 0.0);
}

TEST(SignalAmplitude, ModulusEqualsTheta) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScopedWarningHandler quiet([](const Warning&) {});
    for (int i = 0; i < 20; ++i) {
        WaveguideScenario s;
        s.material = yig_preset(u(rng) < 0.5 ? YigBand::visible : YigBand::infrared).material;
        s.material.theta_C = 50.0 * u(rng);
        s.material.alpha_abs *= 0.5 + 2.0 * u(rng);
        s.l = units::um_to_m(1.0 + 999.0 * u(rng));
        s.rho = 0.99 * u(rng);
        s.omega_in = units::wavelength_to_omega(0.5e-6 + 1.5e-6 * u(rng));
        s.omega_m = 2.0 * pi * (1e9 + 9e9 * u(rng));
        s.T_pul = 1e-9 * (0.1 + u(rng));
        s.V_mag = 1e-15 * (0.1 + 10.0 * u(rng));
        s.P_in = 1e-4 + 1e-2 * u(rng);
        const double theta = theta_full(s, std::abs(intracavity_amplitude(s)));
        EXPECT_NEAR(std::abs(signal_amplitude_S(s)) / theta, 1.0, 1e-9) << i;
    }
}

TEST(SignalAmplitude, DegenerateSidebandsAtZeroMagnonFrequency) {
    auto s = infrared_at(100.0);
    s.rho = 0.7;
    s.omega_m = 0.0;
    EXPECT_NEAR(std::abs(detail::round_trip_denominator(s, s.k_out()) - detail::round_trip_denominator(s, s.k_in())),
                0.0, 1e-15);
    const auto [blue, red] = sideband_factors(s);
    EXPECT_TRUE(std::isfinite(std::abs(blue)) && std::isfinite(std::abs(red)));
}

TEST(SignalAmplitude, WarnsOutsideWeakSignalRegime) {
    auto s = infrared_at(100.0);
    s.P_in = 1e6;
    s.T_pul = 1e-3;
    std::vector<Warning> seen;
    ScopedWarningHandler h([&](const Warning& w) { seen.push_back(w); });
    ASSERT_GT(std::abs(signal_amplitude_S(s)), 0.5);
    ASSERT_FALSE(seen.empty());
    EXPECT_EQ(seen.front().code, "WeakSignalAssumption");
}

TEST(SnrSweep, GridHelpers) {
    EXPECT_TRUE(log_grid(1.0, 10.0, 0).empty());
    const auto g = log_grid(1.0, 1000.0, 4);
    ASSERT_EQ(g.size(), 4u);
    EXPECT_NEAR(g[1], 10.0, 1e-12);
    EXPECT_NEAR(g[3], 1000.0, 1e-9);
}

TEST(MaterialJson, RoundTripAndUnknownKeys) {
    const auto m = yig_preset(YigBand::infrared).material;
    const nlohmann::json j = m;
    const auto back = j.get<MaterialParams>();
    EXPECT_NEAR(back.theta_F / m.theta_F, 1.0, 1e-12);
    EXPECT_NEAR(back.alpha_abs / m.alpha_abs, 1.0, 1e-12);
    EXPECT_NEAR(back.mu_den / m.mu_den, 1.0, 1e-12);
    auto bad = j;
    bad["theta_F"] = 1.0;
    EXPECT_THROW(bad.get<MaterialParams>(), ConfigError);
}
