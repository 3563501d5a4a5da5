#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "error.hpp"
#include "states.hpp"
#include "types.hpp"

namespace magtomo {

// SI, exact since the 2019 redefinition.
struct PhysicalConstants {
    static constexpr double hbar = 1.054571817e-34;  // J s
    static constexpr double k_B = 1.380649e-23;      // J/K
    static constexpr double c = 299792458.0;         // m/s
};

namespace units {

inline constexpr double deg = pi / 180.0;

inline constexpr double deg_per_cm_to_rad_per_m(double x) { return x * deg * 100.0; }
inline constexpr double rad_per_m_to_deg_per_cm(double x) { return x / (deg * 100.0); }
inline constexpr double per_cm_to_per_m(double x) { return x * 100.0; }
inline constexpr double per_m_to_per_cm(double x) { return x / 100.0; }
inline constexpr double g_per_cm3_to_kg_per_m3(double x) { return x * 1000.0; }
inline constexpr double kg_per_m3_to_g_per_cm3(double x) { return x / 1000.0; }
inline constexpr double um_to_m(double x) { return x * 1e-6; }
inline double wavelength_to_omega(double lambda_m) { return 2.0 * pi * PhysicalConstants::c / lambda_m; }

}  // namespace units

struct MaterialParams {
    double theta_F = 0.0;    // rad/m
    double theta_C = 0.0;    // rad/m
    double alpha_abs = 0.0;  // 1/m
    double mu_ref = 1.0;
    double eps_r = 1.0;      // mu_ref^2
    double M_s = 0.0;        // A/m
    double gamma_G = 0.0;    // rad/(s T)
    double C_V = 0.0;        // J/(kg K)
    double mu_den = 0.0;     // kg/m^3

    void validate() const {
        auto positive = [](double x, const char* name) {
            if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string("material: ") + name + " must be > 0");
        };
        if (!(theta_F >= 0.0) || !(theta_C >= 0.0)) throw ConfigError("material: theta_F, theta_C must be >= 0");
        positive(alpha_abs, "alpha_abs");
        positive(mu_ref, "mu_ref");
        positive(M_s, "M_s");
        positive(gamma_G, "gamma_G");
        positive(C_V, "C_V");
        positive(mu_den, "mu_den");
        if (std::abs(eps_r - mu_ref * mu_ref) > 1e-9 * eps_r) throw ConfigError("material: eps_r must equal mu_ref^2");
    }
};

struct WaveguideScenario {
    MaterialParams material;
    double l = 0.0;         // m
    double rho = 0.0;       // boundary reflectivity
    double omega_in = 0.0;  // rad/s
    double omega_m = 0.0;   // rad/s
    double T_pul = 1e-9;    // s
    double V_mag = 1e-15;   // m^3
    std::optional<double> P_in;  // W

    double v() const { return PhysicalConstants::c / material.mu_ref; }
    // mu_ref tau^2 + rho^2 = 1
    double tau() const { return std::sqrt((1.0 - rho * rho) / material.mu_ref); }
    double Gamma() const { return std::exp(-0.5 * material.alpha_abs * l); }
    double k_in() const { return omega_in / v(); }
    double k_m() const { return omega_m / v(); }
    double k_out() const { return k_in() + k_m(); }

    void validate() const {
        material.validate();
        if (!(l > 0.0)) throw ConfigError("scenario: l must be > 0");
        if (!(rho >= 0.0) || !(rho < 1.0)) throw ConfigError("scenario: rho must be in [0, 1)");
        if (!(omega_in > 0.0)) throw ConfigError("scenario: omega_in must be > 0");
        if (!(omega_m >= 0.0)) throw ConfigError("scenario: omega_m must be >= 0");
        if (!(T_pul > 0.0) || !(V_mag > 0.0)) throw ConfigError("scenario: T_pul and V_mag must be > 0");
        if (P_in && !(*P_in > 0.0)) throw ConfigError("scenario: P_in must be > 0");
    }
};

namespace detail {

// 1 - rho^2 Gamma^2 e^{2 i k l}
inline cplx round_trip_denominator(const WaveguideScenario& s, double k) {
    const cplx d = 1.0 - s.rho * s.rho * s.Gamma() * s.Gamma() * std::polar(1.0, 2.0 * k * s.l);
    if (std::abs(d) < 1e-12) throw ResonanceDivergence("round-trip denominator vanishes (rho Gamma -> 1 on resonance)");
    return d;
}

}  // namespace detail

// c A_trav^2 T_pul / V_mag allowed by k_B dT/dt < 0.1 hbar omega_m / T_pul.
inline double heating_budget_amplitude(const WaveguideScenario& s) {
    const auto& m = s.material;
    if (!(m.alpha_abs > 0.0)) throw ConfigError("heating budget needs alpha_abs > 0");
    return 0.1 * s.omega_m * m.mu_ref * m.C_V * m.mu_den / (PhysicalConstants::k_B * m.alpha_abs * s.omega_in * s.l);
}

// A_trav from the heating budget.
inline double budget_travelling_amplitude(const WaveguideScenario& s) {
    return std::sqrt(heating_budget_amplitude(s) * s.V_mag / (PhysicalConstants::c * s.T_pul));
}

// theta for an explicit intracavity amplitude A_trav (units of sqrt(photons / m)).
inline double theta_full(const WaveguideScenario& s, double A_trav) {
    s.validate();
    const auto& m = s.material;
    const double pre = m.gamma_G * PhysicalConstants::hbar / (2.0 * m.M_s) * PhysicalConstants::c * A_trav * A_trav *
                       s.T_pul / s.V_mag;
    return std::sqrt(pre) * 0.5 * (m.theta_F + m.theta_C) * s.Gamma() * s.l * s.tau() /
           std::abs(detail::round_trip_denominator(s, s.k_out()));
}

// theta with the amplitude set by the heating budget; T_pul and V_mag cancel.
inline double theta_full(const WaveguideScenario& s) {
    s.validate();
    const auto& m = s.material;
    const double pre = m.gamma_G * PhysicalConstants::hbar / (2.0 * m.M_s) * heating_budget_amplitude(s);
    return std::sqrt(pre) * 0.5 * (m.theta_F + m.theta_C) * s.Gamma() * s.l * s.tau() /
           std::abs(detail::round_trip_denominator(s, s.k_out()));
}

// Reflectivity maximizing theta for a resonant input, clamped to 0.
inline double optimal_reflectivity(const WaveguideScenario& s) {
    const double g2 = s.Gamma() * s.Gamma();
    if (!(g2 > 0.0) || g2 > 1.0) throw ConfigError("optimal_reflectivity: Gamma must be in (0, 1]");
    const double x = 2.0 * s.omega_m * s.l / s.v();
    const double r2 = 1.0 - std::sqrt(1.0 + g2 * g2 - 2.0 * g2 * std::cos(x)) / g2;
    return r2 > 0.0 ? std::sqrt(r2) : 0.0;
}

// Off-resonance, length-independent limit of theta_full.
inline double theta_off_resonance(const MaterialParams& m, double omega_in) {
    if (!(m.alpha_abs > 0.0)) throw ConfigError("theta_off_resonance needs alpha_abs > 0");
    const double v = PhysicalConstants::c / m.mu_ref;
    return 1.0 / (8.0 * std::sqrt(5.0)) *
           std::sqrt(m.gamma_G * PhysicalConstants::hbar * m.C_V * m.mu_den * v / (PhysicalConstants::k_B * m.M_s)) *
           (m.theta_F + m.theta_C) / std::sqrt(m.alpha_abs * omega_in);
}

// (sigma_s, sigma_b) of the output noise for input squeezing r_in.
inline std::pair<double, double> output_noise_sigma(const WaveguideScenario& s, double r_in) {
    if (!(r_in >= 0.0)) throw ConfigError("output_noise_sigma: r_in must be >= 0");
    const double g = s.Gamma();
    const double frac = (1.0 - g * g) * (1.0 - s.rho * s.rho) /
                        (1.0 + s.rho * s.rho * g * g - 2.0 * s.rho * g * std::cos((s.k_in() + s.k_m()) * s.l));
    auto var = [&](double r) { return std::exp(-r) + (1.0 - std::exp(-r)) * frac; };
    return {std::sqrt(var(r_in)), std::sqrt(var(-r_in))};
}

// Input amplitude inside the magnet, sqrt(photons / m).
inline cplx intracavity_amplitude(const WaveguideScenario& s) {
    s.validate();
    if (!s.P_in) throw ConfigError("intracavity_amplitude needs P_in");
    const double drive = std::sqrt(*s.P_in / (PhysicalConstants::hbar * s.omega_in * PhysicalConstants::c));
    return s.material.mu_ref * s.tau() / detail::round_trip_denominator(s, s.k_in()) * drive;
}

// G_yx; G_xy follows from theta_F -> -theta_F.
inline cplx coupling_G(const WaveguideScenario& s, bool xy = false) {
    const auto& m = s.material;
    const double mzpf = std::sqrt(m.gamma_G * PhysicalConstants::hbar * m.M_s / (2.0 * s.V_mag));
    const double th = (xy ? -m.theta_F : m.theta_F) + m.theta_C;
    return cplx(0.0, PhysicalConstants::c / std::sqrt(m.eps_r)) * (mzpf / m.M_s) * (0.5 * th);
}

inline cplx signal_prefactor_S0(const WaveguideScenario& s) {
    s.validate();
    if (!s.P_in) throw ConfigError("S0 needs P_in");
    const auto& m = s.material;
    const double drive = std::sqrt(*s.P_in / (PhysicalConstants::hbar * s.omega_in * PhysicalConstants::c));
    return cplx(0.0, -s.Gamma() * s.l / PhysicalConstants::c) * m.mu_ref * (1.0 - s.rho * s.rho) *
           std::polar(1.0, s.k_in() * s.l) / detail::round_trip_denominator(s, s.k_in()) * drive;
}

// Complex signal amplitude S; theta = |S|.
inline cplx signal_amplitude_S(const WaveguideScenario& s) {
    const cplx S = signal_prefactor_S0(s) * coupling_G(s) / detail::round_trip_denominator(s, s.k_out()) *
                   std::sqrt(PhysicalConstants::c * s.T_pul);
    if (std::abs(S) > 0.5) {
        std::ostringstream os;
        os << "|S| = " << std::abs(S) << " is outside the |S| << 1 regime; treat as an order-of-magnitude estimate";
        warn("WeakSignalAssumption", os.str());
    }
    return S;
}

// Sideband amplitude factors A_b / m and A_r / m^dagger.
inline std::pair<cplx, cplx> sideband_factors(const WaveguideScenario& s) {
    const cplx blue = coupling_G(s) * std::polar(1.0, 0.5 * s.k_m() * s.l) /
                      detail::round_trip_denominator(s, s.k_in() + s.k_m());
    const cplx red = std::conj(coupling_G(s, true)) * std::polar(1.0, -0.5 * s.k_m() * s.l) /
                     detail::round_trip_denominator(s, s.k_in() - s.k_m());
    return {blue, red};
}

// YIG at cryogenic temperature. M_s and gamma_G are standard YIG values; mu_ref = 2.2.
enum class YigBand { visible, infrared };

struct YigPreset {
    MaterialParams material;
    double wavelength = 0.0;  // m
    double omega_m = 2.0 * pi * 5e9;
};

inline YigPreset yig_preset(YigBand band) {
    MaterialParams m;
    m.mu_ref = 2.2;
    m.eps_r = m.mu_ref * m.mu_ref;
    m.M_s = 1.4e5;
    m.gamma_G = 1.76e11;
    m.C_V = 590.0;
    m.mu_den = units::g_per_cm3_to_kg_per_m3(5.0);
    m.theta_C = 0.0;
    YigPreset p;
    if (band == YigBand::visible) {
        m.theta_F = units::deg_per_cm_to_rad_per_m(3000.0);
        m.alpha_abs = units::per_cm_to_per_m(1e-2 * 200.0);
        p.wavelength = 550e-9;
    } else {
        m.theta_F = units::deg_per_cm_to_rad_per_m(200.0);
        m.alpha_abs = units::per_cm_to_per_m(1e-2 * 0.03);  // room-temperature value is an upper bound
        p.wavelength = 1.5e-6;
    }
    p.material = m;
    return p;
}

struct SnrRow {
    double l = 0.0;
    double rho_opt = 0.0;
    double theta = 0.0;
    double sigma_s = 1.0;
    double sigma_b = 1.0;
};

// Scenario at length l with the input snapped to the nearest resonance k_in l = 2 pi n and the
// reflectivity set to its optimum.
inline WaveguideScenario resonant_scenario(const MaterialParams& m, double omega_in, double omega_m, double l) {
    WaveguideScenario s;
    s.material = m;
    s.l = l;
    s.omega_m = omega_m;
    const double v = PhysicalConstants::c / m.mu_ref;
    const double n = std::max(1.0, std::round(omega_in * l / (v * 2.0 * pi)));
    s.omega_in = 2.0 * pi * n * v / l;
    s.rho = 0.0;
    s.rho = optimal_reflectivity(s);
    return s;
}

inline std::vector<SnrRow> snr_sweep(const MaterialParams& m, double omega_in, double omega_m,
                                     const std::vector<double>& lengths, double r_in) {
    std::vector<SnrRow> rows;
    rows.reserve(lengths.size());
    for (double l : lengths) {
        const auto s = resonant_scenario(m, omega_in, omega_m, l);
        const auto [ss, sb] = output_noise_sigma(s, r_in);
        rows.push_back({l, s.rho, theta_full(s), ss, sb});
    }
    return rows;
}

inline std::vector<double> log_grid(double lo, double hi, int count) {
    if (count < 0) throw ConfigError("grid count must be >= 0");
    std::vector<double> g;
    if (count == 0) return g;
    if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError("log grid needs 0 < min <= max");
    if (count == 1) return {lo};
    for (int i = 0; i < count; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
    return g;
}

// JSON material block with unit-suffixed fields.
inline void to_json(nlohmann::json& j, const MaterialParams& m) {
    j = {{"theta_F_deg_per_cm", units::rad_per_m_to_deg_per_cm(m.theta_F)},
         {"theta_C_deg_per_cm", units::rad_per_m_to_deg_per_cm(m.theta_C)},
         {"alpha_abs_per_cm", units::per_m_to_per_cm(m.alpha_abs)},
         {"mu_ref", m.mu_ref},
         {"M_s_A_per_m", m.M_s},
         {"gamma_G_rad_per_s_T", m.gamma_G},
         {"C_V_J_per_kg_K", m.C_V},
         {"mu_den_g_per_cm3", units::kg_per_m3_to_g_per_cm3(m.mu_den)}};
}

inline void from_json(const nlohmann::json& j, MaterialParams& m) {
    const std::string where = "material";
    detail::require_keys(j,
                         {"theta_F_deg_per_cm", "theta_C_deg_per_cm", "alpha_abs_per_cm", "mu_ref", "M_s_A_per_m",
                          "gamma_G_rad_per_s_T", "C_V_J_per_kg_K", "mu_den_g_per_cm3"},
                         where);
    m.theta_F = units::deg_per_cm_to_rad_per_m(detail::get_number(j, "theta_F_deg_per_cm", where));
    m.theta_C = j.contains("theta_C_deg_per_cm")
                    ? units::deg_per_cm_to_rad_per_m(detail::get_number(j, "theta_C_deg_per_cm", where))
                    : 0.0;
    m.alpha_abs = units::per_cm_to_per_m(detail::get_number(j, "alpha_abs_per_cm", where));
    m.mu_ref = detail::get_number(j, "mu_ref", where);
    m.eps_r = m.mu_ref * m.mu_ref;
    m.M_s = detail::get_number(j, "M_s_A_per_m", where);
    m.gamma_G = detail::get_number(j, "gamma_G_rad_per_s_T", where);
    m.C_V = detail::get_number(j, "C_V_J_per_kg_K", where);
    m.mu_den = units::g_per_cm3_to_kg_per_m3(detail::get_number(j, "mu_den_g_per_cm3", where));
    m.validate();
}

}  // namespace magtomo
