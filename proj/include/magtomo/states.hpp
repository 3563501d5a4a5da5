#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "json.hpp"

#include "error.hpp"
#include "fock.hpp"
#include "types.hpp"

namespace magtomo {

enum class StateVariant { vacuum, fock, squeezed_coherent, cat, classical_mixture };

struct TargetStateSpec {
    StateVariant variant = StateVariant::vacuum;
    cplx alpha{0.0, 0.0};  // alpha_s or alpha_c
    double r = 0.0;        // squeezing r_s
    double psi = 0.0;      // psi_s (squeezing angle) or psi_c (cat phase)
    int n = 0;             // Fock level

    static TargetStateSpec vacuum() { return {}; }
    static TargetStateSpec fock(int n) { return {StateVariant::fock, {}, 0.0, 0.0, n}; }
    static TargetStateSpec squeezed_coherent(cplx alpha, double r, double psi) {
        return {StateVariant::squeezed_coherent, alpha, r, psi, 0};
    }
    static TargetStateSpec cat(cplx alpha, double psi) { return {StateVariant::cat, alpha, 0.0, psi, 0}; }
    static TargetStateSpec classical_mixture(cplx alpha) {
        return {StateVariant::classical_mixture, alpha, 0.0, 0.0, 0};
    }

    bool is_pure() const { return variant != StateVariant::classical_mixture; }

    void validate() const {
        if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag()) || !std::isfinite(r) || !std::isfinite(psi))
            throw ConfigError("target state parameters must be finite");
        if (variant == StateVariant::fock && n < 0) throw ConfigError("Fock level must be >= 0");
        if (variant == StateVariant::squeezed_coherent && r < 0.0) throw ConfigError("squeezing r must be >= 0");
    }
};

// Benchmark targets of the figure presets.
inline TargetStateSpec benchmark_squeezed_coherent() {
    return TargetStateSpec::squeezed_coherent({1.8, -2.4}, std::log(1.5), 2.7);
}
inline TargetStateSpec benchmark_cat() { return TargetStateSpec::cat({2.7, 1.3}, -1.7); }
inline TargetStateSpec benchmark_classical_mixture() { return TargetStateSpec::classical_mixture({2.7, 1.3}); }

inline const char* variant_name(StateVariant v) {
    switch (v) {
        case StateVariant::vacuum: return "vacuum";
        case StateVariant::fock: return "fock";
        case StateVariant::squeezed_coherent: return "squeezed_coherent";
        case StateVariant::cat: return "cat";
        case StateVariant::classical_mixture: return "classical_mixture";
    }
    return "unknown";
}

namespace detail {

// States are built with operators on a padded space and then projected onto the cutoff; a
// product of truncated exponentials folds the high-level tail of one factor back into the
// low levels (2.7e-5 amplitude error for the benchmark squeezed coherent state at dim 40).
inline FockCutoff working_space(FockCutoff c) { return FockCutoff(std::max(2 * c.dim(), c.dim() + 40)); }

inline CVec project(const CVec& v, FockCutoff c, const char* what) {
    const double lost = v.tail(v.size() - c.dim()).squaredNorm() / v.squaredNorm();
    if (lost > 1e-6) {
        std::ostringstream os;
        os << what << ": population " << lost << " beyond the cutoff (dim " << c.dim() << ")";
        warn("TruncationWarning", os.str());
    }
    return v.head(c.dim());
}

inline CVec coherent_unprojected(cplx alpha, FockCutoff work) {
    ScopedWarningHandler quiet([](const Warning&) {});
    return displacement_operator(alpha, work) * fock_state(0, work);
}

}  // namespace detail

// D(alpha)|0> projected onto the cutoff (not renormalized).
inline CVec coherent_state(cplx alpha, FockCutoff c) {
    return detail::project(detail::coherent_unprojected(alpha, detail::working_space(c)), c, "coherent state");
}

// 1/sqrt(1 + e^{-2|alpha|^2} cos psi).
inline double cat_normalization(cplx alpha, double psi) {
    return 1.0 / std::sqrt(1.0 + std::exp(-2.0 * std::norm(alpha)) * std::cos(psi));
}

inline PureState realize_pure(const TargetStateSpec& spec, FockCutoff c) {
    spec.validate();
    const FockCutoff work = detail::working_space(c);
    switch (spec.variant) {
        case StateVariant::vacuum: return PureState{fock_state(0, c)};
        case StateVariant::fock: return PureState{fock_state(spec.n, c)};
        case StateVariant::squeezed_coherent: {
            CVec v;
            {
                ScopedWarningHandler quiet([](const Warning&) {});
                v = displacement_operator(spec.alpha, work) * (squeezing_operator(spec.r, spec.psi, work) * fock_state(0, work));
            }
            return PureState::normalized(detail::project(v, c, "squeezed coherent state"));
        }
        case StateVariant::cat: {
            const CVec v = (detail::coherent_unprojected(spec.alpha, work) +
                            std::polar(1.0, spec.psi) * detail::coherent_unprojected(-spec.alpha, work)) *
                           (cat_normalization(spec.alpha, spec.psi) / std::sqrt(2.0));
            return PureState::normalized(detail::project(v, c, "cat state"));
        }
        case StateVariant::classical_mixture: throw NotPure("classical mixture has no state vector");
    }
    throw InvalidArgument("unknown state variant");
}

inline DensityMatrix realize_density(const TargetStateSpec& spec, FockCutoff c) {
    if (spec.is_pure()) return DensityMatrix::from_pure(realize_pure(spec, c));
    spec.validate();
    const CVec p = PureState::normalized(coherent_state(spec.alpha, c)).amplitudes;
    const CVec m = PureState::normalized(coherent_state(-spec.alpha, c)).amplitudes;
    const CMat rho = 0.5 * (p * p.adjoint() + m * m.adjoint());
    return DensityMatrix{rho / rho.trace().real()};
}

// JSON: {"variant": "cat", "alpha": [re, im], "psi": -1.7}; squeezed_coherent adds "r",
// fock uses "n". Unknown keys are rejected.
inline void to_json(nlohmann::json& j, const TargetStateSpec& s) {
    j = nlohmann::json{{"variant", variant_name(s.variant)}};
    switch (s.variant) {
        case StateVariant::vacuum: break;
        case StateVariant::fock: j["n"] = s.n; break;
        case StateVariant::squeezed_coherent:
            j["alpha"] = {s.alpha.real(), s.alpha.imag()};
            j["r"] = s.r;
            j["psi"] = s.psi;
            break;
        case StateVariant::cat:
            j["alpha"] = {s.alpha.real(), s.alpha.imag()};
            j["psi"] = s.psi;
            break;
        case StateVariant::classical_mixture: j["alpha"] = {s.alpha.real(), s.alpha.imag()}; break;
    }
}

namespace detail {

inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(where + ": unknown field \"" + it.key() + "\"");
    }
}

inline double get_number(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field \"" + key + "\"");
    if (!j.at(key).is_number()) throw ConfigError(where + ": field \"" + key + "\" must be a number");
    return j.at(key).get<double>();
}

inline cplx get_complex(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field \"" + key + "\"");
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        throw ConfigError(where + ": field \"" + key + "\" must be [re, im]");
    return {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, TargetStateSpec& s) {
    const std::string where = "target";
    if (!j.is_object() || !j.contains("variant") || !j.at("variant").is_string())
        throw ConfigError(where + ": missing string field \"variant\"");
    const auto v = j.at("variant").get<std::string>();
    if (v == "vacuum") {
        detail::require_keys(j, {"variant"}, where);
        s = TargetStateSpec::vacuum();
    } else if (v == "fock") {
        detail::require_keys(j, {"variant", "n"}, where);
        if (!j.contains("n") || !j.at("n").is_number_integer()) throw ConfigError(where + ": fock needs integer \"n\"");
        s = TargetStateSpec::fock(j.at("n").get<int>());
    } else if (v == "squeezed_coherent") {
        detail::require_keys(j, {"variant", "alpha", "r", "psi"}, where);
        s = TargetStateSpec::squeezed_coherent(detail::get_complex(j, "alpha", where), detail::get_number(j, "r", where),
                                               detail::get_number(j, "psi", where));
    } else if (v == "cat") {
        detail::require_keys(j, {"variant", "alpha", "psi"}, where);
        s = TargetStateSpec::cat(detail::get_complex(j, "alpha", where), detail::get_number(j, "psi", where));
    } else if (v == "classical_mixture") {
        detail::require_keys(j, {"variant", "alpha"}, where);
        s = TargetStateSpec::classical_mixture(detail::get_complex(j, "alpha", where));
    } else {
        throw ConfigError(where + ": unknown variant \"" + v + "\"");
    }
    s.validate();
}

}  // namespace magtomo
