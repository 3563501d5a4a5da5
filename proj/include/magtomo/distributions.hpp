#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "error.hpp"
#include "fock.hpp"
#include "states.hpp"
#include "types.hpp"

namespace magtomo {

struct NoiseModel {
    double sigma_s = 1.0;  // squeezed quadrature std-dev
    double sigma_b = 1.0;  // anti-squeezed quadrature std-dev
    double psi = 0.0;      // squeezing direction
    bool adaptive = true;  // squeezing direction follows phi

    static NoiseModel adaptive_squeezed(double sigma_s) {
        return {sigma_s, std::max(sigma_s, 1.0 / sigma_s), 0.0, true};
    }

    void validate() const {
        if (!(sigma_s > 0.0) || !std::isfinite(sigma_s)) throw ConfigError("noise: sigma_s must be > 0");
        if (!(sigma_b >= sigma_s) || !std::isfinite(sigma_b)) throw ConfigError("noise: sigma_b must be >= sigma_s");
        if (!std::isfinite(psi)) throw ConfigError("noise: psi must be finite");
    }

    double variance(double phi) const {
        if (adaptive) return sigma_s * sigma_s;
        const double c = std::cos(phi - psi), s = std::sin(phi - psi);
        return sigma_b * sigma_b * s * s + sigma_s * sigma_s * c * c;
    }
};

struct SignalModel {
    double theta = 0.0;    // mixing angle, theta = |S|
    double s_phase = 0.0;  // phase of S; rotates the magnon quadrature phi -> phi - s_phase

    void validate() const {
        if (!std::isfinite(theta) || theta < 0.0 || theta > pi / 2)
            throw ConfigError("signal: theta must lie in [0, pi/2]");
        if (!std::isfinite(s_phase)) throw ConfigError("signal: s_phase must be finite");
    }
    double snr() const { return std::tan(theta); }
};

inline double gaussian_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * pi * var);
}

namespace detail {

inline double squeezed_quadrature_variance(double r, double psi, double phi) {
    const double c = std::cos(phi - psi), s = std::sin(phi - psi);
    return std::exp(-2.0 * r) * c * c + std::exp(2.0 * r) * s * s;
}

// alpha e^{-i phi}
inline cplx rotated(cplx alpha, double phi) { return alpha * std::polar(1.0, -phi); }

}  // namespace detail

// Closed-form density of the magnon quadrature m_phi.
inline double p_m(const TargetStateSpec& spec, double m, double phi) {
    switch (spec.variant) {
        case StateVariant::vacuum: return gaussian_pdf(m, 0.0, 1.0);
        case StateVariant::fock: {
            const double h = hermite_functions(m, spec.n + 1)(spec.n);
            return h * h;
        }
        case StateVariant::squeezed_coherent:
            return gaussian_pdf(m, 2.0 * detail::rotated(spec.alpha, phi).real(),
                                detail::squeezed_quadrature_variance(spec.r, spec.psi, phi));
        case StateVariant::classical_mixture: {
            const double mu = 2.0 * detail::rotated(spec.alpha, phi).real();
            return 0.5 * (gaussian_pdf(m, mu, 1.0) + gaussian_pdf(m, -mu, 1.0));
        }
        case StateVariant::cat: {
            const cplx y = detail::rotated(spec.alpha, phi);
            const double n2 = std::pow(cat_normalization(spec.alpha, spec.psi), 2);
            const double mix = 0.5 * (gaussian_pdf(m, 2.0 * y.real(), 1.0) + gaussian_pdf(m, -2.0 * y.real(), 1.0));
            const double inter = std::exp(-0.5 * m * m - 2.0 * y.real() * y.real()) / std::sqrt(2.0 * pi) *
                                 std::cos(2.0 * m * y.imag() - spec.psi);
            return n2 * (mix + inter);
        }
    }
    throw UnsupportedState("p_m: unknown variant");
}

inline double p_eta(const NoiseModel& noise, double eta, double phi) {
    return gaussian_pdf(eta, 0.0, noise.variance(phi));
}

// Amplitude of the cat interference term in p_a relative to the mixture term:
// exp(-2|alpha|^2 cos^2(theta) sigma_phi^2 / (sin^2 theta + cos^2 theta sigma_phi^2)).
inline double cat_interference_amplitude(cplx alpha, double theta, double sigma_phi) {
    const double s = std::sin(theta), c = std::cos(theta);
    const double n = c * c * sigma_phi * sigma_phi;
    return std::exp(-2.0 * std::norm(alpha) * n / (s * s + n));
}

// p_a(., phi) with the phase-dependent constants evaluated once.
class OutputDensity {
public:
    OutputDensity(const TargetStateSpec& spec, const SignalModel& sig, const NoiseModel& noise, double phi)
        : variant_(spec.variant), psi_(spec.psi) {
        const double s = std::sin(sig.theta), c = std::cos(sig.theta);
        const double nv = noise.variance(phi);
        const double ph = phi - sig.s_phase;
        if (s == 0.0) {
            noise_only_ = true;
            var_ = nv;
            return;
        }
        if (spec.variant == StateVariant::fock)
            throw UnsupportedState("p_a: no closed form for Fock states, use p_a_oracle");
        var_ = s * s + c * c * nv;
        const cplx y = detail::rotated(spec.alpha, ph);
        if (variant_ == StateVariant::squeezed_coherent) {
            mu_ = 2.0 * s * y.real();
            var_ = c * c * nv + s * s * detail::squeezed_quadrature_variance(spec.r, spec.psi, ph);
        } else if (variant_ == StateVariant::classical_mixture || variant_ == StateVariant::cat) {
            mu_ = 2.0 * s * y.real();
        }
        if (variant_ == StateVariant::cat) {
            z_i_ = 2.0 * s * y.imag() / var_;
            n2_ = std::pow(cat_normalization(spec.alpha, spec.psi), 2);
            amp_ = cat_interference_amplitude(spec.alpha, sig.theta, std::sqrt(nv)) *
                   std::exp(-0.5 * mu_ * mu_ / var_);
        }
        norm_ = 1.0 / std::sqrt(2.0 * pi * var_);
        inv2v_ = 0.5 / var_;
    }

    double operator()(double a) const {
        if (noise_only_) return gaussian_pdf(a, 0.0, var_);
        switch (variant_) {
            case StateVariant::vacuum: return norm_ * std::exp(-a * a * inv2v_);
            case StateVariant::squeezed_coherent: return norm_ * std::exp(-(a - mu_) * (a - mu_) * inv2v_);
            case StateVariant::classical_mixture: return mix(a);
            case StateVariant::cat:
                return n2_ * (mix(a) + amp_ * norm_ * std::exp(-a * a * inv2v_) * std::cos(a * z_i_ - psi_));
            case StateVariant::fock: break;
        }
        return 0.0;
    }

private:
    StateVariant variant_;
    bool noise_only_ = false;
    double psi_ = 0.0, mu_ = 0.0, var_ = 1.0, z_i_ = 0.0, n2_ = 1.0, amp_ = 0.0, norm_ = 0.0, inv2v_ = 0.0;

    double mix(double a) const {
        return 0.5 * norm_ * (std::exp(-(a - mu_) * (a - mu_) * inv2v_) + std::exp(-(a + mu_) * (a + mu_) * inv2v_));
    }
};

// Closed-form output density p_a(a, phi) of a = sin(theta) m_phi + cos(theta) eta.
inline double p_a(const TargetStateSpec& spec, const SignalModel& sig, const NoiseModel& noise, double a, double phi) {
    return OutputDensity(spec, sig, noise, phi)(a);
}

// Interval holding all but a negligible tail of p_a at this phi: centers +- 10 sigma_max.
inline std::pair<double, double> p_a_support(const TargetStateSpec& spec, const SignalModel& sig,
                                             const NoiseModel& noise, double phi) {
    const double s = std::sin(sig.theta), c = std::cos(sig.theta);
    const double nv = noise.variance(phi);
    const double ph = phi - sig.s_phase;
    double center = 0.0, spread = 0.0, sd = 0.0;
    switch (spec.variant) {
        case StateVariant::squeezed_coherent:
            center = 2.0 * s * detail::rotated(spec.alpha, ph).real();
            sd = std::sqrt(c * c * nv + s * s * detail::squeezed_quadrature_variance(spec.r, spec.psi, ph));
            break;
        case StateVariant::cat:
        case StateVariant::classical_mixture:
            spread = std::abs(2.0 * s * detail::rotated(spec.alpha, ph).real());
            sd = std::sqrt(s * s + c * c * nv);
            break;
        case StateVariant::vacuum: sd = std::sqrt(s * s + c * c * nv); break;
        case StateVariant::fock: throw UnsupportedState("p_a_support: Fock states have no closed-form p_a");
    }
    return {center - spread - 10.0 * sd, center + spread + 10.0 * sd};
}

struct SpectralDensityOptions {
    double width_factor = 0.8;                       // smallest smoothing width in units of the spacing at 0
    std::vector<double> ladder{1.0, 1.25, 1.5, 1.75};  // width multipliers used for extrapolation
};

// Spectral weights w_k(phi) = <u_k|rho|u_k> of the m_phi eigenbasis.
inline RVec spectral_weights(const CMat& rho, const QuadratureBasis& b, double phi) {
    const int d = b.dim();
    CMat u = b.vectors.cast<cplx>();
    for (int j = 0; j < d; ++j) u.row(j) *= std::polar(1.0, phi * j);
    return (u.adjoint() * rho * u).diagonal().real();
}

// Eigenvalue spacing nearest m = 0.
inline double central_spacing(const QuadratureBasis& b) {
    const int d = b.dim();
    int k = 0;
    for (int i = 1; i < d; ++i)
        if (std::abs(b.eigenvalues(i)) < std::abs(b.eigenvalues(k))) k = i;
    if (k + 1 < d) return b.eigenvalues(k + 1) - b.eigenvalues(k);
    return b.eigenvalues(k) - b.eigenvalues(k - 1);
}

// Smoothed spectral density sum_k w_k kappa_h(m - lambda_k), extrapolated to h -> 0 in h^2.
// Comparison route only; the smoothing leaves a bias of order 1e-3.
inline double p_m_numeric(const DensityMatrix& rho, double m, double phi,
                          const SpectralDensityOptions& opt = {}) {
    const auto b = QuadratureBasis::compute(FockCutoff(rho.dim()));
    const RVec w = spectral_weights(rho.elements, b, phi);
    const double h0 = opt.width_factor * central_spacing(b);
    const std::size_t n = opt.ladder.size();
    Eigen::MatrixXd vander(n, n);
    Eigen::VectorXd vals(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = h0 * opt.ladder[i];
        double acc = 0.0;
        for (int k = 0; k < b.dim(); ++k) acc += w(k) * gaussian_pdf(m, b.eigenvalues(k), h * h);
        vals(i) = acc;
        for (std::size_t j = 0; j < n; ++j) vander(i, j) = std::pow(h * h, static_cast<double>(j));
    }
    return vander.fullPivLu().solve(vals)(0);
}

struct OracleOptions {
    double abs_tol = 1e-7;   // failure threshold on the summed error estimate
    unsigned max_depth = 20;
};

// Brute-force convolution of the exact truncated-space quadrature density with p_eta.
namespace detail {

// rho = sum_i |f_i><f_i| over the numerically nonzero spectrum, with the e^{i phi k} phases folded
// in, so the m_phi density costs O(dim * rank) per point.
// Bisection on a 61-point Kronrod panel until each panel's error estimate is within its share of
// an absolute budget.
template <class F>
double adaptive_kronrod(F& f, double lo, double hi, double budget, unsigned depth, double& err_out) {
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 0, 0.0, &err);
    if (err <= budget || depth == 0) {
        err_out += err;
        return v;
    }
    const double mid = 0.5 * (lo + hi);
    return adaptive_kronrod(f, lo, mid, 0.5 * budget, depth - 1, err_out) +
           adaptive_kronrod(f, mid, hi, 0.5 * budget, depth - 1, err_out);
}

struct FactoredDensity {
    CMat factors;  // columns sqrt(lambda_i) conj(e^{i phi k}) e_i(k)

    FactoredDensity(const CMat& rho, double phi) {
        Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (rho + rho.adjoint()));
        const RVec ev = es.eigenvalues();
        const double cut = 1e-15 * std::max(ev.maxCoeff(), 0.0);
        int keep = 0;
        for (Eigen::Index i = 0; i < ev.size(); ++i) keep += ev(i) > cut;
        factors.resize(rho.rows(), keep);
        for (Eigen::Index i = 0, j = 0; i < ev.size(); ++i)
            if (ev(i) > cut) factors.col(j++) = std::sqrt(ev(i)) * es.eigenvectors().col(i);
        for (Eigen::Index k = 0; k < factors.rows(); ++k) factors.row(k) *= std::polar(1.0, -phi * k);
    }

    double operator()(double m) const {
        const RVec h = hermite_functions(m, static_cast<int>(factors.rows()));
        return (h.transpose().cast<cplx>() * factors).squaredNorm();
    }
};

}  // namespace detail

inline double p_a_oracle(const DensityMatrix& rho, const SignalModel& sig, const NoiseModel& noise, double a,
                         double phi, const OracleOptions& opt = {}) {
    const double s = std::sin(sig.theta), c = std::cos(sig.theta);
    const double ph = phi - sig.s_phase;
    if (s == 0.0) return p_eta(noise, a, phi);
    if (c < 1e-15) return quadrature_density(rho.elements, a / s, ph) / s;
    const double nv = noise.variance(phi);
    const auto b = QuadratureBasis::compute(FockCutoff(rho.dim()));
    const double L = 6.0 + 2.0 * b.eigenvalues.cwiseAbs().maxCoeff();
    const detail::FactoredDensity fd(rho.elements, ph);
    auto f = [&](double m) { return fd(m) * gaussian_pdf(a - s * m, 0.0, c * c * nv); };
    // The kernel in m is centred at a/s with width c sigma / s and is below e^{-98} outside 14 widths.
    const double center = a / s, width = c * std::sqrt(nv) / s;
    const double lo = std::max(-L, center - 14.0 * width), hi = std::min(L, center + 14.0 * width);
    if (!(lo < hi)) return 0.0;
    double total_err = 0.0;
    const double total = detail::adaptive_kronrod(f, lo, hi, 0.1 * opt.abs_tol, opt.max_depth, total_err);
    if (!(total_err <= opt.abs_tol) || !std::isfinite(total)) {
        std::ostringstream os;
        os << "p_a_oracle: error estimate " << total_err << " exceeds " << opt.abs_tol << " at a=" << a
           << ", phi=" << phi;
        throw QuadratureFailure(os.str());
    }
    return total;
}

// {"theta": 0.785}, {"theta_over_pi": 0.25} or {"snr": 1.0} (exactly one), optional "s_phase".
inline void to_json(nlohmann::json& j, const SignalModel& s) { j = {{"theta", s.theta}, {"s_phase", s.s_phase}}; }

inline void from_json(const nlohmann::json& j, SignalModel& s) {
    const std::string where = "signal";
    detail::require_keys(j, {"theta", "theta_over_pi", "snr", "s_phase"}, where);
    if (j.contains("theta") + j.contains("theta_over_pi") + j.contains("snr") != 1)
        throw ConfigError(where + ": give exactly one of \"theta\", \"theta_over_pi\", \"snr\"");
    s = SignalModel{};
    if (j.contains("theta")) s.theta = detail::get_number(j, "theta", where);
    else if (j.contains("theta_over_pi")) s.theta = pi * detail::get_number(j, "theta_over_pi", where);
    else {
        const double snr = detail::get_number(j, "snr", where);
        if (!(snr >= 0.0)) throw ConfigError(where + ": snr must be >= 0");
        s.theta = std::atan(snr);
    }
    if (j.contains("s_phase")) s.s_phase = detail::get_number(j, "s_phase", where);
    s.validate();
}

// {"sigma_s": 0.2}; "sigma_b", "psi" and "adaptive" are optional.
inline void to_json(nlohmann::json& j, const NoiseModel& n) {
    j = {{"sigma_s", n.sigma_s}, {"sigma_b", n.sigma_b}, {"psi", n.psi}, {"adaptive", n.adaptive}};
}

inline void from_json(const nlohmann::json& j, NoiseModel& n) {
    const std::string where = "noise";
    detail::require_keys(j, {"sigma_s", "sigma_b", "psi", "adaptive"}, where);
    n = NoiseModel::adaptive_squeezed(detail::get_number(j, "sigma_s", where));
    if (j.contains("sigma_b")) n.sigma_b = detail::get_number(j, "sigma_b", where);
    if (j.contains("psi")) n.psi = detail::get_number(j, "psi", where);
    if (j.contains("adaptive")) {
        if (!j.at("adaptive").is_boolean()) throw ConfigError(where + ": \"adaptive\" must be a boolean");
        n.adaptive = j.at("adaptive").get<bool>();
    }
    n.validate();
}

}  // namespace magtomo
