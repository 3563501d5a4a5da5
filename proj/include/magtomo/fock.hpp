#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "error.hpp"
#include "types.hpp"

namespace magtomo {

class FockCutoff {
public:
    explicit FockCutoff(int dim) : dim_(dim) {
        if (dim < 2) throw InvalidArgument("Fock cutoff must be >= 2, got " + std::to_string(dim));
    }
    int dim() const noexcept { return dim_; }
    bool operator==(const FockCutoff&) const = default;

private:
    int dim_;
};

struct PureState {
    CVec amplitudes;

    static PureState normalized(CVec v) {
        const double n = v.norm();
        if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("state vector has zero or non-finite norm");
        return PureState{v / n};
    }
    int dim() const { return static_cast<int>(amplitudes.size()); }
};

inline constexpr double density_tolerance = 1e-10;

// Hermitian, unit-trace, PSD matrix. Construction through validated() enforces the invariants.
struct DensityMatrix {
    CMat elements;

    int dim() const { return static_cast<int>(elements.rows()); }

    static DensityMatrix validated(CMat m, double tol = density_tolerance);
    static DensityMatrix from_pure(const PureState& s) {
        return DensityMatrix{s.amplitudes * s.amplitudes.adjoint()};
    }
};

struct DensityDiagnostics {
    double hermiticity = 0.0;
    double trace_error = 0.0;
    double min_eigenvalue = 0.0;
};

// (m + m^dagger) / 2, evaluated into a fresh matrix.
inline CMat hermitian_part(const CMat& m) { return 0.5 * (m + m.adjoint()); }

inline double min_eigenvalue(const CMat& m) {
    const CMat h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline DensityDiagnostics diagnose(const CMat& m) {
    DensityDiagnostics d;
    d.hermiticity = (m - m.adjoint()).cwiseAbs().maxCoeff();
    d.trace_error = std::abs(m.trace() - cplx(1.0, 0.0));
    d.min_eigenvalue = min_eigenvalue(m);
    return d;
}

inline bool is_valid_density(const CMat& m, double tol = density_tolerance) {
    if (m.rows() != m.cols() || m.rows() < 1) return false;
    const auto d = diagnose(m);
    return d.hermiticity < tol && d.trace_error < tol && d.min_eigenvalue > -tol;
}

inline DensityMatrix DensityMatrix::validated(CMat m, double tol) {
    if (m.rows() != m.cols()) throw InvalidDensityMatrix("density matrix must be square");
    const auto d = diagnose(m);
    if (!(d.hermiticity < tol) || !(d.trace_error < tol) || !(d.min_eigenvalue > -tol)) {
        std::ostringstream os;
        os << "invalid density matrix: hermiticity " << d.hermiticity << ", trace error "
           << d.trace_error << ", min eigenvalue " << d.min_eigenvalue;
        throw InvalidDensityMatrix(os.str());
    }
    return DensityMatrix{std::move(m)};
}

inline CMat annihilation_operator(FockCutoff c) {
    const int d = c.dim();
    CMat m = CMat::Zero(d, d);
    for (int n = 1; n < d; ++n) m(n - 1, n) = std::sqrt(static_cast<double>(n));
    return m;
}

inline CMat creation_operator(FockCutoff c) { return annihilation_operator(c).adjoint(); }

inline CMat number_operator(FockCutoff c) {
    const int d = c.dim();
    CMat n = CMat::Zero(d, d);
    for (int k = 0; k < d; ++k) n(k, k) = k;
    return n;
}

inline CVec fock_state(int n, FockCutoff c) {
    if (n < 0 || n >= c.dim()) throw InvalidArgument("Fock level " + std::to_string(n) + " outside cutoff");
    CVec v = CVec::Zero(c.dim());
    v(n) = 1.0;
    return v;
}

namespace detail {

// Population of the two highest levels in the image of |0>.
inline void check_truncation(const CMat& u, const char* what) {
    const int d = static_cast<int>(u.rows());
    const double tail = std::norm(u(d - 1, 0)) + std::norm(u(d - 2, 0));
    if (tail > 1e-6) {
        std::ostringstream os;
        os << what << ": population " << tail << " in the top two Fock levels (dim " << d << ")";
        warn("TruncationWarning", os.str());
    }
}

}  // namespace detail

// D(alpha) = exp(alpha m^dagger - alpha^* m) on the truncated space.
inline CMat displacement_operator(cplx alpha, FockCutoff c) {
    if (std::norm(alpha) > c.dim() / 4.0) {
        std::ostringstream os;
        os << "|alpha|^2 = " << std::norm(alpha) << " exceeds dim/4 = " << c.dim() / 4.0;
        warn("TruncationWarning", os.str());
    }
    const CMat m = annihilation_operator(c);
    const CMat gen = alpha * m.adjoint() - std::conj(alpha) * m;
    CMat out = gen.exp();
    detail::check_truncation(out, "displacement");
    return out;
}

// S(r, psi) = exp[(r/2)(e^{-2i psi} m^2 - e^{2i psi} m^dagger^2)].
inline CMat squeezing_operator(double r, double psi, FockCutoff c) {
    if (std::exp(2.0 * std::abs(r)) > c.dim() / 6.0) {
        std::ostringstream os;
        os << "e^{2|r|} = " << std::exp(2.0 * std::abs(r)) << " exceeds dim/6 = " << c.dim() / 6.0;
        warn("TruncationWarning", os.str());
    }
    const CMat m = annihilation_operator(c);
    const CMat m2 = m * m;
    const cplx ph = std::polar(1.0, -2.0 * psi);
    const CMat gen = (0.5 * r) * (ph * m2 - std::conj(ph) * m2.adjoint());
    CMat out = gen.exp();
    detail::check_truncation(out, "squeezing");
    return out;
}

// m_phi = m e^{-i phi} + m^dagger e^{i phi}.
inline CMat quadrature_operator(double phi, FockCutoff c) {
    const CMat m = annihilation_operator(c);
    const cplx e = std::polar(1.0, -phi);
    return e * m + std::conj(e) * m.adjoint();
}

// Eigensystem of the real tridiagonal m_0; m_phi = W m_0 W^dagger with W = diag(e^{i phi n}).
struct QuadratureBasis {
    RVec eigenvalues;
    RMat vectors;  // columns; first component of each column positive

    int dim() const { return static_cast<int>(eigenvalues.size()); }

    static QuadratureBasis compute(FockCutoff c) {
        const int d = c.dim();
        RMat m0 = RMat::Zero(d, d);
        for (int n = 1; n < d; ++n) {
            m0(n - 1, n) = std::sqrt(static_cast<double>(n));
            m0(n, n - 1) = m0(n - 1, n);
        }
        Eigen::SelfAdjointEigenSolver<RMat> es(m0);
        QuadratureBasis b{es.eigenvalues(), es.eigenvectors()};
        for (int l = 0; l < d; ++l)
            if (b.vectors(0, l) < 0.0) b.vectors.col(l) *= -1.0;
        return b;
    }

    // Gauss weights of the associated quadrature rule, <0|u_l>^2.
    RVec gauss_weights() const { return vectors.row(0).transpose().cwiseAbs2(); }
};

struct QuadratureEigensystem {
    double phi = 0.0;
    RVec eigenvalues;
    CMat eigenvectors;
};

inline QuadratureEigensystem quadrature_eigensystem(double phi, FockCutoff c) {
    const auto b = QuadratureBasis::compute(c);
    QuadratureEigensystem q{phi, b.eigenvalues, b.vectors.cast<cplx>()};
    for (int j = 0; j < c.dim(); ++j) q.eigenvectors.row(j) *= std::polar(1.0, phi * j);
    return q;
}

// f(m_phi) by functional calculus on the eigensystem.
template <class F>
CMat apply_spectral(const QuadratureEigensystem& q, F&& f) {
    RVec v(q.eigenvalues.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f(q.eigenvalues(i));
    return q.eigenvectors * v.asDiagonal() * q.eigenvectors.adjoint();
}

inline cplx expectation(const CMat& rho, const CMat& op) { return (rho * op).trace(); }

inline double purity(const CMat& rho) { return (rho * rho).trace().real(); }

// sqrt(<psi|rho|psi>).
inline double fidelity(const PureState& target, const DensityMatrix& rho) {
    if (target.dim() != rho.dim()) throw InvalidArgument("fidelity: dimension mismatch");
    const double e = (target.amplitudes.adjoint() * rho.elements * target.amplitudes)(0, 0).real();
    if (e < -1e-10) throw NegativeExpectation("<psi|rho|psi> = " + std::to_string(e));
    return std::clamp(std::sqrt(std::max(e, 0.0)), 0.0, 1.0);
}

namespace detail {

// Eigenvalues below dim * eps * max are treated as exact zeros; the square root would
// otherwise turn rounding noise of order 1e-17 into contributions of order 1e-8.
inline RVec clip_spectrum(const RVec& ev) {
    const double cut = ev.size() * std::numeric_limits<double>::epsilon() * std::max(ev.maxCoeff(), 0.0);
    return ev.unaryExpr([cut](double v) { return v > cut ? v : 0.0; });
}

}  // namespace detail

inline CMat psd_sqrt(const CMat& m) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (m + m.adjoint()));
    if (es.info() != Eigen::Success) throw InvalidDensityMatrix("eigendecomposition failed");
    const RVec s = detail::clip_spectrum(es.eigenvalues()).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}

// Uhlmann fidelity Tr sqrt(sqrt(a) b sqrt(a)).
inline double mixed_fidelity(const DensityMatrix& a, const DensityMatrix& b) {
    if (a.dim() != b.dim()) throw InvalidArgument("mixed_fidelity: dimension mismatch");
    const CMat sa = psd_sqrt(a.elements);
    const CMat m = sa * b.elements * sa;
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw InvalidDensityMatrix("eigendecomposition failed");
    return std::clamp(detail::clip_spectrum(es.eigenvalues()).cwiseSqrt().sum(), 0.0, 1.0);
}

// Hermite functions psi_k(x), k < n, for quadratures of vacuum variance 1.
inline RVec hermite_functions(double x, int n) {
    RVec psi(n);
    psi(0) = std::pow(2.0 * pi, -0.25) * std::exp(-0.25 * x * x);
    if (n > 1) psi(1) = x * psi(0);
    for (int k = 1; k + 1 < n; ++k)
        psi(k + 1) = (x * psi(k) - std::sqrt(static_cast<double>(k)) * psi(k - 1)) / std::sqrt(k + 1.0);
    return psi;
}

// Exact density of the m_phi outcome for a truncated-space rho.
inline double quadrature_density(const CMat& rho, double m, double phi) {
    const int d = static_cast<int>(rho.rows());
    const RVec h = hermite_functions(m, d);
    CVec v(d);
    for (int k = 0; k < d; ++k) v(k) = std::polar(h(k), phi * k);
    return std::max((v.adjoint() * rho * v)(0, 0).real(), 0.0);
}

}  // namespace magtomo
