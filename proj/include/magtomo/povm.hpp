#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "distributions.hpp"
#include "error.hpp"
#include "fock.hpp"
#include "parallel.hpp"
#include "sampler.hpp"
#include "types.hpp"

namespace magtomo {

// spectral: functional calculus on the truncated m_phi (weights sit on its eigenvalues).
// projected: the full-space operator compressed to the cutoff, Pi P Pi, evaluated on a uniform
// m-grid with Hermite functions.
enum class PovmRepresentation { spectral, projected };

inline const char* representation_name(PovmRepresentation r) {
    return r == PovmRepresentation::spectral ? "spectral" : "projected";
}

struct PovmElement {
    double a = 0.0;
    double phi = 0.0;
    CMat matrix;
};

// P(a, phi) = W B diag(f(a)) B^T W^dagger with W = diag(e^{i phi n}); f_l is the noise kernel at node l.
struct PovmBasis {
    PovmRepresentation representation = PovmRepresentation::spectral;
    RMat vectors;  // dim x nodes
    RVec nodes;    // m values

    int dim() const { return static_cast<int>(vectors.rows()); }
    Eigen::Index size() const { return nodes.size(); }

    static PovmBasis spectral(FockCutoff c) {
        auto q = QuadratureBasis::compute(c);
        return {PovmRepresentation::spectral, std::move(q.vectors), std::move(q.eigenvalues)};
    }

    // Trapezoid grid on [-L, L], L = 2 sqrt(dim) + 8, with spacing fine enough for a Gaussian
    // kernel of standard deviation `kernel_width` (in m) times Hermite functions below the cutoff.
    static PovmBasis projected(FockCutoff c, double kernel_width) {
        if (!(kernel_width > 0.0)) throw InvalidArgument("projected POVM: kernel width must be > 0");
        const int d = c.dim();
        const double L = 2.0 * std::sqrt(static_cast<double>(d)) + 8.0;
        const double band = 2.0 * std::sqrt(2.0 * d + 1.0);  // top local wavenumber of psi_j psi_k
        const double h = std::min(0.1, 2.0 * pi / (band + 8.6 / kernel_width));
        const auto q = static_cast<Eigen::Index>(std::ceil(2.0 * L / h)) + 1;
        const double step = 2.0 * L / static_cast<double>(q - 1);
        PovmBasis b{PovmRepresentation::projected, RMat(d, q), RVec(q)};
        const double sw = std::sqrt(step);
        for (Eigen::Index i = 0; i < q; ++i) {
            b.nodes(i) = -L + step * static_cast<double>(i);
            b.vectors.col(i) = sw * hermite_functions(b.nodes(i), d);
        }
        return b;
    }
};

namespace detail {

inline void check_theta(const SignalModel& sig) {
    if (!(sig.theta > 0.0) || !(sig.theta < pi / 2))
        throw DegenerateTheta("POVM needs theta in (0, pi/2), got " + std::to_string(sig.theta));
}

// (1/c) p_eta((a - s m)/c) at every node m.
inline RVec povm_profile(double a, double phi, const SignalModel& sig, const NoiseModel& noise, const RVec& nodes) {
    const double s = std::sin(sig.theta), c = std::cos(sig.theta);
    const double var = c * c * noise.variance(phi);
    const double norm = 1.0 / std::sqrt(2.0 * pi * var);
    RVec f(nodes.size());
    for (Eigen::Index l = 0; l < nodes.size(); ++l) {
        const double d = a - s * nodes(l);
        f(l) = norm * std::exp(-0.5 * d * d / var);
    }
    return f;
}

// Narrowest noise kernel in m over all phases.
inline double kernel_width(const SignalModel& sig, const NoiseModel& noise) {
    const double sd = noise.adaptive ? noise.sigma_s : std::min(noise.sigma_s, noise.sigma_b);
    return std::cos(sig.theta) * sd / std::sin(sig.theta);
}

}  // namespace detail

inline PovmBasis povm_basis(PovmRepresentation r, const SignalModel& sig, const NoiseModel& noise, FockCutoff c) {
    detail::check_theta(sig);
    return r == PovmRepresentation::spectral ? PovmBasis::spectral(c)
                                             : PovmBasis::projected(c, detail::kernel_width(sig, noise));
}

inline PovmElement povm_element(double a, double phi, const SignalModel& sig, const NoiseModel& noise,
                                const PovmBasis& b) {
    detail::check_theta(sig);
    const RVec f = detail::povm_profile(a, phi, sig, noise, b.nodes);
    CMat u = b.vectors.cast<cplx>();
    for (int j = 0; j < b.dim(); ++j) u.row(j) *= std::polar(1.0, (phi - sig.s_phase) * j);
    CMat p = u * f.asDiagonal() * u.adjoint();
    p = hermitian_part(p);
    return {a, phi, std::move(p)};
}

// P(a, phi) = (1/cos theta) p_eta((a - sin theta m_phi)/cos theta).
inline PovmElement povm_element(double a, double phi, const SignalModel& sig, const NoiseModel& noise, FockCutoff c,
                                PovmRepresentation r = PovmRepresentation::spectral) {
    return povm_element(a, phi, sig, noise, povm_basis(r, sig, noise, c));
}

// All POVM elements of a dataset in factored form, P_i = W_i B diag(f_i) B^T W_i^dagger, so sums
// over samples reduce to the Fourier moments G_{l,d} = sum_i g_i f_il e^{i phi_i d}.
class PovmKernel {
public:
    static constexpr std::size_t block = 1024;

    PovmKernel(const std::vector<QuadratureSample>& samples, const SignalModel& sig, const NoiseModel& noise,
               PovmBasis basis)
        : basis_(std::move(basis)) {
        detail::check_theta(sig);
        if (samples.empty()) throw InvalidArgument("PovmKernel: empty dataset");
        const int d = basis_.dim();
        const auto n = static_cast<Eigen::Index>(samples.size());
        profile_.resize(n, basis_.size());
        fourier_.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = samples[static_cast<std::size_t>(i)];
            profile_.row(i) = detail::povm_profile(s.a, s.phi, sig, noise, basis_.nodes).transpose();
            const double ph = s.phi - sig.s_phase;
            for (int k = 0; k < d; ++k) fourier_(i, k) = std::polar(1.0, ph * k);
        }
    }

    PovmKernel(const std::vector<QuadratureSample>& samples, const SignalModel& sig, const NoiseModel& noise,
               FockCutoff cutoff, PovmRepresentation r = PovmRepresentation::spectral)
        : PovmKernel(samples, sig, noise, povm_basis(r, sig, noise, cutoff)) {}

    int dim() const { return basis_.dim(); }
    std::size_t size() const { return static_cast<std::size_t>(profile_.rows()); }
    const PovmBasis& basis() const { return basis_; }
    const RMat& profile() const { return profile_; }

    // p_i = Tr[rho P_i] for every sample.
    RVec probabilities(const CMat& rho, unsigned workers = thread_count()) const {
        const int d = dim();
        const RMat& u = basis_.vectors;
        // c_{l,k} = sum_j rho_{j+k,j} B_{j+k,l} B_{j,l}
        CMat coef = CMat::Zero(basis_.size(), d);
        for (int k = 0; k < d; ++k)
            for (int j = 0; j + k < d; ++j) coef.col(k) += rho(j + k, j) * u.row(j + k).cwiseProduct(u.row(j)).transpose();
        const auto n = static_cast<Eigen::Index>(size());
        RVec p(n);
        const std::size_t blocks = (size() + block - 1) / block;
        parallel_tasks(
            blocks,
            [&](std::size_t b) {
                const Eigen::Index lo = static_cast<Eigen::Index>(b * block);
                const Eigen::Index len = std::min<Eigen::Index>(static_cast<Eigen::Index>(block), n - lo);
                // w_il = c_l0 + 2 Re sum_{k>0} e^{-i phi_i k} c_lk
                const CMat phased = fourier_.middleRows(lo, len).conjugate().rightCols(d - 1) *
                                    coef.rightCols(d - 1).transpose();
                const RMat w = (2.0 * phased.real()).rowwise() + coef.col(0).real().transpose();
                p.segment(lo, len) = profile_.middleRows(lo, len).cwiseProduct(w).rowwise().sum();
            },
            workers);
        return p;
    }

    // sum_i g_i P_i for per-sample weights g_i.
    CMat weighted_sum(const RVec& g, unsigned workers = thread_count()) const {
        const int d = dim();
        const auto n = static_cast<Eigen::Index>(size());
        const std::size_t blocks = (size() + block - 1) / block;
        std::vector<CMat> parts(blocks);
        parallel_tasks(
            blocks,
            [&](std::size_t b) {
                const Eigen::Index lo = static_cast<Eigen::Index>(b * block);
                const Eigen::Index len = std::min<Eigen::Index>(static_cast<Eigen::Index>(block), n - lo);
                const RMat weighted = profile_.middleRows(lo, len).array().colwise() * g.segment(lo, len).array();
                parts[b] = weighted.transpose().cast<cplx>() * fourier_.middleRows(lo, len);
            },
            workers);
        const CMat moments = pairwise_sum(std::move(parts));  // G_{l,k}
        const RMat& u = basis_.vectors;
        CMat out(d, d);
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                const int off = j - k;
                cplx acc = 0.0;
                for (Eigen::Index l = 0; l < basis_.size(); ++l) {
                    const cplx gm = off >= 0 ? moments(l, off) : std::conj(moments(l, -off));
                    acc += u(j, l) * u(k, l) * gm;
                }
                out(j, k) = acc;
            }
        return out;
    }

private:
    PovmBasis basis_;
    RMat profile_;  // f_il
    CMat fourier_;  // e^{i phi_i k}
};

}  // namespace magtomo
