#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "fock.hpp"
#include "parallel.hpp"
#include "povm.hpp"
#include "types.hpp"

namespace magtomo {

enum class StopMode {
    tolerance,   // stop when the Frobenius step falls below tol; NotConverged at max_iter
    iterations,  // run exactly max_iter steps
};

struct ReconstructionConfig {
    FockCutoff cutoff{40};
    double tol = 1e-8;
    int max_iter = 5000;
    int likelihood_log_every = 1;
    StopMode stop = StopMode::tolerance;
    PovmRepresentation povm = PovmRepresentation::spectral;

    void validate() const {
        if (!(tol > 0.0)) throw ConfigError("reconstruction: tol must be > 0");
        if (max_iter < 1) throw ConfigError("reconstruction: max_iter must be >= 1");
        if (likelihood_log_every < 1) throw ConfigError("reconstruction: likelihood_log_every must be >= 1");
    }
};

struct ReconstructionReport {
    DensityMatrix rho_pred;
    int iterations = 0;
    double final_step_norm = 0.0;
    std::vector<std::pair<int, double>> loglik_trace;  // (iteration, mean log-likelihood)
    bool converged = false;
    std::string stop_reason;
    int diluted_steps = 0;           // steps that fell back to the congruence form
    int trace_renormalizations = 0;  // steps with |Tr - 1| > 1e-12 before renormalization
    double max_trace_drift = 0.0;
    std::vector<Warning> warnings;
};

class NotConverged : public Error {
public:
    explicit NotConverged(ReconstructionReport r)
        : Error(ErrorKind::numerical, "NotConverged", message(r)), report_(std::move(r)) {}
    const ReconstructionReport& report() const noexcept { return report_; }

private:
    ReconstructionReport report_;
    static std::string message(const ReconstructionReport& r) {
        std::ostringstream os;
        os << "not converged after " << r.iterations << " iterations (last step " << r.final_step_norm << ")";
        return os.str();
    }
};

inline constexpr double probability_floor = 1e-300;
inline constexpr double psd_tolerance = 1e-11;
inline constexpr double loglik_slack = 1e-12;

namespace detail {

inline void check_probabilities(const RVec& p) {
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (!(p(i) >= probability_floor))
            throw ZeroProbabilitySample("sample " + std::to_string(i) + ": Tr[rho P] = " + std::to_string(p(i)) +
                                        " (cutoff too small or corrupt sample)");
}

inline double mean_log(const RVec& p) {
    const std::size_t n = static_cast<std::size_t>(p.size());
    const std::size_t blocks = (n + PovmKernel::block - 1) / PovmKernel::block;
    std::vector<double> parts(blocks, 0.0);
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = b * PovmKernel::block; i < std::min(n, (b + 1) * PovmKernel::block); ++i)
            parts[b] += std::log(p(static_cast<Eigen::Index>(i)));
    return pairwise_sum(std::move(parts)) / static_cast<double>(n);
}

}  // namespace detail

// Z(rho) = (1/N) sum_i P_i / Tr[rho P_i].
inline CMat z_operator(const DensityMatrix& rho, const PovmKernel& k) {
    const RVec p = k.probabilities(rho.elements);
    detail::check_probabilities(p);
    const CMat z = k.weighted_sum(p.cwiseInverse()) / static_cast<double>(k.size());
    return 0.5 * (z + z.adjoint());
}

// F(rho) = (Z rho + rho Z) / 2.
inline CMat fixed_point_map(const CMat& rho, const CMat& z) {
    const CMat f = 0.5 * (z * rho + rho * z);
    return 0.5 * (f + f.adjoint());
}

enum class StepKind {
    fixed_point,  // rho' = F(rho)
    diluted,      // rho' = (I + eps (Z - I)) rho (I + eps (Z - I)) / Tr
    stalled,      // no candidate kept the likelihood; rho' = rho
};

struct StepResult {
    DensityMatrix rho;
    RVec probabilities;  // Tr[rho_new P_i]
    double loglik = 0.0;
    StepKind kind = StepKind::fixed_point;
    double step_size = 1.0;  // 1 for the fixed-point step, eps for a diluted one
    double trace_drift = 0.0;
    bool stalled() const { return kind == StepKind::stalled; }
};

// One step from rho with known probabilities p = Tr[rho P_i] and Z = Z(rho). The fixed-point
// image F(rho) is taken whenever it is PSD and does not lower the mean log-likelihood. Near the
// boundary of the PSD cone F(rho) can turn small eigenvalues negative; the step then falls back to
// the congruence (I + eps D) rho (I + eps D), D = Z - I, whose first-order term at eps = 1/2 is
// F(rho) - rho, halving eps until the likelihood does not drop.
inline StepResult mle_step(const DensityMatrix& rho, const RVec& p, const CMat& z, const PovmKernel& k) {
    const CMat& r = rho.elements;
    CMat f = fixed_point_map(r, z);
    StepResult out;
    out.trace_drift = std::abs(f.trace().real() - 1.0);
    if (out.trace_drift > 1e-12) f /= f.trace().real();
    const RVec q = k.probabilities(f);
    const double base = detail::mean_log(p);
    if (min_eigenvalue(f) >= -psd_tolerance && q.minCoeff() >= probability_floor) {
        const double ll = detail::mean_log(q);
        if (ll >= base - loglik_slack) {
            out.rho = DensityMatrix{f};
            out.probabilities = q;
            out.loglik = ll;
            return out;
        }
    }
    const int d = static_cast<int>(r.rows());
    const CMat dz = z - CMat::Identity(d, d);
    CMat second = dz * r * dz;
    second = hermitian_part(second);
    const RVec q1 = 2.0 * (q - p);  // Tr[(D rho + rho D) P_i]
    const RVec q2 = k.probabilities(second);
    const double tr2 = second.trace().real();
    double eps = 0.5;
    for (int halvings = 0; halvings < 40; ++halvings, eps *= 0.5) {
        const double norm = 1.0 + eps * eps * tr2;
        const RVec pc = (p + eps * q1 + eps * eps * q2) / norm;
        if (!(pc.minCoeff() >= probability_floor)) continue;
        const double ll = detail::mean_log(pc);
        if (ll < base - loglik_slack) continue;
        const CMat a = CMat::Identity(d, d) + eps * dz;
        CMat cand = a * r * a.adjoint();
        cand = hermitian_part(cand) / norm;
        out.rho = DensityMatrix{cand};
        out.probabilities = pc;
        out.loglik = ll;
        out.kind = StepKind::diluted;
        out.step_size = eps;
        return out;
    }
    out.rho = rho;
    out.probabilities = p;
    out.loglik = base;
    out.kind = StepKind::stalled;
    out.step_size = 0.0;
    return out;
}

// Convenience form computing p and Z from rho.
inline StepResult mle_step(const DensityMatrix& rho, const PovmKernel& k) {
    const RVec p = k.probabilities(rho.elements);
    detail::check_probabilities(p);
    const CMat z = k.weighted_sum(p.cwiseInverse()) / static_cast<double>(k.size());
    return mle_step(rho, p, 0.5 * (z + z.adjoint()), k);
}

// rho_0 = sum_i P_i / Tr[sum_i P_i].
inline DensityMatrix initial_guess(const PovmKernel& k) {
    CMat s = k.weighted_sum(RVec::Ones(static_cast<Eigen::Index>(k.size())));
    s = hermitian_part(s);
    return DensityMatrix{s / s.trace().real()};
}

namespace detail {

inline void check_cutoff(ReconstructionReport& rep) {
    const CMat& r = rep.rho_pred.elements;
    const int d = static_cast<int>(r.rows());
    double top = 0.0;
    for (int n = std::max(0, d - 3); n < d; ++n) top += r(n, n).real();
    if (top > 1e-3) {
        std::ostringstream os;
        os << "population " << top << " in the top three Fock levels of rho_pred (dim " << d << ")";
        rep.warnings.push_back({"CutoffWarning", os.str()});
        warn("CutoffWarning", os.str());
    }
}

}  // namespace detail

inline ReconstructionReport reconstruct(const PovmKernel& k, const ReconstructionConfig& cfg) {
    cfg.validate();
    if (k.dim() != cfg.cutoff.dim()) throw InvalidArgument("reconstruct: kernel dimension differs from cutoff");
    ReconstructionReport rep;
    DensityMatrix rho = initial_guess(k);
    RVec p = k.probabilities(rho.elements);
    detail::check_probabilities(p);
    rep.loglik_trace.emplace_back(0, detail::mean_log(p));
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const CMat z = k.weighted_sum(p.cwiseInverse()) / static_cast<double>(k.size());
        StepResult s = mle_step(rho, p, 0.5 * (z + z.adjoint()), k);
        if (s.trace_drift > 1e-12) {
            ++rep.trace_renormalizations;
            rep.max_trace_drift = std::max(rep.max_trace_drift, s.trace_drift);
        }
        if (s.stalled()) {
            rep.iterations = it - 1;
            rep.final_step_norm = 0.0;
            rep.stop_reason = "stalled";
            rep.converged = true;
            break;
        }
        if (s.kind == StepKind::diluted) ++rep.diluted_steps;
        rep.final_step_norm = (s.rho.elements - rho.elements).norm();
        rho = std::move(s.rho);
        p = std::move(s.probabilities);
        rep.iterations = it;
        if (it % cfg.likelihood_log_every == 0 || it == cfg.max_iter) rep.loglik_trace.emplace_back(it, s.loglik);
        if (cfg.stop == StopMode::tolerance && rep.final_step_norm < cfg.tol) {
            rep.converged = true;
            rep.stop_reason = "tolerance";
            if (rep.loglik_trace.back().first != it) rep.loglik_trace.emplace_back(it, s.loglik);
            break;
        }
    }
    if (rep.stop_reason.empty()) rep.stop_reason = cfg.stop == StopMode::iterations ? "iteration_budget" : "max_iter";
    rep.rho_pred = DensityMatrix::validated(rho.elements, 1e-9);
    detail::check_cutoff(rep);
    if (cfg.stop == StopMode::tolerance && !rep.converged) throw NotConverged(rep);
    return rep;
}

inline ReconstructionReport reconstruct(const HomodyneDataset& ds, const SignalModel& sig, const NoiseModel& noise,
                                        const ReconstructionConfig& cfg) {
    if (ds.samples.empty()) throw InvalidArgument("reconstruct: empty dataset");
    return reconstruct(PovmKernel(ds.samples, sig, noise, cfg.cutoff, cfg.povm), cfg);
}

}  // namespace magtomo
