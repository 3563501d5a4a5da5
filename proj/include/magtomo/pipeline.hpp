#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "distributions.hpp"
#include "fock.hpp"
#include "mle.hpp"
#include "sampler.hpp"
#include "states.hpp"
#include "wigner.hpp"

namespace magtomo {

struct ReconstructionMetrics {
    double fidelity_to_target = 0.0;
    std::optional<double> fidelity_to_classical;  // cat targets only
    cplx mean_m{};                                // Tr[rho_pred m]
    cplx mean_m_target{};
    std::optional<double> phase_error_deg;  // absent when <m> of the target vanishes
};

struct PipelineResult {
    HomodyneDataset dataset;
    ReconstructionReport report;
    ReconstructionMetrics metrics;
    WignerGrid wigner_pred;
    WignerGrid wigner_target;
};

// |arg(a) - arg(b)| in degrees, wrapped to [0, 180].
inline double phase_difference_deg(cplx a, cplx b) {
    double d = std::remainder(std::arg(a) - std::arg(b), 2.0 * pi);
    return std::abs(d) * 180.0 / pi;
}

inline ReconstructionMetrics reconstruction_metrics(const TargetStateSpec& target, const DensityMatrix& rho_pred) {
    const FockCutoff c(rho_pred.dim());
    const DensityMatrix rho_t = realize_density(target, c);
    ReconstructionMetrics m;
    m.fidelity_to_target = target.is_pure() ? fidelity(realize_pure(target, c), rho_pred) : mixed_fidelity(rho_t, rho_pred);
    if (target.variant == StateVariant::cat)
        m.fidelity_to_classical =
            mixed_fidelity(realize_density(TargetStateSpec::classical_mixture(target.alpha), c), rho_pred);
    const CMat a = annihilation_operator(c);
    m.mean_m = expectation(rho_pred.elements, a);
    m.mean_m_target = expectation(rho_t.elements, a);
    if (std::abs(m.mean_m_target) > 1e-9 && std::abs(m.mean_m) > 0.0)
        m.phase_error_deg = phase_difference_deg(m.mean_m, m.mean_m_target);
    return m;
}

// target -> {(a_i, phi_i)} -> rho_pred, with fidelities and Wigner grids.
inline PipelineResult evaluate_pipeline(const TargetStateSpec& target, const SignalModel& sig, const NoiseModel& noise,
                                        std::size_t n, std::uint64_t seed, const ReconstructionConfig& cfg,
                                        const GridSpec& grid = {}, PhiMode mode = PhiMode::uniform) {
    PipelineResult r;
    r.dataset = sample_dataset(target, sig, noise, n, seed, mode);
    r.report = reconstruct(r.dataset, sig, noise, cfg);
    r.metrics = reconstruction_metrics(target, r.report.rho_pred);
    r.wigner_pred = wigner(r.report.rho_pred, grid);
    r.wigner_target = wigner(realize_density(target, cfg.cutoff), grid);
    return r;
}

}  // namespace magtomo
