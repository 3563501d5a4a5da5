#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "magtomo/mle.hpp"
#include "magtomo/sampler.hpp"

using namespace magtomo;

namespace {

CMat random_density(int d, std::mt19937& rng, int rank = 0) {
    std::normal_distribution<double> g;
    const int r = rank > 0 ? rank : d;
    CMat a(d, r);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < r; ++j) a(i, j) = {g(rng), g(rng)};
    CMat m = a * a.adjoint();
    m = hermitian_part(m);
    return m / m.trace().real();
}

std::vector<QuadratureSample> random_samples(std::size_t n, std::mt19937& rng) {
    std::uniform_real_distribution<double> ph(0.0, pi), av(-3.0, 3.0);
    std::vector<QuadratureSample> out(n);
    for (auto& s : out) s = {av(rng), ph(rng)};
    return out;
}

CMat direct_z(const CMat& rho, const std::vector<QuadratureSample>& s, const SignalModel& sig, const NoiseModel& n,
              FockCutoff c) {
    CMat z = CMat::Zero(c.dim(), c.dim());
    for (const auto& q : s) {
        const auto p = povm_element(q.a, q.phi, sig, n, c);
        z += p.matrix / (rho * p.matrix).trace().real();
    }
    return z / static_cast<double>(s.size());
}

}  // namespace

TEST(ZOperator, MatchesDirectSum) {
    std::mt19937 rng(1);
    FockCutoff c(10);
    const SignalModel sig{0.3 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(0.8);
    const auto s = random_samples(300, rng);
    const DensityMatrix rho{random_density(10, rng)};
    const CMat z = z_operator(rho, PovmKernel(s, sig, noise, c));
    EXPECT_LT((z - direct_z(rho.elements, s, sig, noise, c)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((z - z.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ZOperator, SingleSample) {
    std::mt19937 rng(2);
    FockCutoff c(8);
    const SignalModel sig{0.6, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    const std::vector<QuadratureSample> s{{0.4, 1.2}};
    const DensityMatrix rho{random_density(8, rng)};
    const auto p = povm_element(0.4, 1.2, sig, noise, c);
    const CMat z = z_operator(rho, PovmKernel(s, sig, noise, c));
    EXPECT_LT((z - p.matrix / (rho.elements * p.matrix).trace().real()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR((z * rho.elements).trace().real(), 1.0, 1e-12);
}

TEST(ZOperator, TraceIdentity) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 4 + trial % 9;
        FockCutoff c(d);
        const auto s = random_samples(50 + 20 * trial, rng);
        const DensityMatrix rho{random_density(d, rng, 1 + trial % d)};
        const CMat z = z_operator(rho, PovmKernel(s, SignalModel{0.2 + 0.05 * trial, 0.0}, NoiseModel::adaptive_squeezed(0.5 + 0.1 * trial), c));
        EXPECT_NEAR((z * rho.elements).trace().real(), 1.0, 1e-12) << trial;
    }
}

// Z_nn for n >= 4 is dominated by a handful of samples at large |a| (ratios psi_n^2 / psi_0^2),
// so only the populated block is tested.
TEST(ZOperator, NearIdentityForTrueVacuum) {
    const SignalModel sig{0.45 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    FockCutoff c(40);
    for (std::uint64_t seed : {17u, 18u, 19u}) {
        const auto ds = sample_dataset(TargetStateSpec::vacuum(), sig, noise, 10000, seed);
        const CMat z = z_operator(realize_density(TargetStateSpec::vacuum(), c),
                                  PovmKernel(ds.samples, sig, noise, c, PovmRepresentation::projected));
        EXPECT_LT((z - CMat::Identity(40, 40)).topLeftCorner(3, 3).cwiseAbs().maxCoeff(), 0.1) << seed;
        EXPECT_NEAR(z(0, 0).real(), 1.0, 1e-12);
    }
}

TEST(ZOperator, ZeroProbabilitySample) {
    FockCutoff c(6);
    const std::vector<QuadratureSample> s{{0.0, 0.3}, {400.0, 0.3}};
    const PovmKernel k(s, SignalModel{0.5, 0.0}, NoiseModel::adaptive_squeezed(0.3), c);
    EXPECT_THROW(z_operator(realize_density(TargetStateSpec::vacuum(), c), k), ZeroProbabilitySample);
}

TEST(MleStep, FixedPointIsExact) {
    std::mt19937 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 3 + trial;
        FockCutoff c(d);
        const PovmKernel k(random_samples(100, rng), SignalModel{0.5, 0.0}, NoiseModel::adaptive_squeezed(0.7), c);
        const DensityMatrix rho{random_density(d, rng)};
        EXPECT_TRUE((fixed_point_map(rho.elements, CMat::Identity(d, d)).array() == rho.elements.array()).all());
        const auto r = mle_step(rho, k.probabilities(rho.elements), CMat::Identity(d, d), k);
        EXPECT_EQ(r.kind, StepKind::fixed_point);
        EXPECT_TRUE((r.rho.elements.array() == rho.elements.array()).all());
    }
}

TEST(MleStep, TracePreservedAndValid) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 3 + trial % 10;
        FockCutoff c(d);
        const PovmKernel k(random_samples(20 + 10 * trial, rng), SignalModel{0.2 + 0.04 * trial, 0.0},
                           NoiseModel::adaptive_squeezed(0.3 + 0.05 * trial), c);
        const DensityMatrix rho{random_density(d, rng, 1 + trial % d)};
        const auto r = mle_step(rho, k);
        EXPECT_LT(r.trace_drift, 1e-10);
        EXPECT_TRUE(is_valid_density(r.rho.elements, 1e-10)) << trial;
        EXPECT_GE(r.loglik, detail::mean_log(k.probabilities(rho.elements)) - 1e-9);
    }
}

// Far from the fixed point the map can raise purity; reconstruction itself goes from the mixed
// initial guess to a nearly pure state.
TEST(MleStep, PurityCanRiseAwayFromFixedPoint) {
    std::mt19937 rng(6);
    int rises = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 3 + trial % 8;
        FockCutoff c(d);
        const PovmKernel k(random_samples(40 + trial, rng), SignalModel{0.3 + 0.01 * trial, 0.0},
                           NoiseModel::adaptive_squeezed(0.5 + 0.01 * trial), c);
        const DensityMatrix rho{random_density(d, rng, 1 + trial % d)};
        rises += purity(fixed_point_map(rho.elements, z_operator(rho, k))) > purity(rho.elements) + 0.05;
    }
    EXPECT_GT(rises, 0);
}

TEST(MleStep, FallsBackWhenFixedPointLeavesCone) {
    const SignalModel sig{0.45 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    FockCutoff c(20);
    const auto ds = sample_dataset(TargetStateSpec::vacuum(), sig, noise, 3000, 5);
    const PovmKernel k(ds.samples, sig, noise, c);
    DensityMatrix rho = initial_guess(k);
    int diluted = 0;
    for (int it = 0; it < 20; ++it) {
        const double before = detail::mean_log(k.probabilities(rho.elements));
        const auto r = mle_step(rho, k);
        diluted += r.kind == StepKind::diluted;
        EXPECT_TRUE(is_valid_density(r.rho.elements, 1e-10));
        EXPECT_GE(r.loglik, before - 1e-9);
        EXPECT_NEAR(detail::mean_log(k.probabilities(r.rho.elements)), r.loglik, 1e-10);
        rho = r.rho;
    }
    EXPECT_GT(diluted, 0);
}

TEST(Reconstruct, IteratesStayValidAndLikelihoodMonotone) {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 4 + trial;
        ReconstructionConfig cfg;
        cfg.cutoff = FockCutoff(d);
        cfg.max_iter = 40;
        cfg.stop = StopMode::iterations;
        const auto rep = reconstruct(
            PovmKernel(random_samples(200 + 30 * trial, rng), SignalModel{0.3 + 0.05 * trial, 0.0}, NoiseModel::adaptive_squeezed(0.6), cfg.cutoff),
            cfg);
        EXPECT_EQ(rep.iterations, 40);
        EXPECT_EQ(rep.stop_reason, "iteration_budget");
        EXPECT_FALSE(rep.converged);
        for (std::size_t i = 1; i < rep.loglik_trace.size(); ++i)
            EXPECT_GE(rep.loglik_trace[i].second, rep.loglik_trace[i - 1].second - 1e-9);
        EXPECT_TRUE(is_valid_density(rep.rho_pred.elements, 1e-9));
    }
}

TEST(Reconstruct, VacuumSanity) {
    const SignalModel sig{0.49 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    const auto ds = sample_dataset(TargetStateSpec::vacuum(), sig, noise, 10000, 21);
    ReconstructionConfig cfg;
    cfg.max_iter = 60;
    cfg.stop = StopMode::iterations;
    const auto rep = reconstruct(ds, sig, noise, cfg);
    EXPECT_GT(fidelity(realize_pure(TargetStateSpec::vacuum(), cfg.cutoff), rep.rho_pred), 0.99);
}

TEST(Reconstruct, NotConvergedCarriesReport) {
    std::mt19937 rng(10);
    ReconstructionConfig cfg;
    cfg.cutoff = FockCutoff(8);
    cfg.max_iter = 2;
    const PovmKernel k(random_samples(100, rng), SignalModel{0.5, 0.0}, NoiseModel::adaptive_squeezed(0.5), cfg.cutoff);
    try {
        reconstruct(k, cfg);
        FAIL() << "expected NotConverged";
    } catch (const NotConverged& e) {
        EXPECT_EQ(e.report().iterations, 2);
        EXPECT_FALSE(e.report().converged);
        EXPECT_EQ(e.kind(), ErrorKind::numerical);
        EXPECT_TRUE(is_valid_density(e.report().rho_pred.elements, 1e-9));
    }
}

TEST(Reconstruct, ConvergesOnToleranceForEasyData) {
    const SignalModel sig{0.3 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    const auto ds = sample_dataset(TargetStateSpec::squeezed_coherent({0.5, 0.2}, 0.0, 0.0), sig, noise, 2000, 3);
    ReconstructionConfig cfg;
    cfg.cutoff = FockCutoff(10);
    cfg.tol = 1e-6;
    const auto rep = reconstruct(ds, sig, noise, cfg);
    EXPECT_TRUE(rep.converged);
    EXPECT_LT(rep.final_step_norm, 1e-6);
    EXPECT_EQ(rep.stop_reason, "tolerance");
}

TEST(Reconstruct, DeterministicAcrossThreadCounts) {
    const SignalModel sig{0.25 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    const auto ds = sample_dataset(benchmark_cat(), sig, noise, 3000, 8);
    ReconstructionConfig cfg;
    cfg.cutoff = FockCutoff(20);
    cfg.max_iter = 15;
    cfg.stop = StopMode::iterations;
    const PovmKernel k(ds.samples, sig, noise, cfg.cutoff);
    ReconstructionReport a, b;
    {
        setenv("MAGTOMO_THREADS", "1", 1);
        a = reconstruct(k, cfg);
        setenv("MAGTOMO_THREADS", "3", 1);
        b = reconstruct(k, cfg);
        unsetenv("MAGTOMO_THREADS");
    }
    EXPECT_TRUE((a.rho_pred.elements.array() == b.rho_pred.elements.array()).all());
    EXPECT_EQ(a.loglik_trace, b.loglik_trace);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Reconstruct, CutoffWarning) {
    const SignalModel sig{0.3 * pi, 0.0};
    const auto noise = NoiseModel::adaptive_squeezed(1.0);
    std::vector<Warning> seen;
    ScopedWarningHandler h([&](const Warning& w) { seen.push_back(w); });
    const auto ds = sample_dataset(TargetStateSpec::squeezed_coherent({2.5, 0.0}, 0.0, 0.0), sig, noise, 2000, 4);
    ReconstructionConfig cfg;
    cfg.cutoff = FockCutoff(6);
    cfg.max_iter = 30;
    cfg.stop = StopMode::iterations;
    const auto rep = reconstruct(ds, sig, noise, cfg);
    ASSERT_FALSE(rep.warnings.empty());
    EXPECT_EQ(rep.warnings.front().code, "CutoffWarning");
    EXPECT_FALSE(seen.empty());
}

TEST(Reconstruct, ConfigValidation) {
    ReconstructionConfig cfg;
    cfg.tol = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.max_iter = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
