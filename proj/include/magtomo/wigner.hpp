#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "error.hpp"
#include "fock.hpp"
#include "parallel.hpp"
#include "types.hpp"

namespace magtomo {

struct GridSpec {
    double x_min = -8.0, x_max = 8.0;
    int nx = 81;
    double p_min = -8.0, p_max = 8.0;
    int np = 81;
};

inline constexpr const char* wigner_convention =
    "x=<m+m^dagger>, p=<-i(m-m^dagger)>, vacuum variance 1, integral over dx dp = 1, W_vac(0,0)=1/(2pi)";

struct WignerGrid {
    RVec x_axis;
    RVec p_axis;
    RMat values;  // values(ix, ip)
    std::string convention = wigner_convention;

    double cell_area() const {
        const double dx = x_axis.size() > 1 ? x_axis(1) - x_axis(0) : 1.0;
        const double dp = p_axis.size() > 1 ? p_axis(1) - p_axis(0) : 1.0;
        return dx * dp;
    }
    double integral() const { return values.sum() * cell_area(); }
};

inline RVec linspace(double lo, double hi, int n) {
    if (n < 1) throw InvalidArgument("grid needs at least one point");
    if (n == 1) return RVec::Constant(1, lo);
    return RVec::LinSpaced(n, lo, hi);
}

namespace detail {

// Columns of D(gamma) restricted to the first d levels; exact, built from D|0> by
// D|n> = (m^dagger - gamma^*) D|n-1> / sqrt(n).
inline CMat displacement_columns(cplx gamma, int d) {
    CMat out(d, d);
    out(0, 0) = std::exp(-0.5 * std::norm(gamma));
    for (int k = 1; k < d; ++k) out(k, 0) = out(k - 1, 0) * gamma / std::sqrt(static_cast<double>(k));
    const cplx gc = std::conj(gamma);
    for (int n = 1; n < d; ++n) {
        const double s = 1.0 / std::sqrt(static_cast<double>(n));
        out(0, n) = -gc * out(0, n - 1) * s;
        for (int k = 1; k < d; ++k)
            out(k, n) = (std::sqrt(static_cast<double>(k)) * out(k - 1, n - 1) - gc * out(k, n - 1)) * s;
    }
    return out;
}

}  // namespace detail

// W(x,p) = (1/2pi) Tr[rho D(2 beta) Parity], beta = (x + i p)/2.
inline double wigner_point(const CMat& rho, double x, double p) {
    const int d = static_cast<int>(rho.rows());
    const CMat dm = detail::displacement_columns(cplx(x, p), d);
    cplx acc = 0.0;
    for (int m = 0; m < d; ++m) {
        cplx col = 0.0;
        for (int n = 0; n < d; ++n) col += rho(m, n) * dm(n, m);
        acc += (m % 2 ? -1.0 : 1.0) * col;
    }
    return acc.real() / (2.0 * pi);
}

inline WignerGrid wigner(const DensityMatrix& rho, const GridSpec& g) {
    WignerGrid w;
    w.x_axis = linspace(g.x_min, g.x_max, g.nx);
    w.p_axis = linspace(g.p_min, g.p_max, g.np);
    w.values.resize(g.nx, g.np);
    parallel_tasks(static_cast<std::size_t>(g.nx), [&](std::size_t ix) {
        for (int ip = 0; ip < g.np; ++ip)
            w.values(static_cast<Eigen::Index>(ix), ip) = wigner_point(rho.elements, w.x_axis(ix), w.p_axis(ip));
    });
    double edge = 0.0;
    for (int i = 0; i < g.nx; ++i)
        edge = std::max({edge, std::abs(w.values(i, 0)), std::abs(w.values(i, g.np - 1))});
    for (int j = 0; j < g.np; ++j)
        edge = std::max({edge, std::abs(w.values(0, j)), std::abs(w.values(g.nx - 1, j))});
    const double peak = w.values.cwiseAbs().maxCoeff();
    if (edge > 1e-3 * peak) warn("GridWarning", "Wigner grid boundary carries more than 1e-3 of the peak value");
    return w;
}

inline void write_wigner_csv(const WignerGrid& w, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "x,p,w\n";
    char buf[96];
    for (Eigen::Index i = 0; i < w.x_axis.size(); ++i)
        for (Eigen::Index j = 0; j < w.p_axis.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", w.x_axis(i), w.p_axis(j), w.values(i, j));
            out << buf;
        }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace magtomo
