#pragma once

// Brute-force reference implementations for tests and acceptance runs.
// Nothing here calls into solver1d, lattice or analysis.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <lapacke.h>

#include "dwelldos/error.hpp"
#include "dwelldos/model.hpp"
#include "dwelldos/units.hpp"

namespace dwelldos::oracles {

/// Composite Simpson rule for the integral of |psi|^2 over [a, b].
template <class F>
double quadrature_integral(F&& psi, double a, double b, std::size_t panels) {
    if (panels < 2 || panels % 2 != 0) throw Error(ErrorKind::validation, "Simpson rule needs an even panel count >= 2");
    const double h = (b - a) / static_cast<double>(panels);
    auto f = [&](std::size_t i) { return std::norm(std::complex<double>(psi(a + h * static_cast<double>(i)))); };
    double odd = 0.0, even = 0.0;
    for (std::size_t i = 1; i < panels; i += 2) odd += f(i);
    for (std::size_t i = 2; i < panels; i += 2) even += f(i);
    return h / 3.0 * (f(0) + f(panels) + 4.0 * odd + 2.0 * even);
}

/// T of a rectangular barrier of height v and width d (E = k^2 units).
inline double rectangular_barrier_transmission(double energy, double height, double width) {
    const double k = std::sqrt(energy);
    if (energy < height) {
        const double kappa = std::sqrt(height - energy);
        const double f = (k * k + kappa * kappa) / (2.0 * k * kappa) * std::sinh(kappa * width);
        return 1.0 / (1.0 + f * f);
    }
    if (energy == height) return 1.0 / (1.0 + energy * width * width / 4.0);
    const double q = std::sqrt(energy - height);
    const double f = (k * k - q * q) / (2.0 * k * q) * std::sin(q * width);
    return 1.0 / (1.0 + f * f);
}

/// Golden-section search for a maximum of a unimodal f on [a, b].
template <class F>
double golden_section_max(F&& f, double a, double b, double tol) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// Finite-difference box
// ---------------------------------------------------------------------------

struct BoxSpec {
    double pad_left = 150.0;
    double pad_right = 150.0;
    double grid_step = 0.05;
    double broadening = 0.05;

    /// Decay length 1/Im sqrt(E + i eta - V) of a broadened wave in the
    /// padding; pads must hold `pad_factor` of them at e_min, so that wall
    /// echoes return damped by at least e^{-2 pad_factor}.
    void validate(const LayerStack& stack, double e_min, double e_max, double pad_factor = 3.0) const {
        if (!(grid_step > 0.0) || !(broadening > 0.0) || !(pad_left >= 0.0) || !(pad_right >= 0.0))
            throw Error(ErrorKind::validation, "box needs positive grid step and broadening, non-negative pads");
        auto decay = [&](double v) {
            return 1.0 / std::sqrt(std::complex<double>(e_min - v, broadening)).imag();
        };
        if (pad_left < pad_factor * decay(stack.v_left()) || pad_right < pad_factor * decay(stack.v_right()))
            throw Error(ErrorKind::validation, "box padding shorter than the required number of decay lengths");
        double v_min = std::min(stack.v_left(), stack.v_right());
        for (const auto& l : stack.layers()) v_min = std::min(v_min, l.potential);
        if (e_max > v_min) {
            const double wavelength = 2.0 * pi / std::sqrt(e_max - v_min);
            if (grid_step > wavelength / 40.0) throw Error(ErrorKind::validation, "box grid step exceeds 1/40 of the shortest wavelength");
        }
    }
};

/// Nodes of the box [-pad_left, L + pad_right] (walls excluded), the cell-averaged
/// potential at each node, and the trapezoid weight of each node inside [0, L].
struct BoxGrid {
    std::vector<double> x;
    std::vector<double> potential;
    std::vector<double> omega_weight;
    double h;
};

inline BoxGrid make_box_grid(const LayerStack& stack, const BoxSpec& box) {
    const double L = stack.length();
    const double h = box.grid_step;
    const auto n_left = static_cast<long>(std::ceil(box.pad_left / h - 1e-9));
    const auto n_right = static_cast<long>(std::ceil(box.pad_right / h - 1e-9));
    const auto n_in = static_cast<long>(std::ceil(L / h - 1e-9));
    const double hin = L / static_cast<double>(n_in);
    BoxGrid g;
    g.h = h;
    // uniform spacing h in the pads, L/n_in inside so that 0 and L are nodes
    for (long i = -n_left + 1; i < 0; ++i) g.x.push_back(h * static_cast<double>(i));
    for (long i = 0; i <= n_in; ++i) g.x.push_back(i == n_in ? L : hin * static_cast<double>(i));
    for (long i = 1; i < n_right; ++i) g.x.push_back(L + h * static_cast<double>(i));

    auto cell_average = [&](double a, double b) {
        // exact average of the piecewise-constant potential over [a, b]
        double total = 0.0;
        double left = std::min(b, 0.0);
        if (left > a) total += (left - a) * stack.v_left();
        double x0 = 0.0;
        for (const auto& l : stack.layers()) {
            double lo = std::max(a, x0), hi = std::min(b, x0 + l.thickness);
            if (hi > lo) total += (hi - lo) * l.potential;
            x0 += l.thickness;
        }
        double right = std::max(a, L);
        if (b > right) total += (b - right) * stack.v_right();
        return total / (b - a);
    };
    const std::size_t n = g.x.size();
    g.potential.resize(n);
    g.omega_weight.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double lo = i == 0 ? g.x[0] - h : g.x[i - 1];
        double hi = i + 1 == n ? g.x[i] + h : g.x[i + 1];
        g.potential[i] = cell_average(0.5 * (lo + g.x[i]), 0.5 * (g.x[i] + hi));
        if (g.x[i] >= 0.0 && g.x[i] <= L) {
            double w = 0.0;
            if (g.x[i] > 0.0) w += 0.5 * (g.x[i] - g.x[i - 1]);
            if (g.x[i] < L) w += 0.5 * (g.x[i + 1] - g.x[i]);
            g.omega_weight[i] = w;
        }
    }
    return g;
}

struct BoxSpectrum {
    std::vector<double> energies;
    std::vector<double> omega_weight;   // integral over [0, L] of |chi_k|^2, chi_k unit-normalized on the box
    std::vector<double> box_weight;     // same over the whole box (1 up to rounding)
};

/// Eigenpairs of the hard-wall finite-difference Hamiltonian -d^2/dx^2 + V
/// on a non-uniform three-point stencil, all of them or those at or below
/// e_cut. The stencil is made symmetric with the node weights (lumped mass
/// matrix), so the symmetric tridiagonal LAPACK solvers apply.
inline BoxSpectrum box_spectrum(const LayerStack& stack, const BoxSpec& box,
                                double e_cut = std::numeric_limits<double>::infinity()) {
    auto g = make_box_grid(stack, box);
    const std::size_t n = g.x.size();
    auto xl = [&](std::size_t i) { return i == 0 ? g.x[0] - g.h : g.x[i - 1]; };
    auto xr = [&](std::size_t i) { return i + 1 == n ? g.x[i] + g.h : g.x[i + 1]; };
    std::vector<double> m(n), d(n), e(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = 0.5 * (xr(i) - xl(i));
    double v_min = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = (1.0 / (g.x[i] - xl(i)) + 1.0 / (xr(i) - g.x[i])) / m[i] + g.potential[i];
        v_min = std::min(v_min, g.potential[i]);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) e[i] = -1.0 / ((g.x[i + 1] - g.x[i]) * std::sqrt(m[i] * m[i + 1]));

    // MRRR (dstemr) for both the full and the windowed spectrum
    const char range = std::isfinite(e_cut) ? 'V' : 'A';
    const double vl = v_min - 1.0, vu = std::isfinite(e_cut) ? e_cut : 0.0;
    lapack_int found = 0;
    lapack_logical tryrac = 1;
    std::vector<double> w(n);
    std::vector<lapack_int> support(2 * n);
    double query = 0.0;
    {
        std::vector<double> dd = d, ee = e;
        lapack_int info = LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', range, static_cast<lapack_int>(n), dd.data(), ee.data(), vl,
                                         vu, 0, 0, &found, w.data(), &query, static_cast<lapack_int>(n), -1, support.data(),
                                         &tryrac);
        if (info != 0) throw Error(ErrorKind::numerical_failure, "dstemr size query failed with info " + std::to_string(info));
    }
    const auto cols = static_cast<std::size_t>(std::max(1.0, query));
    std::vector<double> z(n * cols);
    tryrac = 1;
    lapack_int info = LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', range, static_cast<lapack_int>(n), d.data(), e.data(), vl, vu, 0,
                                     0, &found, w.data(), z.data(), static_cast<lapack_int>(n),
                                     static_cast<lapack_int>(cols), support.data(), &tryrac);
    if (info != 0 || static_cast<std::size_t>(found) > cols)
        throw Error(ErrorKind::numerical_failure, "dstemr failed with info " + std::to_string(info));

    BoxSpectrum out;
    for (std::size_t c = 0; c < static_cast<std::size_t>(found); ++c) {
        out.energies.push_back(w[c]);
        double in = 0.0, total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            // u = sqrt(m) chi, so |chi|^2 m = u^2
            double u2 = z[c * n + i] * z[c * n + i];
            total += u2;
            in += u2 * g.omega_weight[i] / m[i];
        }
        out.omega_weight.push_back(in);
        out.box_weight.push_back(total);
    }
    return out;
}

inline double box_dos(const BoxSpectrum& spec, double energy, double broadening) {
    double total = 0.0;
    for (std::size_t k = 0; k < spec.energies.size(); ++k) {
        double de = energy - spec.energies[k];
        total += spec.omega_weight[k] * broadening / (pi * (de * de + broadening * broadening));
    }
    return total;
}

/// Lorentzian-broadened region DOS of the closed box at every grid energy.
/// Levels above e_max + 1000 eta are dropped; their tails add a relative
/// error of order 1e-3 at most.
inline std::vector<double> box_dos(const LayerStack& stack, const BoxSpec& box, const EnergyGrid& grid) {
    auto spec = box_spectrum(stack, box, grid.e_max() + 1000.0 * box.broadening);
    std::vector<double> out;
    for (double e : grid.energies()) out.push_back(box_dos(spec, e, box.broadening));
    return out;
}

/// Diagonal of (E + i eta - H_fd)^-1 at the node nearest x, eta = 1e-8. The two
/// ends are closed by the exact self-energy of a semi-infinite uniform grid
/// continuing the outer potential, so outgoing waves leave without reflection.
/// Uses the uniform-grid stencil with node potentials; pads may be short.
inline std::complex<double> fd_green(const LayerStack& stack, const BoxSpec& box, double energy, double x) {
    using C = std::complex<double>;
    const double eta = 1e-8;
    const double h = box.grid_step;
    const double L = stack.length();
    const auto n0 = static_cast<long>(std::llround(-box.pad_left / h));
    const auto n1 = static_cast<long>(std::llround((L + box.pad_right) / h));
    const auto n = static_cast<std::size_t>(n1 - n0 + 1);
    std::vector<C> a(n);
    const double t = 1.0 / (h * h);
    auto potential = [&](double xx) {
        // node potential: mean of the one-sided limits at interfaces
        auto at = [&](double y) {
            if (y < 0.0) return stack.v_left();
            if (y > L) return stack.v_right();
            double x0 = 0.0;
            for (const auto& l : stack.layers()) {
                if (y < x0 + l.thickness) return l.potential;
                x0 += l.thickness;
            }
            return stack.layers().back().potential;
        };
        const double eps = 1e-9 * h;
        return 0.5 * (at(xx - eps) + at(xx + eps));
    };
    for (std::size_t i = 0; i < n; ++i)
        a[i] = C(energy, eta) - 2.0 * t - potential(h * static_cast<double>(n0 + static_cast<long>(i)));

    auto lead = [&](double v) {
        // e^{iqh} with cos(qh) = 1 - (E + i eta - v) h^2 / 2 on the decaying branch
        C c = 1.0 - C(energy - v, eta) * h * h / 2.0;
        C s = std::sqrt(1.0 - c * c);
        C z = c + C(0.0, 1.0) * s;
        if (std::abs(z) > 1.0) z = c - C(0.0, 1.0) * s;
        return -t * z;
    };
    a.front() -= lead(stack.v_left());
    a.back() -= lead(stack.v_right());

    std::vector<C> gl(n), gr(n);
    gl[0] = 1.0 / a[0];
    for (std::size_t i = 1; i < n; ++i) gl[i] = 1.0 / (a[i] - t * t * gl[i - 1]);
    gr[n - 1] = 1.0 / a[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) gr[i] = 1.0 / (a[i] - t * t * gr[i + 1]);
    const auto i = static_cast<std::size_t>(std::clamp<long>(std::lround(x / h) - n0, 0, static_cast<long>(n) - 1));
    C denom = a[i];
    if (i > 0) denom -= t * t * gl[i - 1];
    if (i + 1 < n) denom -= t * t * gr[i + 1];
    if (std::abs(denom) < 1e-300) throw Error(ErrorKind::bound_state_pole, "finite-difference resolvent is singular");
    // the grid resolvent approximates h G(x, x)
    return 1.0 / (h * denom);
}

// ---------------------------------------------------------------------------
// Lattice: explicit lead buffers
// ---------------------------------------------------------------------------

/// Surface Green's function of a semi-infinite lead of width W (hopping -1,
/// zero on-site) at E + i eta, by Sancho-Rubio decimation.
inline Eigen::MatrixXcd sancho_rubio_surface(int width, double energy, double eta) {
    using M = Eigen::MatrixXcd;
    const Eigen::Index w = width;
    M h00 = M::Zero(w, w);
    for (Eigen::Index j = 0; j + 1 < w; ++j) h00(j, j + 1) = h00(j + 1, j) = -1.0;
    const std::complex<double> z(energy, eta);
    M alpha = -M::Identity(w, w), beta = -M::Identity(w, w);
    M eps = h00, eps_s = h00;
    const M id = M::Identity(w, w);
    for (int it = 0; it < 300; ++it) {
        M g = (z * id - eps).inverse();
        M agb = alpha * g * beta, bga = beta * g * alpha;
        eps_s += agb;
        eps += agb + bga;
        alpha = (alpha * g * alpha).eval();
        beta = (beta * g * beta).eval();
        if (alpha.cwiseAbs().maxCoeff() < 1e-15 && beta.cwiseAbs().maxCoeff() < 1e-15) break;
    }
    return (z * id - eps_s).inverse();
}

/// eta -> 0 limit of the decimated surface Green's function, by Richardson
/// extrapolation over eta = h, h/2, h/4 (error O(h^3)). Very small eta alone
/// loses accuracy to cancellation between O(1/eta) intermediates.
inline Eigen::MatrixXcd lead_surface_green(int width, double energy, double h = 1e-4) {
    return (8.0 * sancho_rubio_surface(width, energy, h / 4.0) - 6.0 * sancho_rubio_surface(width, energy, h / 2.0) +
            sancho_rubio_surface(width, energy, h)) /
           3.0;
}

/// Unit-amplitude scattering state for mode `mode` incident from `from_left`
/// (else right), computed with `buffer` explicit lead columns on each side
/// and a decimated lead beyond them. The wave is injected at the outermost
/// buffer column and rephased to unit amplitude at the contact column.
/// Returns psi on the device sites, index c*W + j.
inline Eigen::VectorXcd buffered_scattering_state(const LatticeSystem& sys, double energy, int mode, bool from_left,
                                                   int buffer = 400) {
    using C = std::complex<double>;
    const int w = sys.width(), lx = sys.length();
    const int cols = lx + 2 * buffer;
    const auto n = static_cast<Eigen::Index>(cols) * w;
    auto idx = [&](int c, int j) { return static_cast<Eigen::Index>(c) * w + j; };

    const double eps_m = -2.0 * std::cos(mode * pi / (w + 1));
    const double c = (eps_m - energy) / 2.0;
    if (!(std::abs(c) < 1.0)) throw Error(ErrorKind::closed_channel, "mode is not propagating at this energy");
    const double k = std::acos(c);
    const double v = 2.0 * std::sin(k);

    const Eigen::MatrixXcd sigma = lead_surface_green(w, energy);
    std::vector<Eigen::Triplet<C>> trip;
    for (int col = 0; col < cols; ++col) {
        const int dc = col - buffer;
        for (int j = 0; j < w; ++j) {
            double onsite = dc >= 0 && dc < lx ? sys.onsite(dc, j) : 0.0;
            trip.emplace_back(idx(col, j), idx(col, j), C(energy - onsite));
            if (j + 1 < w) {
                trip.emplace_back(idx(col, j), idx(col, j + 1), C(1.0));
                trip.emplace_back(idx(col, j + 1), idx(col, j), C(1.0));
            }
            if (col + 1 < cols) {
                trip.emplace_back(idx(col, j), idx(col + 1, j), C(1.0));
                trip.emplace_back(idx(col + 1, j), idx(col, j), C(1.0));
            }
        }
    }
    for (int a = 0; a < w; ++a)
        for (int b = 0; b < w; ++b) {
            trip.emplace_back(idx(0, a), idx(0, b), -sigma(a, b));
            trip.emplace_back(idx(cols - 1, a), idx(cols - 1, b), -sigma(a, b));
        }
    Eigen::SparseMatrix<C> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXcd q = Eigen::VectorXcd::Zero(n);
    const int inject = from_left ? 0 : cols - 1;
    for (int j = 0; j < w; ++j)
        q(idx(inject, j)) = C(0.0, v) * std::sqrt(2.0 / (w + 1)) * std::sin(mode * pi * (j + 1) / (w + 1));

    Eigen::SparseLU<Eigen::SparseMatrix<C>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::numerical_failure, "sparse LU failed");
    Eigen::VectorXcd psi = lu.solve(q);
    // the injected wave travels `buffer` columns before reaching the contact column
    psi *= std::exp(C(0.0, -k * buffer));
    return psi.segment(idx(buffer, 0), static_cast<Eigen::Index>(lx) * w);
}

}  // namespace dwelldos::oracles
