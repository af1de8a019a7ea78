#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "dwelldos/error.hpp"
#include "dwelldos/model.hpp"
#include "dwelldos/quadrature.hpp"
#include "dwelldos/smatrix.hpp"
#include "dwelldos/units.hpp"

// Transfer-matrix solver for piecewise-constant potentials (hbar = 1, 2m = 1).
//
// Inside layer j the wavefunction is written in the layer's own coordinate
// s = x - x_{j-1} in [0, d_j]:
//
//     psi(s) = a e^{i k s} + b e^{-i k s}        (k != 0)
//     psi(s) = a + b s                           (k == 0, degenerate basis)
//
// so evanescent layers never evaluate e^{kappa x} with the global x.
//
// Amplitude convention (absolute x, no reference-plane shift):
//   left incidence   x < 0: e^{i k_L x} + r e^{-i k_L x}    x > L: t  e^{i k_R x}
//   right incidence  x > L: e^{-i k_R x} + r' e^{i k_R x}   x < 0: t' e^{-i k_L x}
// A closed asymptotic side decays as e^{-kappa |x - edge|} measured from its edge.

namespace dwelldos {

/// k = sqrt(E - V): real >= 0 above V, +i sqrt(V - E) below, exactly 0 at E = V.
inline cplx layer_wavevector(double energy, double potential) {
    double diff = energy - potential;
    if (diff > 0.0) return {std::sqrt(diff), 0.0};
    if (diff < 0.0) return {0.0, std::sqrt(-diff)};
    return {0.0, 0.0};
}

struct LayerCoefficients {
    cplx a;
    cplx b;
};

namespace detail {

/// Integral of e^{lambda s} over [0, d].
inline double exp_integral(double lambda, double d) {
    if (lambda == 0.0) return d;
    return std::expm1(lambda * d) / lambda;
}

/// |c|^2 * integral of e^{2 g s} over [0, d] without forming e^{2 g d} separately.
inline double weighted_exp_integral(double mag, double g, double d) {
    if (mag == 0.0) return 0.0;
    if (g <= 0.0) return mag * mag * exp_integral(2.0 * g, d);
    // |c|^2 (e^{2gd} - 1)/(2g) = |c e^{gd}|^2 (1 - e^{-2gd})/(2g)
    double grown = std::exp(2.0 * (std::log(mag) + g * d));
    return grown * exp_integral(-2.0 * g, d);
}

}  // namespace detail

/// Closed form of the integral of |a e^{iks} + b e^{-iks}|^2 over s in [0, d].
/// Handles real, imaginary and general complex k; k == 0 switches to the
/// degenerate basis psi = a + b s.
inline double layer_probability_integral(cplx a, cplx b, cplx k, double d) {
    if (k == cplx(0.0, 0.0)) {
        return std::norm(a) * d + std::real(a * std::conj(b)) * d * d + std::norm(b) * d * d * d / 3.0;
    }
    const double kr = k.real(), ki = k.imag();
    // |e^{iks}|^2 = e^{-2 ki s}; e^{iks} conj(e^{-iks}) = e^{2 i kr s}
    double direct = detail::weighted_exp_integral(std::abs(a), -ki, d) + detail::weighted_exp_integral(std::abs(b), ki, d);
    cplx oscillating = kr == 0.0 ? cplx(d, 0.0) : std::exp(cplx(0.0, kr * d)) * (std::sin(kr * d) / kr);
    return direct + 2.0 * std::real(a * std::conj(b) * oscillating);
}

namespace detail {

/// Layer coefficients scaled by e^{log_scale}.
struct ScaledCoefficients {
    cplx a;
    cplx b;
    double log_scale;
};

struct ScaledValue {
    cplx psi;
    cplx dpsi;
    double log_scale;
};

inline ScaledValue evaluate(const ScaledCoefficients& c, cplx k, double s) {
    if (k == cplx(0.0, 0.0)) return {c.a + c.b * s, c.b, c.log_scale};
    const cplx i(0.0, 1.0);
    cplx ep = std::exp(i * k * s), em = std::exp(-i * k * s);
    return {c.a * ep + c.b * em, i * k * (c.a * ep - c.b * em), c.log_scale};
}

inline void rescale(cplx& psi, cplx& dpsi, double& log_scale) {
    double m = std::max(std::abs(psi), std::abs(dpsi));
    if (m > 1e100 || (m > 0.0 && m < 1e-100)) {
        psi /= m;
        dpsi /= m;
        log_scale += std::log(m);
    }
}

/// Wavevectors and geometry of a stack at one energy.
struct Profile {
    double energy = 0.0;
    std::vector<double> edges;
    std::vector<double> thickness;
    std::vector<cplx> k;
    cplx k_left;
    cplx k_right;

    Profile(const LayerStack& stack, double e)
        : energy(e), edges(stack.edges().begin(), stack.edges().end()),
          k_left(layer_wavevector(e, stack.v_left())), k_right(layer_wavevector(e, stack.v_right())) {
        for (const auto& layer : stack.layers()) {
            thickness.push_back(layer.thickness);
            k.push_back(layer_wavevector(e, layer.potential));
        }
    }

    double length() const { return edges.back(); }
    bool left_open() const { return k_left.imag() == 0.0 && k_left.real() > 0.0; }
    bool right_open() const { return k_right.imag() == 0.0 && k_right.real() > 0.0; }

    std::size_t layer_index(double x) const {
        auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
        return static_cast<std::size_t>(it - edges.begin()) - 1;
    }
};

/// Left-to-right sweep from known (psi, psi') at x = 0.
inline std::vector<ScaledCoefficients> sweep_forward(const Profile& p, cplx psi, cplx dpsi, ScaledValue& at_end) {
    const cplx i(0.0, 1.0);
    std::vector<ScaledCoefficients> out;
    out.reserve(p.k.size());
    double ls = 0.0;
    for (std::size_t j = 0; j < p.k.size(); ++j) {
        const cplx k = p.k[j];
        const double d = p.thickness[j];
        ScaledCoefficients c;
        if (k == cplx(0.0, 0.0)) {
            c = {psi, dpsi, ls};
        } else {
            cplx q = dpsi / (i * k);
            c = {0.5 * (psi + q), 0.5 * (psi - q), ls};
        }
        out.push_back(c);
        auto end = evaluate(c, k, d);
        psi = end.psi;
        dpsi = end.dpsi;
        rescale(psi, dpsi, ls);
    }
    at_end = {psi, dpsi, ls};
    return out;
}

/// Right-to-left sweep from known (psi, psi') at x = L. Coefficients are
/// formed at each layer's right edge and carried to the left edge by pure
/// multiplication, which keeps the growing solution free of cancellation.
inline std::vector<ScaledCoefficients> sweep_backward(const Profile& p, cplx psi, cplx dpsi, ScaledValue& at_start) {
    const cplx i(0.0, 1.0);
    std::vector<ScaledCoefficients> out(p.k.size());
    double ls = 0.0;
    for (std::size_t j = p.k.size(); j-- > 0;) {
        const cplx k = p.k[j];
        const double d = p.thickness[j];
        ScaledCoefficients c;
        if (k == cplx(0.0, 0.0)) {
            c = {psi - dpsi * d, dpsi, ls};
        } else {
            cplx q = dpsi / (i * k);
            c = {0.5 * (psi + q) * std::exp(-i * k * d), 0.5 * (psi - q) * std::exp(i * k * d), ls};
        }
        out[j] = c;
        auto start = evaluate(c, k, 0.0);
        psi = start.psi;
        dpsi = start.dpsi;
        rescale(psi, dpsi, ls);
    }
    at_start = {psi, dpsi, ls};
    return out;
}

/// The two solutions that are outgoing (or decaying) toward x -> -inf and x -> +inf.
struct OutgoingPair {
    std::vector<ScaledCoefficients> to_left;    // e^{-i k_L x} for x < 0
    std::vector<ScaledCoefficients> to_right;   // e^{i k_R x} for x > L (or e^{i k_R (x - L)} when closed)
    ScaledValue to_left_at_end;                 // (psi, psi') at x = L
    ScaledValue to_right_at_start;              // (psi, psi') at x = 0
};

inline OutgoingPair outgoing_pair(const Profile& p) {
    const cplx i(0.0, 1.0);
    OutgoingPair pair;
    pair.to_left = sweep_forward(p, 1.0, -i * p.k_left, pair.to_left_at_end);
    cplx start = p.right_open() ? std::exp(i * p.k_right * p.length()) : cplx(1.0, 0.0);
    pair.to_right = sweep_backward(p, start, i * p.k_right * start, pair.to_right_at_start);
    return pair;
}

inline void check_energy(const LayerStack& stack, double energy, double margin) {
    if (distance_to_threshold(energy, channel_thresholds(stack)) <= margin)
        throw Error(ErrorKind::threshold_proximity,
                    "energy " + std::to_string(energy) + " is within the threshold margin of a channel edge");
    if (!(energy > stack.v_left()) && !(energy > stack.v_right()))
        throw Error(ErrorKind::no_open_channel, "energy " + std::to_string(energy) + " is below both channel thresholds");
}

}  // namespace detail

enum class Side { left, right };

/// One unit-amplitude incident state.
struct IncidentSolution {
    cplx r;
    cplx t;
    double velocity;
    std::vector<LayerCoefficients> coeffs;
};

struct ScatterSolution1D {
    double energy;
    cplx k_left;
    cplx k_right;
    std::vector<cplx> k;
    std::vector<double> edges;
    std::optional<IncidentSolution> from_left;
    std::optional<IncidentSolution> from_right;

    double length() const { return edges.back(); }

    const IncidentSolution& incident(Side side) const {
        const auto& s = side == Side::left ? from_left : from_right;
        if (!s) throw Error(ErrorKind::closed_channel, side == Side::left ? "left channel is closed" : "right channel is closed");
        return *s;
    }

    cplx r() const { return incident(Side::left).r; }
    cplx t() const { return incident(Side::left).t; }
    cplx r_prime() const { return incident(Side::right).r; }
    cplx t_prime() const { return incident(Side::right).t; }

    /// Wavefunction of the chosen incident state anywhere on the real line.
    cplx psi(Side side, double x) const { return value(side, x, false); }
    cplx dpsi(Side side, double x) const { return value(side, x, true); }

private:
    cplx value(Side side, double x, bool derivative) const {
        const cplx i(0.0, 1.0);
        const auto& s = incident(side);
        const double L = length();
        auto plane = [&](cplx amp, cplx kk, double xx) {
            cplx v = amp * std::exp(i * kk * xx);
            return derivative ? i * kk * v : v;
        };
        if (x < 0.0) {
            if (side == Side::left) return plane(1.0, k_left, x) + plane(s.r, -k_left, x);
            return plane(s.t, -k_left, x);
        }
        if (x > L) {
            bool open = k_right.imag() == 0.0;
            if (side == Side::left) return open ? plane(s.t, k_right, x) : plane(s.t, k_right, x - L);
            return plane(1.0, -k_right, x) + plane(s.r, k_right, x);
        }
        auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
        auto j = static_cast<std::size_t>(it - edges.begin()) - 1;
        auto v = detail::evaluate({s.coeffs[j].a, s.coeffs[j].b, 0.0}, k[j], x - edges[j]);
        return derivative ? v.dpsi : v.psi;
    }
};

/// Scattering states for every open incidence side at energy E.
inline ScatterSolution1D scattering_amplitudes(const LayerStack& stack, double energy,
                                               double threshold_margin = default_threshold_margin) {
    detail::check_energy(stack, energy, threshold_margin);
    const cplx i(0.0, 1.0);
    detail::Profile p(stack, energy);
    auto pair = detail::outgoing_pair(p);

    ScatterSolution1D sol{energy, p.k_left, p.k_right, p.k, p.edges, std::nullopt, std::nullopt};
    const double L = p.length();

    if (p.left_open()) {
        // to_right solution, decomposed at x = 0 into incident and reflected parts.
        const auto& v = pair.to_right_at_start;
        cplx q = v.dpsi / (i * p.k_left);
        cplx incoming = 0.5 * (v.psi + q), reflected = 0.5 * (v.psi - q);
        IncidentSolution s{reflected / incoming, std::exp(-v.log_scale) / incoming, 2.0 * p.k_left.real(), {}};
        for (const auto& c : pair.to_right) {
            cplx f = std::exp(c.log_scale - v.log_scale) / incoming;
            s.coeffs.push_back({c.a * f, c.b * f});
        }
        sol.from_left = std::move(s);
    }
    if (p.right_open()) {
        const auto& v = pair.to_left_at_end;
        cplx q = v.dpsi / (i * p.k_right);
        cplx incoming = 0.5 * (v.psi - q) * std::exp(i * p.k_right * L);
        cplx reflected = 0.5 * (v.psi + q) * std::exp(-i * p.k_right * L);
        IncidentSolution s{reflected / incoming, std::exp(-v.log_scale) / incoming, 2.0 * p.k_right.real(), {}};
        for (const auto& c : pair.to_left) {
            cplx f = std::exp(c.log_scale - v.log_scale) / incoming;
            s.coeffs.push_back({c.a * f, c.b * f});
        }
        sol.from_right = std::move(s);
    }
    return sol;
}

/// Flux-normalized S over the open channels, ordered (L, R).
inline SMatrix smatrix(const ScatterSolution1D& sol) {
    SMatrix out;
    std::vector<Side> sides;
    if (sol.from_left) {
        out.channels.push_back("L");
        sides.push_back(Side::left);
    }
    if (sol.from_right) {
        out.channels.push_back("R");
        sides.push_back(Side::right);
    }
    const auto n = static_cast<Eigen::Index>(sides.size());
    out.s.resize(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
        const auto& inc = sol.incident(sides[static_cast<std::size_t>(col)]);
        for (Eigen::Index row = 0; row < n; ++row) {
            const auto& out_state = sol.incident(sides[static_cast<std::size_t>(row)]);
            cplx amp = row == col ? inc.r : inc.t;
            out.s(row, col) = std::sqrt(out_state.velocity / inc.velocity) * amp;
        }
    }
    return out;
}

/// Integral of |psi|^2 over [0, L] for one unit-amplitude incident state.
inline double region_probability(const ScatterSolution1D& sol, Side side) {
    const auto& s = sol.incident(side);
    double total = 0.0;
    for (std::size_t j = 0; j < s.coeffs.size(); ++j)
        total += layer_probability_integral(s.coeffs[j].a, s.coeffs[j].b, sol.k[j], sol.edges[j + 1] - sol.edges[j]);
    return total;
}

/// tau = 2 pi hbar <phi|P|phi> for the energy-normalized state, i.e. the
/// unit-amplitude probability in [0, L] divided by the incident velocity.
inline double dwell_time_direct_1d(const ScatterSolution1D& sol, Side side) {
    return units::hbar * region_probability(sol, side) / sol.incident(side).velocity;
}

inline double dwell_time_direct_1d(const LayerStack& stack, double energy, Side side,
                                   double threshold_margin = default_threshold_margin) {
    return dwell_time_direct_1d(scattering_amplitudes(stack, energy, threshold_margin), side);
}

// ---------------------------------------------------------------------------
// Green's function
// ---------------------------------------------------------------------------

/// Retarded Green's function of E - H with H = -d^2/dx^2 + V, built from the
/// two outgoing solutions: G(x, x') = psi_L(x<) psi_R(x>) / W with
/// W = psi_L psi_R' - psi_L' psi_R, so that d/dx G jumps by +1 at x = x'.
/// The outgoing boundary conditions realize the retarded limit exactly.
class Green1D {
public:
    Green1D(const LayerStack& stack, double energy, double threshold_margin = default_threshold_margin)
        : profile_(stack, energy) {
        detail::check_energy(stack, energy, threshold_margin);
        auto pair = detail::outgoing_pair(profile_);
        left_solution_ = std::move(pair.to_left);
        right_solution_ = std::move(pair.to_right);
        // psi_L(0) = 1, psi_L'(0) = -i k_L exactly; psi_R from its sweep.
        const cplx i(0.0, 1.0);
        const auto& r0 = pair.to_right_at_start;
        wronskian_ = r0.dpsi + i * profile_.k_left * r0.psi;
        log_scale_ = r0.log_scale;
        double size = std::abs(r0.dpsi) + std::abs(profile_.k_left) * std::abs(r0.psi);
        if (std::abs(wronskian_) < 1e-12 * size)
            throw Error(ErrorKind::bound_state_pole, "Wronskian vanishes at E = " + std::to_string(energy));
    }

    double energy() const { return profile_.energy; }
    double length() const { return profile_.length(); }

    /// W in units of e^{log_scale}; compare with wronskian_at.
    cplx wronskian() const { return wronskian_; }

    /// W evaluated from the stored solutions at x, in the same units as wronskian().
    cplx wronskian_at(double x) const {
        auto l = left_value(x), r = right_value(x);
        return (l.psi * r.dpsi - l.dpsi * r.psi) * std::exp(l.log_scale + r.log_scale - log_scale_);
    }

    cplx operator()(double x, double xp) const {
        check_inside(x);
        check_inside(xp);
        double lo = std::min(x, xp), hi = std::max(x, xp);
        auto l = left_value(lo), r = right_value(hi);
        return l.psi * r.psi / wronskian_ * std::exp(l.log_scale + r.log_scale - log_scale_);
    }

    double ldos(double x) const { return -std::imag((*this)(x, x)) / pi; }

    /// Integral of the LDOS over [0, L]: Gauss-Legendre per layer starting at
    /// order 20, doubled until the change drops below 1e-11 relative.
    double region_dos() const {
        const auto& edges = profile_.edges;
        const std::size_t n = edges.size() - 1;
        auto f = [this](double x) { return ldos(x); };
        std::vector<double> estimate(n);
        double coarse_total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            estimate[j] = integrate_gauss_legendre(f, edges[j], edges[j + 1], 20);
            coarse_total += std::abs(estimate[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double prev = estimate[j];
            for (int order = 40; order <= 5120; order *= 2) {
                double next = integrate_gauss_legendre(f, edges[j], edges[j + 1], order);
                double change = std::abs(next - prev);
                prev = next;
                if (change < 1e-11 * std::abs(next) || change < 1e-14 * coarse_total) break;
            }
            total += prev;
        }
        return total;
    }

private:
    void check_inside(double x) const {
        if (x < 0.0 || x > length())
            throw Error(ErrorKind::validation, "Green's function positions must lie in [0, L]");
    }

    detail::ScaledValue left_value(double x) const {
        auto j = profile_.layer_index(x);
        return detail::evaluate(left_solution_[j], profile_.k[j], x - profile_.edges[j]);
    }
    detail::ScaledValue right_value(double x) const {
        auto j = profile_.layer_index(x);
        return detail::evaluate(right_solution_[j], profile_.k[j], x - profile_.edges[j]);
    }

    detail::Profile profile_;
    std::vector<detail::ScaledCoefficients> left_solution_;
    std::vector<detail::ScaledCoefficients> right_solution_;
    cplx wronskian_;
    double log_scale_ = 0.0;
};

inline cplx greens_function_1d(const LayerStack& stack, double energy, double x, double xp,
                               double threshold_margin = default_threshold_margin) {
    return Green1D(stack, energy, threshold_margin)(x, xp);
}

/// rho(x, E) = -(1/pi) Im G(x, x; E).
inline double ldos_1d(const LayerStack& stack, double energy, double x,
                      double threshold_margin = default_threshold_margin) {
    return Green1D(stack, energy, threshold_margin).ldos(x);
}

inline double dos_region_1d(const LayerStack& stack, double energy,
                            double threshold_margin = default_threshold_margin) {
    return Green1D(stack, energy, threshold_margin).region_dos();
}

}  // namespace dwelldos
