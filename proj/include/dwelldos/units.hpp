#pragma once

#include <complex>
#include <numbers>

namespace dwelldos {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

/// Unit conventions shared by both backends.
///
/// hbar = 1 everywhere, so times come out in units of hbar/energy and
/// densities of states in states per unit energy.
///
/// Continuum stacks use 2m = 1: E = k^2, group velocity v = dE/dk = 2k.
/// Lattices use hopping t = 1 and spacing a = 1: a transverse mode m
/// disperses as E = eps_m - 2 cos k with v = 2 sin k.
///
/// States are stored with unit incident amplitude. The energy-normalized
/// state is phi / sqrt(2 pi hbar v): unit amplitude carries current v,
/// the energy-normalized one carries 1 / (2 pi hbar).
namespace units {

inline constexpr double hbar = 1.0;

enum class MassConvention { continuum, lattice };

/// Factor 2 pi hbar v converting |unit-amplitude|^2 into |energy-normalized|^2.
inline constexpr double flux_factor(double velocity) { return 2.0 * pi * hbar * velocity; }

inline constexpr double continuum_velocity(double k) { return 2.0 * k; }

}  // namespace units
}  // namespace dwelldos
