#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dwelldos/error.hpp"
#include "dwelldos/model.hpp"
#include "dwelldos/smatrix.hpp"
#include "dwelldos/units.hpp"

// Quasi-1D tight-binding scattering with two semi-infinite leads.
//
// Dispersion of transverse mode m in a lead: E = eps_m - 2 cos k, hopping -1,
// zero on-site energy. The lead coordinate c runs along the lead with c = 0
// on the device column it attaches to; incoming waves are chi_n e^{i k c}
// (left lead, c increasing into the device) and chi_n e^{-i k c'} (right lead,
// c' = c - (Lx - 1)). Outgoing waves are the complex conjugates, so the
// flux-normalized S-matrix is symmetric for real symmetric H.

namespace dwelldos {

enum class Lead { left, right };

struct ChannelInfo {
    Lead lead = Lead::left;
    int mode = 1;                      // 1..W
    Eigen::VectorXd profile;           // chi_m over rows
    double transverse_energy = 0.0;
    cplx k;                            // (0, pi) when open; Im k > 0 when evanescent
    double velocity = 0.0;             // 2 sin k when open, 0 otherwise
    bool open = false;

    /// e^{i k}: the Bloch factor per column along the outgoing direction.
    cplx bloch() const { return std::exp(cplx(0.0, 1.0) * k); }

    std::string id() const { return (lead == Lead::left ? "L" : "R") + std::to_string(mode); }
};

/// All W transverse modes of a lead at energy E, in mode order 1..W.
inline std::vector<ChannelInfo> lead_modes(int width, double energy, Lead lead = Lead::left,
                                           double threshold_margin = default_threshold_margin) {
    if (width < 1) throw Error(ErrorKind::validation, "lead width must be >= 1");
    std::vector<ChannelInfo> modes;
    modes.reserve(static_cast<std::size_t>(width));
    for (int m = 1; m <= width; ++m) {
        ChannelInfo ch;
        ch.lead = lead;
        ch.mode = m;
        ch.transverse_energy = transverse_energy(width, m);
        ch.profile.resize(width);
        for (int j = 0; j < width; ++j) ch.profile(j) = transverse_profile(width, m, j + 1);

        if (std::abs(energy - (ch.transverse_energy - 2.0)) <= threshold_margin ||
            std::abs(energy - (ch.transverse_energy + 2.0)) <= threshold_margin)
            throw Error(ErrorKind::threshold_proximity,
                        "energy " + std::to_string(energy) + " is within the margin of a band edge of mode " + std::to_string(m));

        const double c = 0.5 * (ch.transverse_energy - energy);   // cos k
        if (std::abs(c) < 1.0) {
            double k = std::acos(c);
            ch.k = {k, 0.0};
            ch.velocity = 2.0 * std::sin(k);
            ch.open = true;
        } else {
            // Decaying Bloch factor lambda with lambda + 1/lambda = 2c, |lambda| < 1.
            double root = std::sqrt(c * c - 1.0);
            double lambda = c > 0.0 ? c - root : c + root;
            double kappa = -std::log(std::abs(lambda));
            ch.k = {lambda > 0.0 ? 0.0 : pi, kappa};
            ch.velocity = 0.0;
            ch.open = false;
        }
        modes.push_back(std::move(ch));
    }
    return modes;
}

/// Retarded self-energy of a semi-infinite lead projected on its contact column:
/// Sigma = sum_m chi_m chi_m^T (-e^{i k_m}). Evanescent modes contribute the real
/// decaying branch; pass include_evanescent = false to drop them (diagnostics only).
inline Eigen::MatrixXcd lead_self_energy(int width, double energy, bool include_evanescent = true,
                                         double threshold_margin = default_threshold_margin) {
    Eigen::MatrixXcd sigma = Eigen::MatrixXcd::Zero(width, width);
    for (const auto& ch : lead_modes(width, energy, Lead::left, threshold_margin)) {
        if (!ch.open && !include_evanescent) continue;
        Eigen::VectorXcd chi = ch.profile.cast<cplx>();
        sigma -= ch.bloch() * (chi * chi.transpose());
    }
    return sigma;
}

namespace detail {

/// A = E - H - Sigma_L - Sigma_R on the device, stored as W x W column blocks.
/// Neighbouring columns couple through +1 * identity.
class DeviceOperator {
public:
    DeviceOperator(const LatticeSystem& sys, double energy, const Eigen::MatrixXcd& sigma_left,
                   const Eigen::MatrixXcd& sigma_right)
        : width_(sys.width()), length_(sys.length()) {
        diag_.reserve(static_cast<std::size_t>(length_));
        for (int c = 0; c < length_; ++c) {
            Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(width_, width_);
            for (int j = 0; j < width_; ++j) {
                d(j, j) = energy - sys.onsite(c, j);
                if (j + 1 < width_) d(j, j + 1) = d(j + 1, j) = 1.0;
            }
            if (c == 0) d -= sigma_left;
            if (c == length_ - 1) d -= sigma_right;
            diag_.push_back(std::move(d));
        }
    }

    int width() const { return width_; }
    int length() const { return length_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(width_) * length_; }
    const Eigen::MatrixXcd& block(int c) const { return diag_[static_cast<std::size_t>(c)]; }

    Eigen::MatrixXcd dense() const {
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(size(), size());
        for (int c = 0; c < length_; ++c) {
            a.block(c * width_, c * width_, width_, width_) = block(c);
            if (c + 1 < length_) {
                a.block(c * width_, (c + 1) * width_, width_, width_).setIdentity();
                a.block((c + 1) * width_, c * width_, width_, width_).setIdentity();
            }
        }
        return a;
    }

    Eigen::MatrixXcd apply(const Eigen::MatrixXcd& x) const {
        Eigen::MatrixXcd y(x.rows(), x.cols());
        for (int c = 0; c < length_; ++c) {
            auto yc = y.middleRows(c * width_, width_);
            yc = block(c) * x.middleRows(c * width_, width_);
            if (c > 0) yc += x.middleRows((c - 1) * width_, width_);
            if (c + 1 < length_) yc += x.middleRows((c + 1) * width_, width_);
        }
        return y;
    }

    double max_abs() const {
        double m = 1.0;
        for (const auto& d : diag_) m = std::max(m, d.cwiseAbs().maxCoeff());
        return m;
    }

private:
    int width_;
    int length_;
    std::vector<Eigen::MatrixXcd> diag_;
};

/// Block LU of a block-tridiagonal operator with identity couplings.
/// The pivots D'_c are the inverses of the left-connected Green's functions
/// g_c, which also drive the recursive evaluation of diag(A^{-1}).
class BlockTridiagonalSolver {
public:
    explicit BlockTridiagonalSolver(const DeviceOperator& op) : width_(op.width()), length_(op.length()) {
        lu_.reserve(static_cast<std::size_t>(length_));
        Eigen::MatrixXcd pivot = op.block(0);
        for (int c = 0; c < length_; ++c) {
            if (c > 0) pivot = op.block(c) - left_green(c - 1);
            lu_.emplace_back(pivot);
            if (!(lu_.back().rcond() > 1e-14))
                throw Error(ErrorKind::bound_state_pole, "device operator is singular at this energy");
            inverse_.push_back(lu_.back().inverse());
        }
    }

    Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const {
        std::vector<Eigen::MatrixXcd> y(static_cast<std::size_t>(length_));
        for (int c = 0; c < length_; ++c) {
            Eigen::MatrixXcd b = rhs.middleRows(c * width_, width_);
            if (c > 0) b -= left_green(c - 1) * y[static_cast<std::size_t>(c - 1)];
            y[static_cast<std::size_t>(c)] = std::move(b);
        }
        Eigen::MatrixXcd x(rhs.rows(), rhs.cols());
        for (int c = length_; c-- > 0;) {
            Eigen::MatrixXcd b = y[static_cast<std::size_t>(c)];
            if (c + 1 < length_) b -= x.middleRows((c + 1) * width_, width_);
            x.middleRows(c * width_, width_) = lu_[static_cast<std::size_t>(c)].solve(b);
        }
        return x;
    }

    /// Diagonal blocks G_cc of the inverse: G_last = g_last,
    /// G_cc = g_c + g_c G_{c+1,c+1} g_c.
    std::vector<Eigen::MatrixXcd> diagonal_blocks() const {
        std::vector<Eigen::MatrixXcd> g(static_cast<std::size_t>(length_));
        g.back() = left_green(length_ - 1);
        for (int c = length_ - 1; c-- > 0;) {
            const auto& gl = left_green(c);
            g[static_cast<std::size_t>(c)] = gl + gl * g[static_cast<std::size_t>(c + 1)] * gl;
        }
        return g;
    }

private:
    const Eigen::MatrixXcd& left_green(int c) const { return inverse_[static_cast<std::size_t>(c)]; }

    int width_;
    int length_;
    std::vector<Eigen::PartialPivLU<Eigen::MatrixXcd>> lu_;
    std::vector<Eigen::MatrixXcd> inverse_;
};

inline DeviceOperator device_operator(const LatticeSystem& sys, double energy, double threshold_margin) {
    Eigen::MatrixXcd sigma = lead_self_energy(sys.width(), energy, true, threshold_margin);
    return DeviceOperator(sys, energy, sigma, sigma);
}

}  // namespace detail

struct LatticeScatterState {
    double energy;
    ChannelInfo channel;
    Eigen::VectorXcd psi;   // device sites, column-major
};

/// Every open-channel scattering state at one energy plus the S-matrix built
/// from them. Channels are ordered L1..LW then R1..RW, open ones only.
struct LatticeScattering {
    double energy;
    std::vector<ChannelInfo> channels;
    std::vector<LatticeScatterState> states;
    SMatrix s;
};

namespace detail {

inline int contact_column(const LatticeSystem& sys, Lead lead) { return lead == Lead::left ? 0 : sys.length() - 1; }

inline std::vector<ChannelInfo> open_channels(const LatticeSystem& sys, double energy, double margin) {
    std::vector<ChannelInfo> open;
    for (Lead lead : {Lead::left, Lead::right})
        for (auto& ch : lead_modes(sys.width(), energy, lead, margin))
            if (ch.open) open.push_back(std::move(ch));
    return open;
}

/// Source for unit incident amplitude: i hbar v_n chi_n on the contact column.
inline Eigen::VectorXcd source(const LatticeSystem& sys, const ChannelInfo& ch) {
    Eigen::VectorXcd q = Eigen::VectorXcd::Zero(sys.site_count());
    int col = contact_column(sys, ch.lead);
    q.segment(col * sys.width(), sys.width()) = cplx(0.0, units::hbar * ch.velocity) * ch.profile.cast<cplx>();
    return q;
}

inline void check_residual(const DeviceOperator& op, const Eigen::MatrixXcd& psi, const Eigen::MatrixXcd& q) {
    double residual = (op.apply(psi) - q).cwiseAbs().maxCoeff();
    double scale = std::max(1.0, op.max_abs() * psi.cwiseAbs().maxCoeff());
    if (!(residual <= 1e-10 * scale))
        throw Error(ErrorKind::numerical_failure, "scattering-state residual " + std::to_string(residual) + " too large");
}

}  // namespace detail

inline LatticeScattering scattering_states(const LatticeSystem& sys, double energy,
                                           double threshold_margin = default_threshold_margin) {
    auto channels = detail::open_channels(sys, energy, threshold_margin);
    if (channels.empty())
        throw Error(ErrorKind::no_open_channel, "no open lead channel at E = " + std::to_string(energy));
    auto op = detail::device_operator(sys, energy, threshold_margin);
    detail::BlockTridiagonalSolver solver(op);

    const auto n = static_cast<Eigen::Index>(channels.size());
    Eigen::MatrixXcd q(sys.site_count(), n);
    for (Eigen::Index i = 0; i < n; ++i) q.col(i) = detail::source(sys, channels[static_cast<std::size_t>(i)]);
    Eigen::MatrixXcd psi = solver.solve(q);
    detail::check_residual(op, psi, q);

    LatticeScattering out{energy, channels, {}, {}};
    out.s.s.resize(n, n);
    const int w = sys.width();
    for (Eigen::Index in = 0; in < n; ++in) {
        const auto& cin = channels[static_cast<std::size_t>(in)];
        out.states.push_back({energy, cin, psi.col(in)});
        for (Eigen::Index o = 0; o < n; ++o) {
            const auto& cout = channels[static_cast<std::size_t>(o)];
            int col = detail::contact_column(sys, cout.lead);
            cplx amp = cout.profile.cast<cplx>().dot(psi.col(in).segment(col * w, w));
            if (o == in) amp -= 1.0;
            out.s.s(o, in) = std::sqrt(cout.velocity / cin.velocity) * amp;
        }
    }
    for (const auto& ch : channels) out.s.channels.push_back(ch.id());
    return out;
}

inline LatticeScatterState scattering_state(const LatticeSystem& sys, double energy, const ChannelInfo& channel,
                                            double threshold_margin = default_threshold_margin) {
    if (!channel.open) throw Error(ErrorKind::closed_channel, "channel " + channel.id() + " is not open");
    auto op = detail::device_operator(sys, energy, threshold_margin);
    detail::BlockTridiagonalSolver solver(op);
    Eigen::MatrixXcd q = detail::source(sys, channel);
    Eigen::MatrixXcd psi = solver.solve(q);
    detail::check_residual(op, psi, q);
    return {energy, channel, psi.col(0)};
}

inline double region_weight(const LatticeSystem& sys, const Eigen::VectorXcd& psi, const LatticeRegion& region) {
    sys.validate(region);
    double total = 0.0;
    for (int c = region.col_begin; c < region.col_end; ++c)
        for (int j = region.row_begin; j < region.row_end; ++j) total += std::norm(psi(sys.index(c, j)));
    return total;
}

/// tau_n = (hbar / v_n) * sum over the region of |psi_n|^2 for unit incident amplitude.
inline double dwell_time_lattice(const LatticeSystem& sys, const LatticeScatterState& state, const LatticeRegion& region) {
    return units::hbar * region_weight(sys, state.psi, region) / state.channel.velocity;
}

inline double dwell_time_lattice(const LatticeSystem& sys, double energy, const ChannelInfo& channel,
                                 const LatticeRegion& region, double threshold_margin = default_threshold_margin) {
    return dwell_time_lattice(sys, scattering_state(sys, energy, channel, threshold_margin), region);
}

inline constexpr int dense_green_site_limit = 1600;

/// Reference path: G = (E - H - Sigma_L - Sigma_R)^{-1} by dense LU.
inline Eigen::MatrixXcd greens_function_lattice(const LatticeSystem& sys, double energy,
                                                double threshold_margin = default_threshold_margin) {
    if (sys.site_count() > dense_green_site_limit)
        throw Error(ErrorKind::validation, "dense Green's function limited to 1600 device sites");
    auto op = detail::device_operator(sys, energy, threshold_margin);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(op.dense());
    if (!(lu.rcond() > 1e-14)) throw Error(ErrorKind::bound_state_pole, "device operator is singular at this energy");
    return lu.inverse();
}

/// Scalable path: diagonal of G from the column-recursive sweep.
inline Eigen::VectorXcd greens_diagonal_lattice(const LatticeSystem& sys, double energy,
                                                double threshold_margin = default_threshold_margin) {
    auto op = detail::device_operator(sys, energy, threshold_margin);
    detail::BlockTridiagonalSolver solver(op);
    auto blocks = solver.diagonal_blocks();
    Eigen::VectorXcd d(sys.site_count());
    for (int c = 0; c < sys.length(); ++c) d.segment(c * sys.width(), sys.width()) = blocks[static_cast<std::size_t>(c)].diagonal();
    return d;
}

inline double dos_from_diagonal(const LatticeSystem& sys, const Eigen::VectorXcd& g_diag, const LatticeRegion& region) {
    sys.validate(region);
    double total = 0.0;
    for (int c = region.col_begin; c < region.col_end; ++c)
        for (int j = region.row_begin; j < region.row_end; ++j) total -= g_diag(sys.index(c, j)).imag();
    return total / pi;
}

inline double ldos_lattice(const LatticeSystem& sys, double energy, int col, int row,
                           double threshold_margin = default_threshold_margin) {
    sys.validate({col, col + 1, row, row + 1});
    return -greens_diagonal_lattice(sys, energy, threshold_margin)(sys.index(col, row)).imag() / pi;
}

/// Sum over the region of -(1/pi) Im G(r, r; E).
inline double dos_region_lattice(const LatticeSystem& sys, double energy, const LatticeRegion& region,
                                 double threshold_margin = default_threshold_margin) {
    return dos_from_diagonal(sys, greens_diagonal_lattice(sys, energy, threshold_margin), region);
}

}  // namespace dwelldos
