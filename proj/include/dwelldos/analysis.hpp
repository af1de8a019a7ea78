#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwelldos/error.hpp"
#include "dwelldos/lattice.hpp"
#include "dwelldos/model.hpp"
#include "dwelldos/parallel.hpp"
#include "dwelldos/smatrix.hpp"
#include "dwelldos/solver1d.hpp"

namespace dwelldos {

inline constexpr double residual_floor = 1e-30;
inline constexpr double default_min_prominence = 0.05;

inline double default_dv(double energy) { return 1e-5 * std::max(1.0, std::abs(energy)); }

struct ChannelDwell {
    std::string id;
    double tau;
    double velocity;
};

// ---------------------------------------------------------------------------
// Backends: one uniform surface over the stack and lattice solvers.
// ---------------------------------------------------------------------------

template <class B>
concept ScatteringBackend = requires(const B& b, double e, double dv) {
    { b.thresholds() } -> std::same_as<std::vector<double>>;
    { b.threshold_margin() } -> std::same_as<double>;
    { b.dwell_times(e) } -> std::same_as<std::vector<ChannelDwell>>;
    { b.dos(e) } -> std::same_as<double>;
    { b.smatrix(e, dv) } -> std::same_as<SMatrix>;
    { b.palindromic() } -> std::same_as<bool>;
};

namespace detail {
inline void check_shift(std::span<const double> thresholds, double energy, double dv) {
    if (std::abs(dv) >= distance_to_threshold(energy, thresholds))
        throw Error(ErrorKind::threshold_crossing, "potential shift is as large as the distance to a channel threshold");
}
}  // namespace detail

/// S-matrix with the potential inside [0, L] raised by dv.
inline SMatrix shifted_smatrix(const LayerStack& stack, double energy, double dv,
                               double threshold_margin = default_threshold_margin) {
    detail::check_shift(channel_thresholds(stack), energy, dv);
    if (dv == 0.0) return smatrix(scattering_amplitudes(stack, energy, threshold_margin));
    return smatrix(scattering_amplitudes(stack.shifted(dv), energy, threshold_margin));
}

/// S-matrix with dv added to every on-site energy inside region.
inline SMatrix shifted_smatrix(const LatticeSystem& sys, const LatticeRegion& region, double energy, double dv,
                               double threshold_margin = default_threshold_margin) {
    detail::check_shift(channel_thresholds(sys), energy, dv);
    sys.validate(region);
    if (dv == 0.0) return scattering_states(sys, energy, threshold_margin).s;
    return scattering_states(sys.shifted(region, dv), energy, threshold_margin).s;
}

class StackBackend {
public:
    explicit StackBackend(LayerStack stack, double threshold_margin = default_threshold_margin)
        : stack_(std::move(stack)), margin_(threshold_margin) {}

    const LayerStack& stack() const { return stack_; }
    std::vector<double> thresholds() const { return channel_thresholds(stack_); }
    double threshold_margin() const { return margin_; }
    bool palindromic() const { return stack_.palindromic(); }

    std::vector<ChannelDwell> dwell_times(double e) const {
        auto sol = scattering_amplitudes(stack_, e, margin_);
        std::vector<ChannelDwell> out;
        if (sol.from_left) out.push_back({"L", dwell_time_direct_1d(sol, Side::left), sol.from_left->velocity});
        if (sol.from_right) out.push_back({"R", dwell_time_direct_1d(sol, Side::right), sol.from_right->velocity});
        return out;
    }

    double dos(double e) const { return dos_region_1d(stack_, e, margin_); }
    SMatrix smatrix(double e, double dv) const { return shifted_smatrix(stack_, e, dv, margin_); }

private:
    LayerStack stack_;
    double margin_;
};

class LatticeBackend {
public:
    LatticeBackend(LatticeSystem sys, LatticeRegion region, double threshold_margin = default_threshold_margin)
        : sys_(std::move(sys)), region_(region), margin_(threshold_margin) {
        sys_.validate(region_);
    }
    explicit LatticeBackend(LatticeSystem sys, double threshold_margin = default_threshold_margin)
        : LatticeBackend(sys, sys.full_region(), threshold_margin) {}

    const LatticeSystem& system() const { return sys_; }
    const LatticeRegion& region() const { return region_; }
    std::vector<double> thresholds() const { return channel_thresholds(sys_); }
    double threshold_margin() const { return margin_; }
    bool palindromic() const { return false; }

    std::vector<ChannelDwell> dwell_times(double e) const {
        auto sc = scattering_states(sys_, e, margin_);
        std::vector<ChannelDwell> out;
        for (const auto& st : sc.states) out.push_back({st.channel.id(), dwell_time_lattice(sys_, st, region_), st.channel.velocity});
        return out;
    }

    double dos(double e) const { return dos_region_lattice(sys_, e, region_, margin_); }
    SMatrix smatrix(double e, double dv) const { return shifted_smatrix(sys_, region_, e, dv, margin_); }

private:
    LatticeSystem sys_;
    LatticeRegion region_;
    double margin_;
};

// ---------------------------------------------------------------------------
// Dwell time from the potential derivative of S
// ---------------------------------------------------------------------------

struct VDerivResult {
    std::vector<std::string> channels;
    std::vector<double> tau;
    std::vector<double> imag_residual;
    double dv;
};

/// tau_n = Re[ i hbar sum_m conj(s_mn) ds_mn/dV ] at V = 0, with ds/dV from a
/// central difference S(+dv), S(-dv). The imaginary part is half the V-derivative
/// of the column norm, zero by unitarity, and is returned as a diagnostic.
/// The residual is O(dv^2) like the truncation error, and must stay below
/// imag_tolerance. A phase jump above pi/2 in any non-negligible element
/// means dv is too large. With auto_halve the step is halved (up to 30 times)
/// on either failure; otherwise step_too_large or numerical_failure is thrown.
template <ScatteringBackend B>
VDerivResult dwell_times_vderiv(const B& backend, double energy, double dv, bool auto_halve = false,
                                double imag_tolerance = 1e-6) {
    if (!(dv > 0.0)) throw Error(ErrorKind::validation, "dv must be positive");
    const SMatrix s0 = backend.smatrix(energy, 0.0);
    for (int attempt = 0;; ++attempt) {
        const SMatrix plus = backend.smatrix(energy, dv);
        const SMatrix minus = backend.smatrix(energy, -dv);
        if (plus.channels != s0.channels || minus.channels != s0.channels)
            throw Error(ErrorKind::threshold_crossing, "channel set changed under the potential shift");

        const double scale = s0.s.cwiseAbs().maxCoeff();
        bool ambiguous = false;
        for (Eigen::Index i = 0; i < s0.s.size() && !ambiguous; ++i) {
            if (std::abs(s0.s(i)) < 1e-8 * scale) continue;
            ambiguous = std::abs(std::arg(plus.s(i) * std::conj(minus.s(i)))) > pi / 2;
        }
        if (ambiguous) {
            if (!auto_halve || attempt >= 30)
                throw Error(ErrorKind::step_too_large, "S-matrix phase jumps by more than pi/2 across dv");
            dv *= 0.5;
            continue;
        }

        const Eigen::MatrixXcd ds = (plus.s - minus.s) / (2.0 * dv);
        VDerivResult out{s0.channels, {}, {}, dv};
        const cplx i(0.0, 1.0);
        bool residual_ok = true;
        for (Eigen::Index n = 0; n < s0.s.cols(); ++n) {
            cplx q = i * units::hbar * s0.s.col(n).dot(ds.col(n));   // dot conjugates the first argument
            out.tau.push_back(q.real());
            out.imag_residual.push_back(q.imag());
            residual_ok = residual_ok && std::abs(q.imag()) < imag_tolerance;
        }
        if (residual_ok) return out;
        if (!auto_halve || attempt >= 30)
            throw Error(ErrorKind::numerical_failure, "imaginary part of the delay-matrix diagonal exceeds tolerance");
        dv *= 0.5;
    }
}

template <ScatteringBackend B>
double dwell_time_vderiv(const B& backend, double energy, std::size_t channel, double dv,
                         double imag_tolerance = 1e-6) {
    auto r = dwell_times_vderiv(backend, energy, dv, false, imag_tolerance);
    if (channel >= r.tau.size()) throw Error(ErrorKind::closed_channel, "channel index out of range");
    return r.tau[channel];
}

// ---------------------------------------------------------------------------
// Wave-packet average
// ---------------------------------------------------------------------------

struct EnergySample {
    double energy;
    double value;
};

/// Trapezoid integral of |alpha(E)|^2 tau(E). tau is interpolated linearly
/// from its samples; every energy carrying weight must lie inside them.
inline double wavepacket_dwell_time(const SpectralWeight& weights, std::span<const EnergySample> tau) {
    if (tau.empty()) throw Error(ErrorKind::coverage, "no dwell-time samples");
    auto w = weights.samples();
    const double lo = tau.front().energy, hi = tau.back().energy;
    const double slack = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
    for (const auto& s : w)
        if (s.weight > 0.0 && (s.energy < lo - slack || s.energy > hi + slack))
            throw Error(ErrorKind::coverage, "spectral weight extends beyond the sampled dwell times");

    auto interp = [&](double e) {
        if (tau.size() == 1) return tau.front().value;
        auto it = std::lower_bound(tau.begin(), tau.end(), e, [](const EnergySample& a, double x) { return a.energy < x; });
        if (it == tau.begin()) return it->value;
        if (it == tau.end()) return tau.back().value;
        if (it->energy == e) return it->value;
        const auto& b = *it;
        const auto& a = *(it - 1);
        double f = (e - a.energy) / (b.energy - a.energy);
        return a.value + f * (b.value - a.value);
    };

    if (w.size() == 1) return interp(w.front().energy);
    double total = 0.0;
    double prev = w[0].weight * interp(w[0].energy);
    for (std::size_t i = 1; i < w.size(); ++i) {
        double cur = w[i].weight * interp(w[i].energy);
        total += 0.5 * (prev + cur) * (w[i].energy - w[i - 1].energy);
        prev = cur;
    }
    return total;
}

template <class F>
    requires std::invocable<F&, double>
double wavepacket_dwell_time(const SpectralWeight& weights, F&& tau_of_energy) {
    std::vector<EnergySample> tau;
    for (const auto& s : weights.samples()) tau.push_back({s.energy, tau_of_energy(s.energy)});
    return wavepacket_dwell_time(weights, std::span<const EnergySample>(tau));
}

// ---------------------------------------------------------------------------
// Identity verification
// ---------------------------------------------------------------------------

struct Methods {
    bool direct = true;
    bool vderiv = false;
    bool green = true;
};

struct VerifyOptions {
    Methods methods;
    std::optional<double> dv;   // default_dv(E) with automatic halving when unset
    unsigned workers = 1;
};

struct ChannelRecord {
    std::string id;
    double tau_direct = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> tau_vderiv;
    double velocity = 0.0;
};

struct DwellReport {
    double energy = 0.0;
    std::vector<ChannelRecord> channels;
    double dos_green = std::numeric_limits<double>::quiet_NaN();
    double dos_sum = std::numeric_limits<double>::quiet_NaN();
    double residual_rel = std::numeric_limits<double>::quiet_NaN();
    bool skipped = false;
    std::string note;
    std::optional<double> symmetric_ratio;   // rho * pi * hbar / tau_L on palindromic stacks

    static double residual(double dos_green, double dos_sum) {
        return std::abs(dos_green - dos_sum) / std::max(dos_green, residual_floor);
    }

    double tau_sum() const {
        double s = 0.0;
        for (const auto& c : channels) s += c.tau_direct;
        return s;
    }
};

struct IdentitySummary {
    std::size_t points = 0;
    std::size_t skipped = 0;
    double max_residual_rel = 0.0;
    std::vector<std::pair<double, double>> worst;   // (energy, residual), largest first, at most 5
    bool palindromic = false;
    double max_symmetric_deviation = 0.0;           // max |rho pi hbar / tau_L - 1|
    double max_tau_asymmetry = 0.0;                 // max |tau_L - tau_R| / tau_L
};

struct IdentityRun {
    std::vector<DwellReport> reports;
    IdentitySummary summary;
};

template <ScatteringBackend B>
DwellReport evaluate_point(const B& backend, double energy, const VerifyOptions& opt) {
    DwellReport rep;
    rep.energy = energy;
    if (distance_to_threshold(energy, backend.thresholds()) <= backend.threshold_margin()) {
        rep.skipped = true;
        rep.note = "within threshold margin";
        return rep;
    }
    try {
        auto dwell = backend.dwell_times(energy);
        for (const auto& d : dwell) {
            ChannelRecord c;
            c.id = d.id;
            c.velocity = d.velocity;
            if (opt.methods.direct) c.tau_direct = d.tau;
            rep.channels.push_back(std::move(c));
        }
        if (opt.methods.vderiv) {
            auto v = opt.dv ? dwell_times_vderiv(backend, energy, *opt.dv, false)
                            : dwell_times_vderiv(backend, energy, default_dv(energy), true);
            for (std::size_t i = 0; i < rep.channels.size(); ++i) rep.channels[i].tau_vderiv = v.tau[i];
        }
        if (opt.methods.direct) rep.dos_sum = rep.tau_sum() / (2.0 * pi * units::hbar);
        if (opt.methods.green) rep.dos_green = backend.dos(energy);
        if (opt.methods.direct && opt.methods.green) rep.residual_rel = DwellReport::residual(rep.dos_green, rep.dos_sum);
        if (backend.palindromic() && opt.methods.direct && opt.methods.green && rep.channels.size() == 2)
            rep.symmetric_ratio = rep.dos_green * pi * units::hbar / rep.channels[0].tau_direct;
    } catch (const Error& e) {
        rep = DwellReport{};
        rep.energy = energy;
        rep.skipped = true;
        rep.note = e.what();
    }
    return rep;
}

inline IdentitySummary summarize(std::span<const DwellReport> reports, bool palindromic) {
    IdentitySummary s;
    s.points = reports.size();
    s.palindromic = palindromic;
    std::vector<std::pair<double, double>> residuals;
    for (const auto& r : reports) {
        if (r.skipped) {
            ++s.skipped;
            continue;
        }
        if (!std::isnan(r.residual_rel)) {
            s.max_residual_rel = std::max(s.max_residual_rel, r.residual_rel);
            residuals.emplace_back(r.energy, r.residual_rel);
        }
        if (r.symmetric_ratio) s.max_symmetric_deviation = std::max(s.max_symmetric_deviation, std::abs(*r.symmetric_ratio - 1.0));
        if (palindromic && r.channels.size() == 2)
            s.max_tau_asymmetry = std::max(s.max_tau_asymmetry,
                                           std::abs(r.channels[0].tau_direct - r.channels[1].tau_direct) / r.channels[0].tau_direct);
    }
    std::stable_sort(residuals.begin(), residuals.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (residuals.size() > 5) residuals.resize(5);
    s.worst = std::move(residuals);
    return s;
}

/// Every estimator at every grid energy. Points near thresholds or whose
/// solve fails are kept as skipped reports carrying the reason.
template <ScatteringBackend B>
IdentityRun verify_identity(const B& backend, const EnergyGrid& grid, const VerifyOptions& opt = {}) {
    auto energies = grid.energies();
    auto reports = parallel_map(energies.size(), opt.workers, [&](std::size_t i) {
        auto rep = evaluate_point(backend, energies[i], opt);
        if (!rep.skipped && distance_to_threshold(rep.energy, backend.thresholds()) <= grid.threshold_margin()) {
            rep.skipped = true;
            rep.note = "within threshold margin";
        }
        return rep;
    });
    IdentityRun run;
    run.summary = summarize(reports, backend.palindromic());
    run.reports = std::move(reports);
    return run;
}

// ---------------------------------------------------------------------------
// Resonances
// ---------------------------------------------------------------------------

struct Peak {
    std::string channel;   // "dos", a channel id, or "ALL" for the dwell-time sum
    double energy;         // parabolic refinement of the sampled maximum
    double height;
    double width;          // full width at half prominence
    double prominence;
};

struct PeakMatch {
    std::size_t dos_peak;
    std::string channel;        // best-matching single channel ("" if none)
    double distance;            // |E_dos - E_dwell| for that channel
    bool matched;
    double sum_distance;        // distance to the nearest peak of the dwell-time sum
    bool sum_matched;
};

struct ResonanceTable {
    std::vector<Peak> dos_peaks;
    std::vector<Peak> dwell_peaks;
    std::vector<PeakMatch> matches;
    double resolution = 0.0;

    std::size_t unmatched() const {
        return static_cast<std::size_t>(std::count_if(matches.begin(), matches.end(), [](const PeakMatch& m) { return !m.matched; }));
    }
    std::size_t sum_unmatched() const {
        return static_cast<std::size_t>(std::count_if(matches.begin(), matches.end(), [](const PeakMatch& m) { return !m.sum_matched; }));
    }
};

namespace detail {

/// Local maxima of y(x) with prominence >= min_prominence * max(y). NaN splits
/// the series; maxima on a segment boundary are not peaks. Plateaus are
/// handled as a single peak at their midpoint, so the result is mirror
/// symmetric under x -> -x with reversed order.
inline std::vector<Peak> series_peaks(const std::string& label, std::span<const double> x, std::span<const double> y,
                                      double min_prominence) {
    std::vector<Peak> peaks;
    double global = -std::numeric_limits<double>::infinity();
    for (double v : y)
        if (std::isfinite(v)) global = std::max(global, v);
    if (!std::isfinite(global)) return peaks;
    const double threshold = min_prominence * std::abs(global);

    const std::size_t n = y.size();
    std::size_t seg_begin = 0;
    while (seg_begin < n) {
        while (seg_begin < n && !std::isfinite(y[seg_begin])) ++seg_begin;
        std::size_t seg_end = seg_begin;
        while (seg_end < n && std::isfinite(y[seg_end])) ++seg_end;
        // segment [seg_begin, seg_end)
        for (std::size_t i = seg_begin + 1; i + 1 < seg_end;) {
            std::size_t j = i;
            while (j + 1 < seg_end && y[j + 1] == y[i]) ++j;
            if (j + 1 >= seg_end) break;
            if (y[i - 1] < y[i] && y[j + 1] < y[j]) {
                const double h = y[i];
                double left_min = h, right_min = h;
                for (std::size_t a = i; a-- > seg_begin;) {
                    if (y[a] > h) break;
                    left_min = std::min(left_min, y[a]);
                }
                for (std::size_t b = j + 1; b < seg_end; ++b) {
                    if (y[b] > h) break;
                    right_min = std::min(right_min, y[b]);
                }
                const double prom = h - std::max(left_min, right_min);
                if (prom >= threshold && prom > 0.0) {
                    double e = x[i];
                    double height = h;
                    if (i == j) {
                        // vertex of the parabola through the three samples
                        const double x0 = x[i - 1], x1 = x[i], x2 = x[i + 1];
                        const double y0 = y[i - 1], y1 = y[i], y2 = y[i + 1];
                        const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
                        const double curv = (d12 - d01) / (x2 - x0);
                        if (curv < 0.0) {
                            e = std::clamp(0.5 * (x0 + x1) - d01 / (2.0 * curv), x0, x2);
                            height = y0 + d01 * (e - x0) + curv * (e - x0) * (e - x1);
                        }
                    } else {
                        e = 0.5 * (x[i] + x[j]);
                    }
                    const double level = h - 0.5 * prom;
                    double left_x = x[seg_begin], right_x = x[seg_end - 1];
                    for (std::size_t a = i; a-- > seg_begin;) {
                        if (y[a] < level) {
                            left_x = x[a] + (level - y[a]) / (y[a + 1] - y[a]) * (x[a + 1] - x[a]);
                            break;
                        }
                    }
                    for (std::size_t b = j + 1; b < seg_end; ++b) {
                        if (y[b] < level) {
                            right_x = x[b] - (level - y[b]) / (y[b - 1] - y[b]) * (x[b] - x[b - 1]);
                            break;
                        }
                    }
                    peaks.push_back({label, e, height, right_x - left_x, prom});
                }
            }
            i = j + 1;
        }
        seg_begin = seg_end;
    }
    return peaks;
}

}  // namespace detail

/// Peaks of the region DOS and of every channel's dwell time (plus their sum,
/// labelled "ALL"), with each DOS peak matched to the nearest dwell-time peak.
/// `resolution` defaults to the largest energy spacing of the reports.
inline ResonanceTable find_resonances(std::span<const DwellReport> reports, double min_prominence = default_min_prominence,
                                      std::optional<double> resolution = std::nullopt) {
    if (reports.size() < 3) throw Error(ErrorKind::insufficient_data, "peak search needs at least 3 energies");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = reports.size();
    std::vector<double> x(n), dos(n, nan), sum(n, nan);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = reports[i].energy;
        if (i > 0 && !(x[i] > x[i - 1])) throw Error(ErrorKind::validation, "reports must be sorted by increasing energy");
        if (reports[i].skipped) continue;
        dos[i] = std::isnan(reports[i].dos_green) ? reports[i].dos_sum : reports[i].dos_green;
        sum[i] = reports[i].tau_sum();
        for (const auto& c : reports[i].channels)
            if (std::find(ids.begin(), ids.end(), c.id) == ids.end()) ids.push_back(c.id);
    }
    std::sort(ids.begin(), ids.end());

    ResonanceTable table;
    if (resolution) {
        table.resolution = *resolution;
    } else {
        for (std::size_t i = 1; i < n; ++i) table.resolution = std::max(table.resolution, x[i] - x[i - 1]);
    }

    table.dos_peaks = detail::series_peaks("dos", x, dos, min_prominence);
    for (const auto& id : ids) {
        std::vector<double> tau(n, nan);
        for (std::size_t i = 0; i < n; ++i) {
            if (reports[i].skipped) continue;
            for (const auto& c : reports[i].channels)
                if (c.id == id) tau[i] = c.tau_direct;
        }
        auto p = detail::series_peaks(id, x, tau, min_prominence);
        table.dwell_peaks.insert(table.dwell_peaks.end(), p.begin(), p.end());
    }
    auto sum_peaks = detail::series_peaks("ALL", x, sum, min_prominence);
    table.dwell_peaks.insert(table.dwell_peaks.end(), sum_peaks.begin(), sum_peaks.end());
    std::stable_sort(table.dwell_peaks.begin(), table.dwell_peaks.end(),
                     [](const Peak& a, const Peak& b) { return a.energy < b.energy; });

    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < table.dos_peaks.size(); ++k) {
        const double e = table.dos_peaks[k].energy;
        PeakMatch m{k, "", inf, false, inf, false};
        for (const auto& p : table.dwell_peaks) {
            double d = std::abs(p.energy - e);
            if (p.channel == "ALL") {
                m.sum_distance = std::min(m.sum_distance, d);
            } else if (d < m.distance || (d == m.distance && p.channel < m.channel)) {
                m.distance = d;
                m.channel = p.channel;
            }
        }
        m.matched = m.distance <= table.resolution;
        m.sum_matched = m.sum_distance <= table.resolution;
        table.matches.push_back(m);
    }
    return table;
}

}  // namespace dwelldos
