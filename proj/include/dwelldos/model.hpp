#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwelldos/error.hpp"
#include "dwelldos/rng.hpp"
#include "dwelldos/units.hpp"

namespace dwelldos {

inline constexpr double default_threshold_margin = 1e-6;

// ---------------------------------------------------------------------------
// 1D layered potentials
// ---------------------------------------------------------------------------

struct Layer {
    double thickness;
    double potential;

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Piecewise-constant potential: v_left for x < 0, the layers on [0, L],
/// v_right for x > L. The region of interest is exactly [0, L].
class LayerStack {
public:
    LayerStack(double v_left, std::vector<Layer> layers, double v_right)
        : v_left_(v_left), v_right_(v_right), layers_(std::move(layers)) {
        if (layers_.empty()) throw Error(ErrorKind::validation, "layer stack needs at least one layer");
        if (!std::isfinite(v_left_) || !std::isfinite(v_right_))
            throw Error(ErrorKind::validation, "asymptotic potentials must be finite");
        edges_.reserve(layers_.size() + 1);
        edges_.push_back(0.0);
        for (std::size_t j = 0; j < layers_.size(); ++j) {
            const auto& layer = layers_[j];
            if (!(layer.thickness > 0.0) || !std::isfinite(layer.thickness))
                throw Error(ErrorKind::validation,
                            "layer " + std::to_string(j) + " has non-positive thickness");
            if (!std::isfinite(layer.potential))
                throw Error(ErrorKind::validation, "layer " + std::to_string(j) + " has non-finite potential");
            edges_.push_back(edges_.back() + layer.thickness);
        }
    }

    double v_left() const { return v_left_; }
    double v_right() const { return v_right_; }
    std::span<const Layer> layers() const { return layers_; }
    std::size_t size() const { return layers_.size(); }
    const Layer& layer(std::size_t j) const { return layers_[j]; }

    /// Interface positions x_0 = 0 < x_1 < ... < x_n = L.
    std::span<const double> edges() const { return edges_; }
    double length() const { return edges_.back(); }

    /// Index of the layer containing x in [0, L]; interface points belong to
    /// the layer on their right, except x = L.
    std::size_t layer_index(double x) const {
        auto it = std::upper_bound(edges_.begin() + 1, edges_.end() - 1, x);
        return static_cast<std::size_t>(it - edges_.begin()) - 1;
    }

    double potential_at(double x) const {
        if (x < 0.0) return v_left_;
        if (x > length()) return v_right_;
        return layers_[layer_index(x)].potential;
    }

    /// Same geometry with every layer potential raised by dv.
    LayerStack shifted(double dv) const {
        auto layers = layers_;
        for (auto& layer : layers) layer.potential += dv;
        return LayerStack(v_left_, std::move(layers), v_right_);
    }

    /// Exact mirror symmetry: palindromic layers and equal asymptotes.
    bool palindromic() const {
        if (v_left_ != v_right_) return false;
        return std::equal(layers_.begin(), layers_.end(), layers_.rbegin());
    }

    friend bool operator==(const LayerStack& a, const LayerStack& b) {
        return a.v_left_ == b.v_left_ && a.v_right_ == b.v_right_ && a.layers_ == b.layers_;
    }

private:
    double v_left_;
    double v_right_;
    std::vector<Layer> layers_;
    std::vector<double> edges_;
};

inline LayerStack build_stack(std::vector<Layer> layers, double v_left = 0.0, double v_right = 0.0) {
    return LayerStack(v_left, std::move(layers), v_right);
}

inline LayerStack rectangular_barrier(double thickness, double height, double v_outside = 0.0) {
    return LayerStack(v_outside, {{thickness, height}}, v_outside);
}

/// Two identical barriers around a well of potential well_potential.
inline LayerStack double_barrier(double barrier_thickness, double barrier_height, double well_width,
                                 double well_potential = 0.0, double v_outside = 0.0) {
    return LayerStack(v_outside,
                      {{barrier_thickness, barrier_height},
                       {well_width, well_potential},
                       {barrier_thickness, barrier_height}},
                      v_outside);
}

struct RandomStackParams {
    std::uint64_t seed = 42;
    std::size_t layers = 5;
    double v_min = 0.0;
    double v_max = 2.0;
    double d_min = 0.5;
    double d_max = 1.5;
    double v_left = 0.0;
    double v_right = 0.0;
};

/// Draws (thickness, potential) per layer, thickness first, from one
/// XorShift64Star stream.
inline LayerStack random_stack(const RandomStackParams& p) {
    if (p.layers == 0) throw Error(ErrorKind::validation, "random stack needs at least one layer");
    if (!(p.d_min > 0.0) || p.d_max < p.d_min)
        throw Error(ErrorKind::validation, "random stack thickness range must be positive and ordered");
    if (p.v_max < p.v_min) throw Error(ErrorKind::validation, "random stack potential range is inverted");
    XorShift64Star rng(p.seed);
    std::vector<Layer> layers;
    layers.reserve(p.layers);
    for (std::size_t j = 0; j < p.layers; ++j) {
        double d = rng.uniform(p.d_min, p.d_max);
        double v = rng.uniform(p.v_min, p.v_max);
        layers.push_back({d, v});
    }
    return LayerStack(p.v_left, std::move(layers), p.v_right);
}

/// Random palindromic stack: the first ceil(n/2) layers are drawn and mirrored.
inline LayerStack random_symmetric_stack(const RandomStackParams& p) {
    RandomStackParams half = p;
    half.layers = (p.layers + 1) / 2;
    auto base = random_stack(half);
    std::vector<Layer> layers(base.layers().begin(), base.layers().end());
    for (std::size_t j = p.layers / 2; j-- > 0;) layers.push_back(base.layer(j));
    return LayerStack(p.v_left, std::move(layers), p.v_left);
}

// ---------------------------------------------------------------------------
// Quasi-1D lattices
// ---------------------------------------------------------------------------

/// Transverse energy of mode m (1-based) of a W-site hard-wall chain with hopping -1.
inline double transverse_energy(int width, int mode) {
    return -2.0 * std::cos(mode * pi / (width + 1));
}

/// Normalized transverse profile value chi_m(j) for row j (1-based).
inline double transverse_profile(int width, int mode, int row) {
    return std::sqrt(2.0 / (width + 1)) * std::sin(mode * pi * row / (width + 1));
}

/// Rectangle of device sites [col_begin, col_end) x [row_begin, row_end).
struct LatticeRegion {
    int col_begin = 0;
    int col_end = 0;
    int row_begin = 0;
    int row_end = 0;

    bool contains(int col, int row) const {
        return col >= col_begin && col < col_end && row >= row_begin && row < row_end;
    }
    int site_count() const { return (col_end - col_begin) * (row_end - row_begin); }

    friend bool operator==(const LatticeRegion&, const LatticeRegion&) = default;
};

/// Width-W strip of Lx columns between two ideal leads of the same width.
/// All nearest-neighbour bonds carry hopping -1; leads have zero on-site energy.
/// Sites are indexed column-major: index = col * W + row (row 0-based).
class LatticeSystem {
public:
    LatticeSystem(int width, int length, std::vector<double> onsite)
        : width_(width), length_(length), onsite_(std::move(onsite)) {
        if (width_ < 1) throw Error(ErrorKind::validation, "lattice width must be >= 1");
        if (length_ < 1) throw Error(ErrorKind::validation, "lattice length must be >= 1");
        if (onsite_.size() != static_cast<std::size_t>(width_) * length_)
            throw Error(ErrorKind::validation, "on-site map must have width*length entries");
        for (double v : onsite_)
            if (!std::isfinite(v)) throw Error(ErrorKind::validation, "on-site energies must be finite");
    }

    static LatticeSystem clean(int width, int length) {
        return LatticeSystem(width, length,
                             std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) *
                                                 static_cast<std::size_t>(std::max(length, 0)), 0.0));
    }

    /// On-site energies uniform in [-amplitude, amplitude], drawn column by column.
    static LatticeSystem disordered(int width, int length, std::uint64_t seed, double amplitude) {
        auto sys = clean(width, length);
        XorShift64Star rng(seed);
        for (double& v : sys.onsite_) v = rng.uniform(-amplitude, amplitude);
        return sys;
    }

    int width() const { return width_; }
    int length() const { return length_; }
    int site_count() const { return width_ * length_; }
    int index(int col, int row) const { return col * width_ + row; }
    double onsite(int col, int row) const { return onsite_[static_cast<std::size_t>(index(col, row))]; }
    std::span<const double> onsite() const { return onsite_; }

    LatticeRegion full_region() const { return {0, length_, 0, width_}; }

    void validate(const LatticeRegion& region) const {
        if (region.col_begin < 0 || region.row_begin < 0 || region.col_end > length_ ||
            region.row_end > width_ || region.col_begin >= region.col_end || region.row_begin >= region.row_end)
            throw Error(ErrorKind::validation, "region must be a non-empty sub-rectangle of the device");
    }

    /// Adds dv to every on-site energy inside region.
    LatticeSystem shifted(const LatticeRegion& region, double dv) const {
        auto sys = *this;
        for (int c = region.col_begin; c < region.col_end; ++c)
            for (int j = region.row_begin; j < region.row_end; ++j)
                sys.onsite_[static_cast<std::size_t>(index(c, j))] += dv;
        return sys;
    }

    bool mirror_symmetric() const {
        for (int c = 0; c < length_; ++c)
            for (int j = 0; j < width_; ++j)
                if (onsite(c, j) != onsite(length_ - 1 - c, j)) return false;
        return true;
    }

private:
    int width_;
    int length_;
    std::vector<double> onsite_;
};

// ---------------------------------------------------------------------------
// Channel thresholds
// ---------------------------------------------------------------------------

inline std::vector<double> channel_thresholds(const LayerStack& stack) {
    std::vector<double> t{stack.v_left(), stack.v_right()};
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

/// Band edges eps_m +- 2 of every transverse mode.
inline std::vector<double> channel_thresholds(const LatticeSystem& sys) {
    std::vector<double> t;
    for (int m = 1; m <= sys.width(); ++m) {
        double eps = transverse_energy(sys.width(), m);
        t.push_back(eps - 2.0);
        t.push_back(eps + 2.0);
    }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

inline double distance_to_threshold(double energy, std::span<const double> thresholds) {
    double d = std::numeric_limits<double>::infinity();
    for (double t : thresholds) d = std::min(d, std::abs(energy - t));
    return d;
}

// ---------------------------------------------------------------------------
// Energy grids and spectral weights
// ---------------------------------------------------------------------------

struct GridPoint {
    double energy;
    bool near_threshold;
};

class EnergyGrid {
public:
    EnergyGrid(double e_min, double e_max, std::size_t count, double threshold_margin = default_threshold_margin)
        : e_min_(e_min), e_max_(e_max), count_(count), margin_(threshold_margin) {
        if (!(e_min_ < e_max_)) throw Error(ErrorKind::validation, "energy grid needs e_min < e_max");
        if (count_ < 1) throw Error(ErrorKind::validation, "energy grid needs at least one point");
        if (!(margin_ >= 0.0)) throw Error(ErrorKind::validation, "threshold margin must be non-negative");
    }

    double e_min() const { return e_min_; }
    double e_max() const { return e_max_; }
    std::size_t count() const { return count_; }
    double threshold_margin() const { return margin_; }
    double step() const { return count_ > 1 ? (e_max_ - e_min_) / static_cast<double>(count_ - 1) : 0.0; }

    double energy(std::size_t i) const {
        if (count_ == 1) return e_min_;
        if (i + 1 == count_) return e_max_;
        return e_min_ + static_cast<double>(i) * step();
    }

    std::vector<double> energies() const {
        std::vector<double> e(count_);
        for (std::size_t i = 0; i < count_; ++i) e[i] = energy(i);
        return e;
    }

    /// Every grid energy, flagged when it lies within the margin of a threshold.
    std::vector<GridPoint> classify(std::span<const double> thresholds) const {
        std::vector<GridPoint> pts;
        pts.reserve(count_);
        for (std::size_t i = 0; i < count_; ++i) {
            double e = energy(i);
            pts.push_back({e, distance_to_threshold(e, thresholds) <= margin_});
        }
        return pts;
    }

private:
    double e_min_;
    double e_max_;
    std::size_t count_;
    double margin_;
};

struct WeightSample {
    double energy;
    double weight;
};

/// |alpha(E)|^2 sampled on increasing energies; trapezoid total is 1.
class SpectralWeight {
public:
    explicit SpectralWeight(std::vector<WeightSample> samples) : samples_(std::move(samples)) {
        if (samples_.empty()) throw Error(ErrorKind::validation, "spectral weight needs samples");
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            if (!(samples_[i].weight >= 0.0)) throw Error(ErrorKind::validation, "spectral weights must be >= 0");
            if (i > 0 && !(samples_[i].energy > samples_[i - 1].energy))
                throw Error(ErrorKind::validation, "spectral weight energies must increase strictly");
        }
        double total = samples_.size() == 1 ? samples_[0].weight : trapezoid_total(samples_);
        if (std::abs(total - 1.0) > 1e-9)
            throw Error(ErrorKind::validation, "spectral weight must integrate to 1 (got " + std::to_string(total) + ")");
    }

    std::span<const WeightSample> samples() const { return samples_; }

    /// Single sample of unit weight: the stationary-state limit.
    static SpectralWeight delta(double energy) { return SpectralWeight({{energy, 1.0}}); }

    static SpectralWeight gaussian(double center, double sigma, double e_min, double e_max, std::size_t count) {
        if (!(sigma > 0.0)) throw Error(ErrorKind::validation, "gaussian width must be positive");
        return normalized(e_min, e_max, count, [&](double e) {
            double z = (e - center) / sigma;
            return std::exp(-0.5 * z * z);
        });
    }

    static SpectralWeight uniform(double e_min, double e_max, std::size_t count) {
        return normalized(e_min, e_max, count, [](double) { return 1.0; });
    }

    /// Samples f on a uniform grid and rescales to unit trapezoid total.
    template <class F>
    static SpectralWeight normalized(double e_min, double e_max, std::size_t count, F&& f) {
        if (count < 2 || !(e_max > e_min)) throw Error(ErrorKind::validation, "weight grid needs >= 2 points on e_min < e_max");
        std::vector<WeightSample> s(count);
        double h = (e_max - e_min) / static_cast<double>(count - 1);
        for (std::size_t i = 0; i < count; ++i) {
            double e = i + 1 == count ? e_max : e_min + h * static_cast<double>(i);
            s[i] = {e, f(e)};
        }
        double total = trapezoid_total(s);
        if (!(total > 0.0)) throw Error(ErrorKind::validation, "weight function vanishes on the grid");
        for (auto& x : s) x.weight /= total;
        return SpectralWeight(std::move(s));
    }

private:
    static double trapezoid_total(std::span<const WeightSample> s) {
        double total = 0.0;
        for (std::size_t i = 1; i < s.size(); ++i)
            total += 0.5 * (s[i].weight + s[i - 1].weight) * (s[i].energy - s[i - 1].energy);
        return total;
    }

    std::vector<WeightSample> samples_;
};

}  // namespace dwelldos
