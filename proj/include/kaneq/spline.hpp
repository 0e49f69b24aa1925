#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace kaneq {

// Uniform grid of g points spanning [-4, 4] with spacing t = 8/(g-1).
struct SplineGrid {
    int g = 5;
    double t = 2.0;
    double t_inv = 0.5;
    std::vector<double> points;

    explicit SplineGrid(int g_points);

    double point(int k) const { return points[static_cast<size_t>(k)]; }
};

// Triangular basis: unit height at 0, support (-t, t).
inline double tri(double x, double t) {
    if (t <= 0.0) throw std::invalid_argument("tri: spacing must be positive");
    double v = 1.0 - std::abs(x) / t;
    return v > 0.0 ? v : 0.0;
}

namespace detail {

// Segment index k with points[k] <= x < points[k+1], clamped to [0, g-2].
// The guard corrects floor rounding so stored grid points fall exactly at
// the left edge of their segment.
inline int seg_index(double x, double t, double t_inv, int g) {
    int k = static_cast<int>((x + 4.0) * t_inv);
    if (k < 0) k = 0;
    if (k > g - 2) k = g - 2;
    double pk = -4.0 + k * t;
    if (x < pk && k > 0) {
        --k;
    } else if (k < g - 2 && x >= pk + t) {
        ++k;
    }
    return k;
}

// phi(x) for one function, clamped to endpoint values outside [-4, 4].
inline double spline_value(const double* a, int g, double t, double t_inv, double x) {
    if (x <= -4.0) return a[0];
    if (x >= 4.0) return a[g - 1];
    int k = seg_index(x, t, t_inv, g);
    double pk = -4.0 + k * t;
    double s = (a[k + 1] - a[k]) * t_inv;
    return a[k] + s * (x - pk);
}

// Local slope at x (right-segment slope at kinks, 0 outside the grid).
inline double spline_slope(const double* a, int g, double t, double t_inv, double x) {
    if (x <= -4.0 || x >= 4.0) return 0.0;
    int k = seg_index(x, t, t_inv, g);
    return (a[k + 1] - a[k]) * t_inv;
}

} // namespace detail

// Piecewise-linear 1D function interpolating coeffs[k] at the grid points.
struct SplineFunction {
    SplineGrid grid;
    std::vector<double> coeffs;

    explicit SplineFunction(int g_points);
    SplineFunction(int g_points, std::vector<double> c);

    double eval(double x) const {
        return detail::spline_value(coeffs.data(), grid.g, grid.t, grid.t_inv, x);
    }

    // grad_coeffs must hold grid.g entries; they are accumulated into.
    // Returns grad_x.
    double backward(double x, double upstream, double* grad_coeffs) const;
};

// Per-segment (slope, offset) pairs: eval(x) = slope[k] * x + offset[k].
// Inputs outside [-4, 4] are clamped to the grid span first.
struct LutCompiled {
    int g = 0;
    double t = 0.0;
    double t_inv = 0.0;
    std::vector<double> slope;  // g-1 entries
    std::vector<double> offset; // g-1 entries

    double eval(double x) const;
};

LutCompiled compile_lut(const SplineFunction& f);

// Dense KAN layer: n_out x n_in matrix of spline functions, summed per
// output. Masked functions contribute exactly zero and get zero gradient.
struct KanLayerDense {
    int n_in = 1;
    int n_out = 1;
    SplineGrid grid;
    std::vector<double> coeffs; // [i][j][k] row-major
    std::vector<uint8_t> mask;  // [i][j], 1 = active

    KanLayerDense(int n_out_, int n_in_, int g_points);

    size_t fn_offset(int i, int j) const {
        return (static_cast<size_t>(i) * n_in + j) * grid.g;
    }
    SplineFunction function(int i, int j) const;
    void set_function(int i, int j, const std::vector<double>& c);
    bool active(int i, int j) const { return mask[static_cast<size_t>(i) * n_in + j] != 0; }
};

std::vector<double> kan_dense_forward(const KanLayerDense& layer, std::span<const double> x);

struct DenseGrads {
    std::vector<double> coeffs; // same layout as layer.coeffs
    std::vector<double> x;      // n_in
};

DenseGrads kan_dense_backward(const KanLayerDense& layer, std::span<const double> x,
                              std::span<const double> upstream);

std::vector<LutCompiled> compile_lut(const KanLayerDense& layer);

} // namespace kaneq
