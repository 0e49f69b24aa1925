#include "kaneq/spline.hpp"

#include <stdexcept>

namespace kaneq {

SplineGrid::SplineGrid(int g_points) : g(g_points) {
    if (g < 2) throw std::invalid_argument("SplineGrid: need at least 2 grid points");
    t = 8.0 / (g - 1);
    t_inv = (g - 1) / 8.0;
    points.resize(static_cast<size_t>(g));
    for (int k = 0; k < g; ++k) points[static_cast<size_t>(k)] = -4.0 + k * t;
}

SplineFunction::SplineFunction(int g_points)
    : grid(g_points), coeffs(static_cast<size_t>(g_points), 0.0) {}

SplineFunction::SplineFunction(int g_points, std::vector<double> c)
    : grid(g_points), coeffs(std::move(c)) {
    if (coeffs.size() != static_cast<size_t>(grid.g))
        throw std::invalid_argument("SplineFunction: coefficient count != grid points");
}

double SplineFunction::backward(double x, double upstream, double* grad_coeffs) const {
    const int g = grid.g;
    if (x <= -4.0) {
        grad_coeffs[0] += upstream;
        return 0.0;
    }
    if (x >= 4.0) {
        grad_coeffs[g - 1] += upstream;
        return 0.0;
    }
    int k = detail::seg_index(x, grid.t, grid.t_inv, g);
    double pk = -4.0 + k * grid.t;
    double u = (x - pk) * grid.t_inv;
    grad_coeffs[k] += upstream * (1.0 - u);
    grad_coeffs[k + 1] += upstream * u;
    return upstream * (coeffs[static_cast<size_t>(k) + 1] - coeffs[static_cast<size_t>(k)]) * grid.t_inv;
}

double LutCompiled::eval(double x) const {
    if (x < -4.0) x = -4.0;
    if (x > 4.0) x = 4.0;
    int k = detail::seg_index(x, t, t_inv, g);
    return slope[static_cast<size_t>(k)] * x + offset[static_cast<size_t>(k)];
}

LutCompiled compile_lut(const SplineFunction& f) {
    LutCompiled lut;
    lut.g = f.grid.g;
    lut.t = f.grid.t;
    lut.t_inv = f.grid.t_inv;
    lut.slope.resize(static_cast<size_t>(lut.g) - 1);
    lut.offset.resize(static_cast<size_t>(lut.g) - 1);
    for (int k = 0; k + 1 < lut.g; ++k) {
        double s = (f.coeffs[static_cast<size_t>(k) + 1] - f.coeffs[static_cast<size_t>(k)]) * lut.t_inv;
        lut.slope[static_cast<size_t>(k)] = s;
        lut.offset[static_cast<size_t>(k)] = f.coeffs[static_cast<size_t>(k)] - s * f.grid.point(k);
    }
    return lut;
}

KanLayerDense::KanLayerDense(int n_out_, int n_in_, int g_points)
    : n_in(n_in_), n_out(n_out_), grid(g_points) {
    if (n_in < 1 || n_out < 1) throw std::invalid_argument("KanLayerDense: bad dimensions");
    coeffs.assign(static_cast<size_t>(n_out) * n_in * grid.g, 0.0);
    mask.assign(static_cast<size_t>(n_out) * n_in, 1);
}

SplineFunction KanLayerDense::function(int i, int j) const {
    std::vector<double> c(coeffs.begin() + static_cast<long>(fn_offset(i, j)),
                          coeffs.begin() + static_cast<long>(fn_offset(i, j)) + grid.g);
    return SplineFunction(grid.g, std::move(c));
}

void KanLayerDense::set_function(int i, int j, const std::vector<double>& c) {
    if (c.size() != static_cast<size_t>(grid.g))
        throw std::invalid_argument("set_function: coefficient count != grid points");
    std::copy(c.begin(), c.end(), coeffs.begin() + static_cast<long>(fn_offset(i, j)));
}

std::vector<double> kan_dense_forward(const KanLayerDense& layer, std::span<const double> x) {
    if (x.size() != static_cast<size_t>(layer.n_in))
        throw std::invalid_argument("kan_dense_forward: input size != n_in");
    std::vector<double> y(static_cast<size_t>(layer.n_out), 0.0);
    const int g = layer.grid.g;
    for (int i = 0; i < layer.n_out; ++i) {
        double acc = 0.0;
        for (int j = 0; j < layer.n_in; ++j) {
            if (!layer.active(i, j)) continue;
            const double* a = layer.coeffs.data() + layer.fn_offset(i, j);
            acc += detail::spline_value(a, g, layer.grid.t, layer.grid.t_inv, x[static_cast<size_t>(j)]);
        }
        y[static_cast<size_t>(i)] = acc;
    }
    return y;
}

DenseGrads kan_dense_backward(const KanLayerDense& layer, std::span<const double> x,
                              std::span<const double> upstream) {
    if (x.size() != static_cast<size_t>(layer.n_in) ||
        upstream.size() != static_cast<size_t>(layer.n_out))
        throw std::invalid_argument("kan_dense_backward: size mismatch");
    DenseGrads gr;
    gr.coeffs.assign(layer.coeffs.size(), 0.0);
    gr.x.assign(static_cast<size_t>(layer.n_in), 0.0);
    const int g = layer.grid.g;
    const double t = layer.grid.t;
    const double t_inv = layer.grid.t_inv;
    for (int i = 0; i < layer.n_out; ++i) {
        double up = upstream[static_cast<size_t>(i)];
        for (int j = 0; j < layer.n_in; ++j) {
            if (!layer.active(i, j)) continue;
            const double* a = layer.coeffs.data() + layer.fn_offset(i, j);
            double* ga = gr.coeffs.data() + layer.fn_offset(i, j);
            double xv = x[static_cast<size_t>(j)];
            if (xv <= -4.0) {
                ga[0] += up;
            } else if (xv >= 4.0) {
                ga[g - 1] += up;
            } else {
                int k = detail::seg_index(xv, t, t_inv, g);
                double u = (xv - (-4.0 + k * t)) * t_inv;
                ga[k] += up * (1.0 - u);
                ga[k + 1] += up * u;
                gr.x[static_cast<size_t>(j)] += up * (a[k + 1] - a[k]) * t_inv;
            }
        }
    }
    return gr;
}

std::vector<LutCompiled> compile_lut(const KanLayerDense& layer) {
    std::vector<LutCompiled> out;
    out.reserve(static_cast<size_t>(layer.n_out) * layer.n_in);
    for (int i = 0; i < layer.n_out; ++i)
        for (int j = 0; j < layer.n_in; ++j) out.push_back(compile_lut(layer.function(i, j)));
    return out;
}

} // namespace kaneq
