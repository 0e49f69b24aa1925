#include "kaneq/ref_kernels.hpp"

#include <cmath>
#include <cstring>

namespace kaneq::ref {

double spline_value_basis(const double* a, int g, double t, double x) {
    if (x < -4.0) x = -4.0;
    if (x > 4.0) x = 4.0;
    double acc = 0.0;
    for (int k = 0; k < g; ++k) {
        double u = 1.0 - std::abs(x + 4.0 - k * t) / t;
        if (u > 0.0) acc += a[k] * u;
    }
    return acc;
}

// d(phi)/dx via the basis sum, with the same right-segment kink convention
// as the production path and zero slope outside the grid.
static double spline_slope_basis(const double* a, int g, double t, double x) {
    if (x <= -4.0 || x >= 4.0) return 0.0;
    int k = 0;
    while (k < g - 2 && x >= -4.0 + (k + 1) * t) ++k;
    return (a[k + 1] - a[k]) / t;
}

// Basis weight of coefficient k at x, after endpoint clamping.
static double basis_weight(int k, int g, double t, double x) {
    if (x <= -4.0) return k == 0 ? 1.0 : 0.0;
    if (x >= 4.0) return k == g - 1 ? 1.0 : 0.0;
    double u = 1.0 - std::abs(x + 4.0 - k * t) / t;
    return u > 0.0 ? u : 0.0;
}

void conv_forward(const double* x, long n_in, int c_in,
                  const double* w, const double* bias, const uint8_t* mask,
                  int c_out, int k, int s, bool relu,
                  double* y, long n_pos) {
    for (int i = 0; i < c_out; ++i)
        for (long p = 0; p < n_pos; ++p) {
            double acc = bias ? bias[i] : 0.0;
            for (int j = 0; j < c_in; ++j)
                for (int m = 0; m < k; ++m) {
                    long c = (static_cast<long>(i) * c_in + j) * k + m;
                    if (mask[c]) acc += w[c] * x[static_cast<long>(j) * n_in + p * s + m];
                }
            if (relu && acc < 0.0) acc = 0.0;
            y[static_cast<long>(i) * n_pos + p] = acc;
        }
}

void conv_grad(const double* x, long n_in, int c_in,
               const double* w, const uint8_t* mask,
               const double* gy, long n_pos,
               int c_out, int k, int s,
               double* gw, double* gb, double* gx) {
    std::memset(gw, 0, sizeof(double) * static_cast<size_t>(c_out) * c_in * k);
    if (gb) std::memset(gb, 0, sizeof(double) * static_cast<size_t>(c_out));
    if (gx) std::memset(gx, 0, sizeof(double) * static_cast<size_t>(c_in) * n_in);
    for (int i = 0; i < c_out; ++i)
        for (long p = 0; p < n_pos; ++p) {
            double up = gy[static_cast<long>(i) * n_pos + p];
            if (gb) gb[i] += up;
            for (int j = 0; j < c_in; ++j)
                for (int m = 0; m < k; ++m) {
                    long c = (static_cast<long>(i) * c_in + j) * k + m;
                    if (!mask[c]) continue;
                    gw[c] += up * x[static_cast<long>(j) * n_in + p * s + m];
                    if (gx) gx[static_cast<long>(j) * n_in + p * s + m] += up * w[c];
                }
        }
}

void kan_forward(const double* x, long n_in, int c_in,
                 const double* coeffs, const uint8_t* mask,
                 int c_out, int k, int s, int g, double t,
                 double* y, long n_pos) {
    for (int i = 0; i < c_out; ++i)
        for (long p = 0; p < n_pos; ++p) {
            double acc = 0.0;
            for (int j = 0; j < c_in; ++j)
                for (int m = 0; m < k; ++m) {
                    long c = (static_cast<long>(i) * c_in + j) * k + m;
                    if (!mask[c]) continue;
                    acc += spline_value_basis(coeffs + c * g, g, t,
                                              x[static_cast<long>(j) * n_in + p * s + m]);
                }
            y[static_cast<long>(i) * n_pos + p] = acc;
        }
}

void kan_grad(const double* x, long n_in, int c_in,
              const double* coeffs, const uint8_t* mask,
              const double* gy, long n_pos,
              int c_out, int k, int s, int g, double t,
              double* gcoeffs, double* gx) {
    std::memset(gcoeffs, 0, sizeof(double) * static_cast<size_t>(c_out) * c_in * k * g);
    if (gx) std::memset(gx, 0, sizeof(double) * static_cast<size_t>(c_in) * n_in);
    for (int i = 0; i < c_out; ++i)
        for (long p = 0; p < n_pos; ++p) {
            double up = gy[static_cast<long>(i) * n_pos + p];
            if (up == 0.0) continue;
            for (int j = 0; j < c_in; ++j)
                for (int m = 0; m < k; ++m) {
                    long c = (static_cast<long>(i) * c_in + j) * k + m;
                    if (!mask[c]) continue;
                    double xv = x[static_cast<long>(j) * n_in + p * s + m];
                    for (int kk = 0; kk < g; ++kk)
                        gcoeffs[c * g + kk] += up * basis_weight(kk, g, t, xv);
                    if (gx)
                        gx[static_cast<long>(j) * n_in + p * s + m] +=
                            up * spline_slope_basis(coeffs + c * g, g, t, xv);
                }
        }
}

} // namespace kaneq::ref
