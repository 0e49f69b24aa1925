#include "kaneq/kernels.hpp"

#include "kaneq/spline.hpp"

namespace kaneq::kernels {

void conv_forward(const double* x, long n_in, int c_in,
                  const double* w, const double* bias, const uint8_t* mask,
                  int c_out, int k, int s, bool relu,
                  double* y, long n_pos) {
    (void)n_in;
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < c_out; ++i) {
        for (long p = 0; p < n_pos; ++p) {
            double acc = bias ? bias[i] : 0.0;
            const long base = p * s;
            for (int j = 0; j < c_in; ++j) {
                const double* xj = x + static_cast<long>(j) * n_in + base;
                const double* wij = w + (static_cast<long>(i) * c_in + j) * k;
                const uint8_t* mij = mask + (static_cast<long>(i) * c_in + j) * k;
                for (int m = 0; m < k; ++m)
                    if (mij[m]) acc += wij[m] * xj[m];
            }
            if (relu && acc < 0.0) acc = 0.0;
            y[static_cast<long>(i) * n_pos + p] = acc;
        }
    }
}

void conv_grad_params(const double* x, long n_in, int c_in,
                      const double* gy, long n_pos,
                      int c_out, int k, int s, const uint8_t* mask,
                      double* gw, double* gb) {
    const long n_conn = static_cast<long>(c_out) * c_in * k;
#pragma omp parallel for schedule(static)
    for (long c = 0; c < n_conn; ++c) {
        if (!mask[c]) {
            gw[c] = 0.0;
            continue;
        }
        const int m = static_cast<int>(c % k);
        const int j = static_cast<int>((c / k) % c_in);
        const int i = static_cast<int>(c / (static_cast<long>(k) * c_in));
        const double* gyi = gy + static_cast<long>(i) * n_pos;
        const double* xj = x + static_cast<long>(j) * n_in + m;
        double acc = 0.0;
        for (long p = 0; p < n_pos; ++p) acc += gyi[p] * xj[p * s];
        gw[c] = acc;
    }
    if (gb) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < c_out; ++i) {
            const double* gyi = gy + static_cast<long>(i) * n_pos;
            double acc = 0.0;
            for (long p = 0; p < n_pos; ++p) acc += gyi[p];
            gb[i] = acc;
        }
    }
}

void conv_grad_input(const double* w, const uint8_t* mask,
                     int c_in, int c_out, int k, int s,
                     const double* gy, long n_pos,
                     double* gx, long n_in) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int j = 0; j < c_in; ++j) {
        for (long n = 0; n < n_in; ++n) {
            // positions p with n = p*s + m, 0 <= m < k
            long p_lo = (n - k + s) / s; // ceil((n-k+1)/s) for n-k+1 <= n
            if (p_lo < 0) p_lo = 0;
            long p_hi = n / s;
            if (p_hi > n_pos - 1) p_hi = n_pos - 1;
            double acc = 0.0;
            for (long p = p_lo; p <= p_hi; ++p) {
                const int m = static_cast<int>(n - p * s);
                if (m >= k) continue;
                for (int i = 0; i < c_out; ++i) {
                    const long c = (static_cast<long>(i) * c_in + j) * k + m;
                    if (mask[c]) acc += gy[static_cast<long>(i) * n_pos + p] * w[c];
                }
            }
            gx[static_cast<long>(j) * n_in + n] = acc;
        }
    }
}

void kan_forward(const double* x, long n_in, int c_in,
                 const double* coeffs, const uint8_t* mask,
                 int c_out, int k, int s, int g, double t,
                 double* y, long n_pos) {
    const double t_inv = 1.0 / t;
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < c_out; ++i) {
        for (long p = 0; p < n_pos; ++p) {
            double acc = 0.0;
            const long base = p * s;
            for (int j = 0; j < c_in; ++j) {
                const double* xj = x + static_cast<long>(j) * n_in + base;
                const long conn0 = (static_cast<long>(i) * c_in + j) * k;
                for (int m = 0; m < k; ++m) {
                    if (!mask[conn0 + m]) continue;
                    const double* a = coeffs + (conn0 + m) * g;
                    acc += detail::spline_value(a, g, t, t_inv, xj[m]);
                }
            }
            y[static_cast<long>(i) * n_pos + p] = acc;
        }
    }
}

void kan_grad_params(const double* x, long n_in, int c_in,
                     const double* gy, long n_pos,
                     int c_out, int k, int s, int g, double t,
                     const uint8_t* mask, double* gcoeffs) {
    const double t_inv = 1.0 / t;
    const long n_conn = static_cast<long>(c_out) * c_in * k;
#pragma omp parallel for schedule(static)
    for (long c = 0; c < n_conn; ++c) {
        double* ga = gcoeffs + c * g;
        for (int kk = 0; kk < g; ++kk) ga[kk] = 0.0;
        if (!mask[c]) continue;
        const int m = static_cast<int>(c % k);
        const int j = static_cast<int>((c / k) % c_in);
        const int i = static_cast<int>(c / (static_cast<long>(k) * c_in));
        const double* gyi = gy + static_cast<long>(i) * n_pos;
        const double* xj = x + static_cast<long>(j) * n_in + m;
        for (long p = 0; p < n_pos; ++p) {
            const double up = gyi[p];
            if (up == 0.0) continue;
            const double xv = xj[p * s];
            if (xv <= -4.0) {
                ga[0] += up;
            } else if (xv >= 4.0) {
                ga[g - 1] += up;
            } else {
                const int seg = detail::seg_index(xv, t, t_inv, g);
                const double u = (xv - (-4.0 + seg * t)) * t_inv;
                ga[seg] += up * (1.0 - u);
                ga[seg + 1] += up * u;
            }
        }
    }
}

void kan_grad_input(const double* x, long n_in, int c_in,
                    const double* coeffs, const uint8_t* mask,
                    int c_out, int k, int s, int g, double t,
                    const double* gy, long n_pos,
                    double* gx) {
    const double t_inv = 1.0 / t;
#pragma omp parallel for collapse(2) schedule(static)
    for (int j = 0; j < c_in; ++j) {
        for (long n = 0; n < n_in; ++n) {
            const double xv = x[static_cast<long>(j) * n_in + n];
            if (xv <= -4.0 || xv >= 4.0) {
                gx[static_cast<long>(j) * n_in + n] = 0.0;
                continue;
            }
            const int seg = detail::seg_index(xv, t, t_inv, g);
            long p_lo = (n - k + s) / s;
            if (p_lo < 0) p_lo = 0;
            long p_hi = n / s;
            if (p_hi > n_pos - 1) p_hi = n_pos - 1;
            double acc = 0.0;
            for (long p = p_lo; p <= p_hi; ++p) {
                const int m = static_cast<int>(n - p * s);
                if (m >= k) continue;
                for (int i = 0; i < c_out; ++i) {
                    const long c = (static_cast<long>(i) * c_in + j) * k + m;
                    if (!mask[c]) continue;
                    const double* a = coeffs + c * g;
                    acc += gy[static_cast<long>(i) * n_pos + p] * (a[seg + 1] - a[seg]) * t_inv;
                }
            }
            gx[static_cast<long>(j) * n_in + n] = acc;
        }
    }
}

} // namespace kaneq::kernels
