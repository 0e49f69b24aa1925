#pragma once

#include <cstdint>
#include <vector>

// Serial reference implementations, kept deliberately naive and independent
// of the parallel kernels: convolution as scatter-style nested loops and
// splines evaluated through the triangular basis sum instead of the segment
// slope/offset path. Used by the tests as oracles and by the benchmark as
// the baseline.

namespace kaneq::ref {

// Basis-sum evaluation: sum_k a[k] * tri(x + 4 - k*t). The input is clamped
// to [-4, 4] first, matching the production clamp contract.
double spline_value_basis(const double* a, int g, double t, double x);

void conv_forward(const double* x, long n_in, int c_in,
                  const double* w, const double* bias, const uint8_t* mask,
                  int c_out, int k, int s, bool relu,
                  double* y, long n_pos);

void conv_grad(const double* x, long n_in, int c_in,
               const double* w, const uint8_t* mask,
               const double* gy, long n_pos,
               int c_out, int k, int s,
               double* gw, double* gb, double* gx);

void kan_forward(const double* x, long n_in, int c_in,
                 const double* coeffs, const uint8_t* mask,
                 int c_out, int k, int s, int g, double t,
                 double* y, long n_pos);

void kan_grad(const double* x, long n_in, int c_in,
              const double* coeffs, const uint8_t* mask,
              const double* gy, long n_pos,
              int c_out, int k, int s, int g, double t,
              double* gcoeffs, double* gx);

} // namespace kaneq::ref
