#pragma once

#include <cstdint>

// OpenMP-parallel layer kernels. All tensors are channel-major
// ([channel][position], row-major) and weights are [c_out][c_in][tap]
// (KAN coefficients add a trailing grid index). Parallel loops split over
// independent output elements with serial inner accumulation, so results
// are bit-identical for any thread count.

namespace kaneq::kernels {

void conv_forward(const double* x, long n_in, int c_in,
                  const double* w, const double* bias, const uint8_t* mask,
                  int c_out, int k, int s, bool relu,
                  double* y, long n_pos);

// gy must already include the activation derivative of this layer.
void conv_grad_params(const double* x, long n_in, int c_in,
                      const double* gy, long n_pos,
                      int c_out, int k, int s, const uint8_t* mask,
                      double* gw, double* gb);

void conv_grad_input(const double* w, const uint8_t* mask,
                     int c_in, int c_out, int k, int s,
                     const double* gy, long n_pos,
                     double* gx, long n_in);

void kan_forward(const double* x, long n_in, int c_in,
                 const double* coeffs, const uint8_t* mask,
                 int c_out, int k, int s, int g, double t,
                 double* y, long n_pos);

void kan_grad_params(const double* x, long n_in, int c_in,
                     const double* gy, long n_pos,
                     int c_out, int k, int s, int g, double t,
                     const uint8_t* mask, double* gcoeffs);

void kan_grad_input(const double* x, long n_in, int c_in,
                    const double* coeffs, const uint8_t* mask,
                    int c_out, int k, int s, int g, double t,
                    const double* gy, long n_pos,
                    double* gx);

} // namespace kaneq::kernels
