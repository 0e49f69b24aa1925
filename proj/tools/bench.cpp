// Timing comparison between the serial reference kernels and the
// OpenMP-parallel production kernels, plus a cross-check that both paths
// agree numerically.

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "kaneq/channel.hpp"
#include "kaneq/common.hpp"
#include "kaneq/kernels.hpp"
#include "kaneq/ref_kernels.hpp"
#include "kaneq/spline.hpp"

using namespace kaneq;

namespace {

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best * 1e3; // ms
}

void report(const char* name, double serial_ms, double parallel_ms, double rel) {
    printf("%-28s %10.2f ms %10.2f ms %7.2fx   max rel diff %.2e\n", name, serial_ms, parallel_ms,
           serial_ms / parallel_ms, rel);
}

} // namespace

int main(int argc, char** argv) {
    long n_pos = 20000;
    int reps = 3;
    if (argc > 1) n_pos = std::atol(argv[1]);
    if (argc > 2) reps = std::atoi(argv[2]);

    printf("threads: %d, positions: %ld, best of %d\n\n", omp_get_max_threads(), n_pos, reps);
    printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    Rng rng(42);

    // CNN-style conv layer: c_in 8 -> c_out 16, 64 taps, stride 2.
    {
        const int c_in = 8, c_out = 16, k = 64, s = 2;
        const long n_in = n_pos * s + k;
        std::vector<double> x(static_cast<size_t>(c_in) * n_in), w(static_cast<size_t>(c_out) * c_in * k),
            bias(c_out);
        std::vector<uint8_t> mask(static_cast<size_t>(c_out) * c_in * k, 1);
        for (auto& v : x) v = rng.gaussian();
        for (auto& v : w) v = rng.gaussian();
        for (auto& v : bias) v = rng.gaussian();
        std::vector<double> y_ref(static_cast<size_t>(c_out) * n_pos), y_omp(y_ref.size());
        double ts = time_best_of(reps, [&] {
            ref::conv_forward(x.data(), n_in, c_in, w.data(), bias.data(), mask.data(), c_out, k, s,
                              true, y_ref.data(), n_pos);
        });
        double tp = time_best_of(reps, [&] {
            kernels::conv_forward(x.data(), n_in, c_in, w.data(), bias.data(), mask.data(), c_out,
                                  k, s, true, y_omp.data(), n_pos);
        });
        report("conv forward", ts, tp, max_rel_diff(y_ref, y_omp));

        std::vector<double> gy(y_ref.size());
        for (auto& v : gy) v = rng.gaussian();
        std::vector<double> gw_ref(w.size()), gb_ref(bias.size()), gx_ref(x.size());
        std::vector<double> gw_omp(w.size()), gb_omp(bias.size()), gx_omp(x.size());
        ts = time_best_of(reps, [&] {
            ref::conv_grad(x.data(), n_in, c_in, w.data(), mask.data(), gy.data(), n_pos, c_out, k,
                           s, gw_ref.data(), gb_ref.data(), gx_ref.data());
        });
        tp = time_best_of(reps, [&] {
            kernels::conv_grad_params(x.data(), n_in, c_in, gy.data(), n_pos, c_out, k, s,
                                      mask.data(), gw_omp.data(), gb_omp.data());
            kernels::conv_grad_input(w.data(), mask.data(), c_in, c_out, k, s, gy.data(), n_pos,
                                     gx_omp.data(), n_in);
        });
        report("conv backward", ts, tp,
               std::max(max_rel_diff(gw_ref, gw_omp), max_rel_diff(gx_ref, gx_omp)));
    }

    // KAN conv layer: c_in 8 -> c_out 16, 64 taps, stride 2, G = 9.
    {
        const int c_in = 8, c_out = 16, k = 64, s = 2, g = 9;
        SplineGrid grid(g);
        const long n_in = n_pos * s + k;
        std::vector<double> x(static_cast<size_t>(c_in) * n_in),
            coeffs(static_cast<size_t>(c_out) * c_in * k * g);
        std::vector<uint8_t> mask(static_cast<size_t>(c_out) * c_in * k, 1);
        for (auto& v : x) v = rng.gaussian();
        for (auto& v : coeffs) v = rng.gaussian();
        std::vector<double> y_ref(static_cast<size_t>(c_out) * n_pos), y_omp(y_ref.size());
        double ts = time_best_of(reps, [&] {
            ref::kan_forward(x.data(), n_in, c_in, coeffs.data(), mask.data(), c_out, k, s, g,
                             grid.t, y_ref.data(), n_pos);
        });
        double tp = time_best_of(reps, [&] {
            kernels::kan_forward(x.data(), n_in, c_in, coeffs.data(), mask.data(), c_out, k, s, g,
                                 grid.t, y_omp.data(), n_pos);
        });
        report("kan forward", ts, tp, max_rel_diff(y_ref, y_omp));

        std::vector<double> gy(y_ref.size());
        for (auto& v : gy) v = rng.gaussian();
        std::vector<double> gc_ref(coeffs.size()), gx_ref(x.size());
        std::vector<double> gc_omp(coeffs.size()), gx_omp(x.size());
        ts = time_best_of(reps, [&] {
            ref::kan_grad(x.data(), n_in, c_in, coeffs.data(), mask.data(), gy.data(), n_pos, c_out,
                          k, s, g, grid.t, gc_ref.data(), gx_ref.data());
        });
        tp = time_best_of(reps, [&] {
            kernels::kan_grad_params(x.data(), n_in, c_in, gy.data(), n_pos, c_out, k, s, g, grid.t,
                                     mask.data(), gc_omp.data());
            kernels::kan_grad_input(x.data(), n_in, c_in, coeffs.data(), mask.data(), c_out, k, s,
                                    g, grid.t, gy.data(), n_pos, gx_omp.data());
        });
        report("kan backward", ts, tp,
               std::max(max_rel_diff(gc_ref, gc_omp), max_rel_diff(gx_ref, gx_omp)));
    }

    // Saturable-gain solve over a long power trace (parallel inside
    // amplify_soa, serial loop here as the baseline).
    {
        SoaCurve soa;
        const long n = n_pos * 16;
        std::vector<std::complex<double>> field(static_cast<size_t>(n));
        for (auto& v : field) v = std::abs(rng.gaussian()) * 1e-2;
        auto serial_copy = field;
        double ts = time_best_of(1, [&] {
            for (auto& v : serial_copy) v *= std::sqrt(soa_gain(soa, std::norm(v)));
        });
        LinkConfig cfg;
        auto par_copy = field;
        double tp = time_best_of(1, [&] { amplify_soa(par_copy, cfg); });
        std::vector<double> a(serial_copy.size()), b(par_copy.size());
        for (size_t i = 0; i < a.size(); ++i) {
            a[i] = serial_copy[i].real();
            b[i] = par_copy[i].real();
        }
        report("soa saturable gain", ts, tp, max_rel_diff(a, b));
    }
    return 0;
}
