#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <string_view>

namespace kaneq {

// FNV-1a, used for config hashes and seed derivation labels.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Child seed for a named purpose. Adding new purposes never perturbs the
// streams of existing ones.
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
    return splitmix64(root ^ fnv1a(label));
}

inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t index) {
    return splitmix64(derive_seed(root, label) + 0x632be59bd9b4e019ull * (index + 1));
}

// mt19937_64 core with portable uniform/gaussian mappings on top (the
// standard pins the engine output, not the distributions).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t u64() { return eng_(); }

    int pam4_symbol() { return static_cast<int>(eng_() & 3); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * uniform();
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// PAM4 Gray labeling: level 0..3 -> 00, 01, 11, 10 (MSB first).
inline int gray_bits(int sym) {
    static constexpr int tab[4] = {0, 1, 3, 2};
    return tab[sym];
}

inline int bit_errors_between(int sym_a, int sym_b) {
    int x = gray_bits(sym_a) ^ gray_bits(sym_b);
    return (x & 1) + ((x >> 1) & 1);
}

// Normalized PAM4 target levels {-3,-1,1,3}/sqrt(5), unit average power.
inline constexpr double kInvSqrt5 = 0.44721359549995793928;
inline constexpr double kTargetLevels[4] = {-3.0 * kInvSqrt5, -1.0 * kInvSqrt5,
                                            1.0 * kInvSqrt5, 3.0 * kInvSqrt5};

inline int slice_pam4(double v) {
    if (v < -2.0 * kInvSqrt5) return 0;
    if (v < 0.0) return 1;
    if (v < 2.0 * kInvSqrt5) return 2;
    return 3;
}

// Distance in representable doubles; large sentinel for sign mismatch / NaN.
inline int64_t ulp_distance(double a, double b) {
    if (a == b) return 0;
    if (std::isnan(a) || std::isnan(b)) return INT64_MAX;
    int64_t ia, ib;
    std::memcpy(&ia, &a, 8);
    std::memcpy(&ib, &b, 8);
    if ((ia < 0) != (ib < 0)) return INT64_MAX;
    int64_t d = ia - ib;
    return d < 0 ? -d : d;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }

} // namespace kaneq
