#ifndef REGAUDIT_RNG_HPP
#define REGAUDIT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string>

namespace regaudit {

// Named generator: splitmix64 (Steele/Lea/Flood 2014 finalizer) with keyed
// substreams. Every stochastic routine in the library takes an explicit seed
// and derives substreams with Rng::substream, so draw order is fixed by code,
// not by scheduling. Normal deviates come from the Acklam inverse-CDF
// approximation on a (0,1) uniform; the only libm calls are sqrt and log, so
// sequences are bit-stable for a given platform/libm.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Deterministic stream keyed by (seed, a, b). Used to partition draws
    // (per Monte Carlo index, per restart, per cell) so parallel and serial
    // execution produce identical output.
    static Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        std::uint64_t k = mix(seed ^ mix(a + 0x9E3779B97F4A7C15ULL));
        k = mix(k ^ mix(b + 0xBF58476D1CE4E5B9ULL));
        return Rng(k);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform on the open interval (0,1); never returns an endpoint.
    double next_double() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    double normal() { return inverse_normal_cdf(next_double()); }

    // Acklam's rational approximation to Phi^-1, |rel err| < 1.15e-9.
    static double inverse_normal_cdf(double p) {
        static constexpr double a[6] = {
            -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
            1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
        static constexpr double b[5] = {
            -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
            6.680131188771972e+01, -1.328068155288572e+01};
        static constexpr double c[6] = {
            -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
            -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
        static constexpr double d[4] = {
            7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
            3.754408661907416e+00};
        constexpr double p_low = 0.02425;

        if (p < p_low) {
            const double q = std::sqrt(-2.0 * std::log(p));
            return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        if (p <= 1.0 - p_low) {
            const double q = p - 0.5;
            const double r = q * q;
            return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
                   (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
        }
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

// FNV-1a, used to derive per-pair seeds from string ids and to checksum
// generated logs for world/log pairing.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xCBF29CE484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

}  // namespace regaudit

#endif  // REGAUDIT_RNG_HPP
