#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "genome.hpp"

namespace qdart {

struct Vec2 {
    double x = 0;
    double y = 0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
    double norm() const { return std::hypot(x, y); }
};

namespace detail {

// Ken Perlin's reference permutation (improved noise).
inline constexpr std::array<std::uint8_t, 256> kPermutation = {
    151, 160, 137, 91,  90,  15,  131, 13,  201, 95,  96,  53,  194, 233, 7,   225, 140, 36,  103, 30,  69,  142,
    8,   99,  37,  240, 21,  10,  23,  190, 6,   148, 247, 120, 234, 75,  0,   26,  197, 62,  94,  252, 219, 203,
    117, 35,  11,  32,  57,  177, 33,  88,  237, 149, 56,  87,  174, 20,  125, 136, 171, 168, 68,  175, 74,  165,
    71,  134, 139, 48,  27,  166, 77,  146, 158, 231, 83,  111, 229, 122, 60,  211, 133, 230, 220, 105, 92,  41,
    55,  46,  245, 40,  244, 102, 143, 54,  65,  25,  63,  161, 1,   216, 80,  73,  209, 76,  132, 187, 208, 89,
    18,  169, 200, 196, 135, 130, 116, 188, 159, 86,  164, 100, 109, 198, 173, 186, 3,   64,  52,  217, 226, 250,
    124, 123, 5,   202, 38,  147, 118, 126, 255, 82,  85,  212, 207, 206, 59,  227, 47,  16,  58,  17,  182, 189,
    28,  42,  223, 183, 170, 213, 119, 248, 152, 2,   44,  154, 163, 70,  221, 153, 101, 155, 167, 43,  172, 9,
    129, 22,  39,  253, 19,  98,  108, 110, 79,  113, 224, 232, 178, 185, 112, 104, 218, 246, 97,  228, 251, 34,
    242, 193, 238, 210, 144, 12,  191, 179, 162, 241, 81,  51,  145, 235, 249, 14,  239, 107, 49,  192, 214, 31,
    181, 199, 106, 157, 184, 84,  204, 176, 115, 121, 50,  45,  127, 4,   150, 254, 138, 236, 205, 93,  222, 114,
    67,  29,  24,  72,  243, 141, 128, 195, 78,  66,  215, 61,  156, 180};

inline int perm(int i) { return kPermutation[static_cast<std::size_t>(i & 255)]; }

inline int hash3(int x, int y, int z) { return perm(perm(perm(x) + y) + z); }

// Improved-noise gradient set: the 12 cube edges padded to 16.
inline constexpr std::array<std::array<double, 3>, 16> kGradients = {{{1, 1, 0},
                                                                       {-1, 1, 0},
                                                                       {1, -1, 0},
                                                                       {-1, -1, 0},
                                                                       {1, 0, 1},
                                                                       {-1, 0, 1},
                                                                       {1, 0, -1},
                                                                       {-1, 0, -1},
                                                                       {0, 1, 1},
                                                                       {0, -1, 1},
                                                                       {0, 1, -1},
                                                                       {0, -1, -1},
                                                                       {1, 1, 0},
                                                                       {0, -1, 1},
                                                                       {-1, 1, 0},
                                                                       {0, -1, -1}}};

inline double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
inline double fade_deriv(double t) { return 30.0 * t * t * (t * (t - 2) + 1); }

struct NoiseSample {
    double value = 0;
    double dx = 0;
    double dy = 0;
};

inline int lattice(double v)
{
    const int i = static_cast<int>(v);
    return v < i ? i - 1 : i;
}

/// Gradient noise with analytic x/y derivatives.
inline NoiseSample perlin3(double x, double y, double z)
{
    const int X = lattice(x), Y = lattice(y), Z = lattice(z);
    const double fx = x - X, fy = y - Y, fz = z - Z;
    const double u = fade(fx), v = fade(fy), w = fade(fz);
    const double du = fade_deriv(fx), dv = fade_deriv(fy);

    const int ha = perm(X) + Y, hb = perm(X + 1) + Y;
    const int corner_hash[8] = {perm(perm(ha) + Z),         perm(perm(hb) + Z),         perm(perm(ha + 1) + Z),
                                perm(perm(hb + 1) + Z),     perm(perm(ha) + Z + 1),     perm(perm(hb) + Z + 1),
                                perm(perm(ha + 1) + Z + 1), perm(perm(hb + 1) + Z + 1)};
    double val[8];
    double gx[8];
    double gy[8];
    for (int c = 0; c < 8; ++c) {
        const int i = c & 1, j = (c >> 1) & 1, k = (c >> 2) & 1;
        const auto& g = kGradients[static_cast<std::size_t>(corner_hash[c] & 15)];
        val[c] = g[0] * (fx - i) + g[1] * (fy - j) + g[2] * (fz - k);
        gx[c] = g[0];
        gy[c] = g[1];
    }
    const auto trilerp = [&](const double* a) {
        const double x00 = a[0] + u * (a[1] - a[0]);
        const double x10 = a[2] + u * (a[3] - a[2]);
        const double x01 = a[4] + u * (a[5] - a[4]);
        const double x11 = a[6] + u * (a[7] - a[6]);
        const double y0 = x00 + v * (x10 - x00);
        const double y1 = x01 + v * (x11 - x01);
        return y0 + w * (y1 - y0);
    };
    NoiseSample s;
    s.value = trilerp(val);
    // d/dx = interpolated gradient x + du * d(interp)/du
    const double k1 = val[1] - val[0];
    const double k2 = val[2] - val[0];
    const double k4 = val[0] - val[1] - val[2] + val[3];
    const double k5 = val[0] - val[2] - val[4] + val[6];
    const double k6 = val[0] - val[1] - val[4] + val[5];
    const double k7 = -val[0] + val[1] + val[2] - val[3] + val[4] - val[5] - val[6] + val[7];
    s.dx = trilerp(gx) + du * (k1 + k4 * v + k6 * w + k7 * v * w);
    s.dy = trilerp(gy) + dv * (k2 + k4 * u + k5 * w + k7 * u * w);
    return s;
}

/// Value-only gradient noise (no derivatives).
inline double perlin3_value(double x, double y, double z)
{
    const int X = lattice(x), Y = lattice(y), Z = lattice(z);
    const double fx = x - X, fy = y - Y, fz = z - Z;
    const double u = fade(fx), v = fade(fy), w = fade(fz);
    const int a = perm(X) + Y, aa = perm(a) + Z, ab = perm(a + 1) + Z;
    const int b = perm(X + 1) + Y, ba = perm(b) + Z, bb = perm(b + 1) + Z;
    const auto grad = [](int hash, double gx, double gy, double gz) {
        const auto& g = kGradients[static_cast<std::size_t>(hash & 15)];
        return g[0] * gx + g[1] * gy + g[2] * gz;
    };
    const auto lerp = [](double t, double lo, double hi) { return lo + t * (hi - lo); };
    return lerp(w,
                lerp(v, lerp(u, grad(perm(aa), fx, fy, fz), grad(perm(ba), fx - 1, fy, fz)),
                     lerp(u, grad(perm(ab), fx, fy - 1, fz), grad(perm(bb), fx - 1, fy - 1, fz))),
                lerp(v, lerp(u, grad(perm(aa + 1), fx, fy, fz - 1), grad(perm(ba + 1), fx - 1, fy, fz - 1)),
                     lerp(u, grad(perm(ab + 1), fx, fy - 1, fz - 1), grad(perm(bb + 1), fx - 1, fy - 1, fz - 1))));
}

inline double value3(double x, double y, double z)
{
    const int X = lattice(x), Y = lattice(y), Z = lattice(z);
    const double u = fade(x - X), v = fade(y - Y), w = fade(z - Z);
    double c[8];
    for (int k = 0; k < 8; ++k)
        c[k] = hash3(X + (k & 1), Y + ((k >> 1) & 1), Z + ((k >> 2) & 1)) / 127.5 - 1.0;
    const double x00 = c[0] + u * (c[1] - c[0]);
    const double x10 = c[2] + u * (c[3] - c[2]);
    const double x01 = c[4] + u * (c[5] - c[4]);
    const double x11 = c[6] + u * (c[7] - c[6]);
    const double y0 = x00 + v * (x10 - x00);
    const double y1 = x01 + v * (x11 - x01);
    return y0 + w * (y1 - y0);
}

inline constexpr double kPi = 3.14159265358979323846;

} // namespace detail

/// Noise configuration for one drawing. Frequencies are in cycles per pixel.
struct NoiseField {
    NoiseAlgorithm algorithm = NoiseAlgorithm::perlin;
    double freq_x = 0.01;
    double freq_y = 0.01;
    int octaves = 1;
    double falloff = 0.5;
    double z = 0;
};

/// Octave-summed gradient noise, normalized by the total amplitude.
/// Lacunarity is 2, so every octave vanishes on the base lattice.
inline detail::NoiseSample fbm_sample(const NoiseField& f, double px, double py, double pz)
{
    detail::NoiseSample sum;
    double amp = 1.0, total = 0.0, scale = 1.0;
    const int octaves = std::max(1, f.octaves);
    for (int k = 0; k < octaves; ++k) {
        const auto s = detail::perlin3(px * scale, py * scale, pz * scale);
        sum.value += amp * s.value;
        sum.dx += amp * scale * s.dx;
        sum.dy += amp * scale * s.dy;
        total += amp;
        amp *= f.falloff;
        scale *= 2.0;
    }
    sum.value /= total;
    sum.dx /= total;
    sum.dy /= total;
    return sum;
}

inline double fbm_value(const NoiseField& f, double px, double py, double pz)
{
    double sum = 0.0, amp = 1.0, total = 0.0, scale = 1.0;
    const int octaves = std::max(1, f.octaves);
    for (int k = 0; k < octaves; ++k) {
        sum += amp * detail::perlin3_value(px * scale, py * scale, pz * scale);
        total += amp;
        amp *= f.falloff;
        scale *= 2.0;
    }
    return sum / total;
}

/// Divergence-free flow from the curl of the fbm potential, in pixel units:
/// v = (dpsi/dy, -dpsi/dx).
inline Vec2 curl_vector(const NoiseField& f, double x, double y, double z)
{
    const auto s = fbm_sample(f, x * f.freq_x, y * f.freq_y, f.z + z);
    return {s.dy * f.freq_y, -s.dx * f.freq_x};
}

/// Scalar noise in [-1,1]. The curl variant returns the flow angle / pi.
inline double noise_eval(const NoiseField& f, double x, double y, double z)
{
    const double px = x * f.freq_x, py = y * f.freq_y, pz = f.z + z;
    double out = 0.0;
    switch (f.algorithm) {
    case NoiseAlgorithm::value: out = detail::value3(px, py, pz); break;
    case NoiseAlgorithm::perlin: out = detail::perlin3_value(px, py, pz); break;
    case NoiseAlgorithm::fbm_perlin: out = fbm_value(f, px, py, pz); break;
    case NoiseAlgorithm::curl_perlin: {
        const Vec2 v = curl_vector(f, x, y, z);
        out = (v.x == 0.0 && v.y == 0.0) ? 0.0 : std::atan2(v.y, v.x) / detail::kPi;
        break;
    }
    case NoiseAlgorithm::ridged: {
        double amp = 1.0, total = 0.0, scale = 1.0, sum = 0.0;
        for (int k = 0; k < std::max(1, f.octaves); ++k) {
            const double r = 1.0 - std::abs(detail::perlin3_value(px * scale, py * scale, pz * scale));
            sum += amp * r * r;
            total += amp;
            amp *= f.falloff;
            scale *= 2.0;
        }
        out = 2.0 * (sum / total) - 1.0;
        break;
    }
    }
    return std::clamp(out, -1.0, 1.0);
}

/// Heading (radians) the noise field steers an agent towards.
inline double flow_angle(const NoiseField& f, double x, double y, double z)
{
    if (f.algorithm == NoiseAlgorithm::curl_perlin) {
        const Vec2 v = curl_vector(f, x, y, z);
        return (v.x == 0.0 && v.y == 0.0) ? 0.0 : std::atan2(v.y, v.x);
    }
    return 2.0 * detail::kPi * noise_eval(f, x, y, z);
}

} // namespace qdart
