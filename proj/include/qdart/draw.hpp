#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "genome.hpp"
#include "image.hpp"
#include "noise.hpp"
#include "parallel.hpp"

namespace qdart {

inline constexpr int kReferenceWidth = 1024;
inline constexpr int kReferenceHeight = 768;

// Spiral field: tangent plus a 0.15 radial component, unit length.
inline constexpr double kSpiralRadial = 0.15;
inline const double kSpiralNorm = 1.0 / std::sqrt(1.0 + kSpiralRadial * kSpiralRadial);

/// Canvas and simulation settings shared by every genotype in a run.
struct DrawConfig {
    int canvas_width = kReferenceWidth;
    int canvas_height = kReferenceHeight;
    int lifetime = kDefaultLifetime;
    GeneRanges gene_ranges{};

    /// Gene ranges are in reference-canvas pixels; smaller canvases scale
    /// every pixel quantity so a genotype draws the same picture.
    double scale() const
    {
        return std::min(static_cast<double>(canvas_width) / kReferenceWidth,
                        static_cast<double>(canvas_height) / kReferenceHeight);
    }

    friend bool operator==(const DrawConfig&, const DrawConfig&) = default;
};

struct Polyline {
    int pen = 0;
    std::vector<Vec2> points;

    friend bool operator==(const Polyline&, const Polyline&) = default;
};

/// Vector drawing produced by the agent simulation.
struct Phenotype {
    std::vector<Polyline> paths;
    int canvas_width = kReferenceWidth;
    int canvas_height = kReferenceHeight;
    double stroke_scale = 1.0;

    friend bool operator==(const Phenotype&, const Phenotype&) = default;
};

/// Pen k draws at 0.8 + 0.6k reference pixels.
inline double pen_width(int pen, double stroke_scale = 1.0) { return (0.8 + 0.6 * pen) * stroke_scale; }

/// Radical inverse in the given base (Halton sequence component).
inline double halton(std::uint64_t index, std::uint64_t base)
{
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= static_cast<double>(base);
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

/// The first `pen_ratio` share of agents uses pen 0; the rest are split
/// evenly across the remaining pens.
inline int assign_pen(int agent, int agent_count, int pen_count, double pen_ratio)
{
    if (pen_count <= 1)
        return 0;
    const double u = (agent + 0.5) / agent_count;
    if (u < pen_ratio)
        return 0;
    const double rest = 1.0 - pen_ratio;
    const double t = rest > 0.0 ? (u - pen_ratio) / rest : 0.0;
    return std::clamp(1 + static_cast<int>(std::floor(t * (pen_count - 1))), 1, pen_count - 1);
}

namespace detail {

/// Reflects a coordinate back into [0, limit]; returns true on a bounce.
inline bool reflect(double& v, double limit)
{
    if (v < 0.0) {
        v = std::min(-v, limit);
        return true;
    }
    if (v > limit) {
        v = std::max(2.0 * limit - v, 0.0);
        return true;
    }
    return false;
}

} // namespace detail

/// Runs the agent simulation. No randomness: agents start on a Halton
/// (2,3) sequence inside the border and are steered by the style fields
/// and the noise field. Agents are independent, so they may be advanced in
/// parallel; paths are stored by agent index.
inline Phenotype simulate(const DrawingParams& params, const DrawConfig& cfg = {}, unsigned threads = 1)
{
    const double scale = cfg.scale();
    const double w = cfg.canvas_width;
    const double h = cfg.canvas_height;
    if (cfg.canvas_width <= 0 || cfg.canvas_height <= 0)
        throw std::invalid_argument("simulate: canvas must be non-empty");
    const double border = params.border_width * scale;
    if (2.0 * border >= w || 2.0 * border >= h)
        throw std::invalid_argument("simulate: border leaves no drawable region");
    if (params.agent_count < 1 || params.agent_lifetime < 0)
        throw std::invalid_argument("simulate: need at least one agent and a non-negative lifetime");

    NoiseField field;
    field.algorithm = params.noise_algorithm;
    field.freq_x = params.noise_freq_x / scale;
    field.freq_y = params.noise_freq_y / scale;
    field.octaves = params.noise_octaves;
    field.falloff = params.noise_falloff;
    field.z = params.z_position;

    const double speed = params.agent_speed * scale;
    const double displacement = params.noise_displacement * scale;
    const Vec2 center{w / 2.0, h / 2.0};
    const int lifetime = params.agent_lifetime;

    Phenotype out;
    out.canvas_width = cfg.canvas_width;
    out.canvas_height = cfg.canvas_height;
    out.stroke_scale = scale;
    out.paths.resize(static_cast<std::size_t>(params.agent_count));

    parallel_for(out.paths.size(), threads, [&](std::size_t i) {
        const auto k = static_cast<std::uint64_t>(i + 1);
        Vec2 pos{border + halton(k, 2) * (w - 2.0 * border), border + halton(k, 3) * (h - 2.0 * border)};
        Vec2 heading{1.0, 0.0};
        double flip_x = 1.0, flip_y = 1.0;

        Polyline& path = out.paths[i];
        path.pen = assign_pen(static_cast<int>(i), params.agent_count, params.pen_count, params.pen_ratio);
        path.points.reserve(static_cast<std::size_t>(lifetime) + 1);
        path.points.push_back(pos);

        for (int age = 0; age < lifetime; ++age) {
            const Vec2 r = pos - center;
            const double dist = std::sqrt(r.x * r.x + r.y * r.y);
            Vec2 tangent{0.0, 1.0}, radial{1.0, 0.0};
            if (dist > 1e-9) {
                radial = (1.0 / dist) * r;
                tangent = {-radial.y, radial.x};
            }
            const Vec2 spiral = kSpiralNorm * (tangent + kSpiralRadial * radial);

            Vec2 dir = params.style_linear * Vec2{1.0, 0.0} + params.style_circular * tangent + params.style_spiral * spiral;
            if (params.noise_strength != 0.0) {
                const double z = params.noise_z_scale * static_cast<double>(age) / std::max(1, lifetime);
                const double theta = flow_angle(field, pos.x + displacement, pos.y + displacement, z);
                dir = dir + params.noise_strength * Vec2{std::cos(theta), std::sin(theta)};
            }
            dir.x *= flip_x;
            dir.y *= flip_y;
            const double len = std::sqrt(dir.x * dir.x + dir.y * dir.y);
            if (len > 1e-12)
                heading = (1.0 / len) * dir;

            Vec2 next = pos + speed * heading;
            if (detail::reflect(next.x, w))
                flip_x = -flip_x;
            if (detail::reflect(next.y, h))
                flip_y = -flip_y;
            pos = next;
            path.points.push_back(pos);
        }
    });
    return out;
}

namespace detail {

inline void format_number(std::string& out, double v)
{
    // Same digits as printf("%.3f"), several times faster.
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 3);
    out.append(buf, res.ptr);
}

} // namespace detail

/// SVG 1.1 document, one <polyline> per path in path order.
inline std::string to_svg(const Phenotype& p)
{
    std::string s;
    std::size_t points = 0;
    for (const auto& path : p.paths)
        points += path.points.size();
    s.reserve(512 + p.paths.size() * 64 + points * 16);
    const std::string w = std::to_string(p.canvas_width), h = std::to_string(p.canvas_height);
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + w + "\" height=\"" + h +
         "\" viewBox=\"0 0 " + w + " " + h + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + w + "\" height=\"" + h + "\" fill=\"white\"/>\n";
    s += "<g fill=\"none\" stroke=\"black\" stroke-linecap=\"round\" stroke-linejoin=\"round\">\n";
    for (const auto& path : p.paths) {
        s += "<polyline stroke-width=\"";
        detail::format_number(s, pen_width(path.pen, p.stroke_scale));
        s += "\" points=\"";
        bool first = true;
        for (const auto& pt : path.points) {
            if (!first)
                s += ' ';
            first = false;
            detail::format_number(s, pt.x);
            s += ',';
            detail::format_number(s, pt.y);
        }
        s += "\"/>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

inline constexpr int kSupersample = 2;

/// Renders strokes as round-capped capsules onto a 2x2 supersampled
/// coverage mask (union, so overlapping ink never darkens twice), then
/// averages each 2x2 block. White background, black ink. Scanline bands
/// may be rendered in parallel; the result does not depend on `threads`.
inline GrayImage rasterize(const Phenotype& p, unsigned threads = 1)
{
    const int sw = p.canvas_width * kSupersample;
    const int sh = p.canvas_height * kSupersample;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(sw) * static_cast<std::size_t>(sh), 0);

    // Fills every sample whose center lies in the capsule of `radius`
    // around segment ab. The capsule is convex, so each sample row meets it
    // in one interval: the hull of the two end discs and the side strip.
    const auto draw_segment = [&](Vec2 a, Vec2 b, double radius, int band_y0, int band_y1) {
        constexpr double inv = 1.0 / kSupersample;
        const int y0 = std::max(band_y0, static_cast<int>(std::ceil((std::min(a.y, b.y) - radius) * kSupersample - 0.5)));
        const int y1 = std::min(band_y1 - 1, static_cast<int>(std::floor((std::max(a.y, b.y) + radius) * kSupersample - 0.5)));
        const Vec2 d = b - a;
        const double len2 = d.x * d.x + d.y * d.y;
        const double len = std::sqrt(len2);
        const double r2 = radius * radius;
        for (int sy = y0; sy <= y1; ++sy) {
            const double py = (sy + 0.5) * inv;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            const auto disc = [&](Vec2 c) {
                const double dy = py - c.y;
                const double q = r2 - dy * dy;
                if (q >= 0.0) {
                    const double half = std::sqrt(q);
                    lo = std::min(lo, c.x - half);
                    hi = std::max(hi, c.x + half);
                }
            };
            disc(a);
            disc(b);
            if (len2 > 0.0) {
                // 0 <= t(x) <= len2 and |s(x)| <= radius*len, both linear in x.
                const double ey = py - a.y;
                double slo = -std::numeric_limits<double>::infinity();
                double shi = -slo;
                const auto clip = [&](double coef, double offset, double lower, double upper) {
                    // lower <= coef * (x - a.x) + offset <= upper
                    if (coef == 0.0) {
                        if (offset < lower || offset > upper)
                            shi = -std::numeric_limits<double>::infinity();
                        return;
                    }
                    double u0 = (lower - offset) / coef, u1 = (upper - offset) / coef;
                    if (u0 > u1)
                        std::swap(u0, u1);
                    slo = std::max(slo, a.x + u0);
                    shi = std::min(shi, a.x + u1);
                };
                clip(d.x, ey * d.y, 0.0, len2);
                clip(d.y, -ey * d.x, -radius * len, radius * len);
                if (slo <= shi) {
                    lo = std::min(lo, slo);
                    hi = std::max(hi, shi);
                }
            }
            if (lo > hi)
                continue;
            const int sx0 = std::max(0, static_cast<int>(std::ceil(lo * kSupersample - 0.5)));
            const int sx1 = std::min(sw - 1, static_cast<int>(std::floor(hi * kSupersample - 0.5)));
            if (sx0 <= sx1)
                std::fill(mask.begin() + static_cast<std::ptrdiff_t>(sy) * sw + sx0,
                          mask.begin() + static_cast<std::ptrdiff_t>(sy) * sw + sx1 + 1, std::uint8_t{1});
        }
    };

    const unsigned bands = std::max(1u, threads);
    parallel_for(bands, threads, [&](std::size_t band) {
        const int by0 = static_cast<int>(static_cast<long long>(band) * sh / bands);
        const int by1 = static_cast<int>(static_cast<long long>(band + 1) * sh / bands);
        for (const auto& path : p.paths) {
            const double radius = 0.5 * pen_width(path.pen, p.stroke_scale);
            if (path.points.size() == 1)
                draw_segment(path.points[0], path.points[0], radius, by0, by1);
            for (std::size_t k = 1; k < path.points.size(); ++k)
                draw_segment(path.points[k - 1], path.points[k], radius, by0, by1);
        }
    });

    GrayImage img(p.canvas_width, p.canvas_height);
    constexpr double kSamples = kSupersample * kSupersample;
    for (int y = 0; y < p.canvas_height; ++y) {
        for (int x = 0; x < p.canvas_width; ++x) {
            int ink = 0;
            for (int dy = 0; dy < kSupersample; ++dy)
                for (int dx = 0; dx < kSupersample; ++dx)
                    ink += mask[static_cast<std::size_t>(y * kSupersample + dy) * sw + (x * kSupersample + dx)];
            img.at(x, y) = 1.0 - ink / kSamples;
        }
    }
    return img;
}

/// Genotype -> phenotype, the full deterministic G->P map.
inline Phenotype render(const Genotype& g, const DrawConfig& cfg = {}, unsigned threads = 1)
{
    return simulate(decode(g, cfg.gene_ranges, cfg.lifetime), cfg, threads);
}

inline void to_json(nlohmann::json& j, const DrawConfig& c)
{
    j = {{"canvas", {c.canvas_width, c.canvas_height}}, {"lifetime", c.lifetime}, {"gene_ranges", c.gene_ranges}};
}

} // namespace qdart
