#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "rng.hpp"

namespace qdart {

inline constexpr std::size_t kGeneCount = 17;

/// Normalized genotype: 17 genes, each in [0,1].
class Genotype {
public:
    using Genes = std::array<double, kGeneCount>;

    Genotype() { genes_.fill(0.5); }

    explicit Genotype(const Genes& genes) : genes_(genes)
    {
        for (double g : genes_)
            if (!(g >= 0.0 && g <= 1.0))
                throw std::invalid_argument("Genotype: gene value outside [0,1]");
    }

    const Genes& genes() const noexcept { return genes_; }
    double operator[](std::size_t i) const { return genes_.at(i); }
    static constexpr std::size_t size() noexcept { return kGeneCount; }

    friend bool operator==(const Genotype&, const Genotype&) = default;

private:
    Genes genes_;
};

enum class NoiseAlgorithm : int { value = 0, perlin = 1, fbm_perlin = 2, curl_perlin = 3, ridged = 4 };

inline constexpr int kNoiseAlgorithmCount = 5;

inline std::string_view to_string(NoiseAlgorithm a)
{
    switch (a) {
    case NoiseAlgorithm::value: return "value";
    case NoiseAlgorithm::perlin: return "perlin";
    case NoiseAlgorithm::fbm_perlin: return "fbm_perlin";
    case NoiseAlgorithm::curl_perlin: return "curl_perlin";
    case NoiseAlgorithm::ridged: return "ridged";
    }
    return "unknown";
}

struct GeneRange {
    double lo = 0.0;
    double hi = 1.0;

    double map(double g) const noexcept { return lo + g * (hi - lo); }
    friend bool operator==(const GeneRange&, const GeneRange&) = default;
};

/// Gene -> parameter ranges for g1..g16 (g17 is the discrete noise algorithm).
/// Ranges are expressed in reference-canvas pixels (1024x768).
struct GeneRanges {
    GeneRange border_width{0.0, 400.0};
    GeneRange agent_speed{0.5, 8.0};
    GeneRange agent_count{8.0, 512.0};
    GeneRange noise_strength{0.0, 4.0};
    GeneRange noise_displacement{0.0, 200.0};
    GeneRange noise_freq_x{0.001, 0.02};
    GeneRange noise_freq_y{0.001, 0.02};
    GeneRange noise_z_scale{0.0, 2.0};
    GeneRange z_position{0.0, 10.0};
    GeneRange noise_octaves{1.0, 6.0};
    GeneRange noise_falloff{0.3, 0.8};
    GeneRange pen_count{1.0, 4.0};
    GeneRange pen_ratio{0.0, 1.0};
    GeneRange style_linear{0.0, 1.0};
    GeneRange style_circular{0.0, 1.0};
    GeneRange style_spiral{0.0, 1.0};

    friend bool operator==(const GeneRanges&, const GeneRanges&) = default;

    template <typename Fn>
    void for_each(Fn&& fn)
    {
        fn("border_width", border_width);
        fn("agent_speed", agent_speed);
        fn("agent_count", agent_count);
        fn("noise_strength", noise_strength);
        fn("noise_displacement", noise_displacement);
        fn("noise_freq_x", noise_freq_x);
        fn("noise_freq_y", noise_freq_y);
        fn("noise_z_scale", noise_z_scale);
        fn("z_position", z_position);
        fn("noise_octaves", noise_octaves);
        fn("noise_falloff", noise_falloff);
        fn("pen_count", pen_count);
        fn("pen_ratio", pen_ratio);
        fn("style_linear", style_linear);
        fn("style_circular", style_circular);
        fn("style_spiral", style_spiral);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const
    {
        const_cast<GeneRanges*>(this)->for_each([&](const char* name, GeneRange& r) { fn(name, static_cast<const GeneRange&>(r)); });
    }
};

/// Simulation parameters decoded from a genotype.
struct DrawingParams {
    double border_width = 0;
    double agent_speed = 1;
    int agent_count = 1;
    int agent_lifetime = 2000;
    double noise_strength = 0;
    double noise_displacement = 0;
    double noise_freq_x = 0.01;
    double noise_freq_y = 0.01;
    double noise_z_scale = 0;
    double z_position = 0;
    int noise_octaves = 1;
    double noise_falloff = 0.5;
    int pen_count = 1;
    double pen_ratio = 0;
    double style_linear = 0;
    double style_circular = 0;
    double style_spiral = 0;
    NoiseAlgorithm noise_algorithm = NoiseAlgorithm::value;

    friend bool operator==(const DrawingParams&, const DrawingParams&) = default;
};

inline constexpr int kDefaultLifetime = 2000;

/// 17 independent uniform draws in [0,1).
inline Genotype random_genotype(std::uint64_t seed)
{
    Rng rng(seed);
    Genotype::Genes genes{};
    for (double& g : genes)
        g = rng.uniform();
    return Genotype(genes);
}

/// Per-gene mutation: with probability `rate` a gene moves by a uniform
/// delta in [-factor, factor] and is clamped back to [0,1].
inline Genotype mutate(const Genotype& parent, double rate, double factor, std::uint64_t seed)
{
    if (!(rate >= 0.0 && rate <= 1.0))
        throw std::invalid_argument("mutate: rate must lie in [0,1]");
    if (!(factor >= 0.0 && factor <= 1.0))
        throw std::invalid_argument("mutate: factor must lie in [0,1]");
    Rng rng(seed);
    Genotype::Genes genes = parent.genes();
    for (double& g : genes) {
        if (rng.uniform() < rate) {
            const double delta = rng.uniform(-factor, factor);
            g = std::clamp(g + delta, 0.0, 1.0);
        }
    }
    return Genotype(genes);
}

inline NoiseAlgorithm decode_algorithm(double g)
{
    const int idx = std::min(kNoiseAlgorithmCount - 1, static_cast<int>(std::floor(g * kNoiseAlgorithmCount)));
    return static_cast<NoiseAlgorithm>(std::max(0, idx));
}

inline DrawingParams decode(const Genotype& g, const GeneRanges& ranges = {}, int lifetime = kDefaultLifetime)
{
    const auto rounded = [](double v) { return static_cast<int>(std::lround(v)); };
    DrawingParams p;
    p.border_width = ranges.border_width.map(g[0]);
    p.agent_speed = ranges.agent_speed.map(g[1]);
    p.agent_count = std::max(1, rounded(ranges.agent_count.map(g[2])));
    p.agent_lifetime = lifetime;
    p.noise_strength = ranges.noise_strength.map(g[3]);
    p.noise_displacement = ranges.noise_displacement.map(g[4]);
    p.noise_freq_x = ranges.noise_freq_x.map(g[5]);
    p.noise_freq_y = ranges.noise_freq_y.map(g[6]);
    p.noise_z_scale = ranges.noise_z_scale.map(g[7]);
    p.z_position = ranges.z_position.map(g[8]);
    p.noise_octaves = std::max(1, rounded(ranges.noise_octaves.map(g[9])));
    p.noise_falloff = ranges.noise_falloff.map(g[10]);
    p.pen_count = std::max(1, rounded(ranges.pen_count.map(g[11])));
    p.pen_ratio = ranges.pen_ratio.map(g[12]);
    p.style_linear = ranges.style_linear.map(g[13]);
    p.style_circular = ranges.style_circular.map(g[14]);
    p.style_spiral = ranges.style_spiral.map(g[15]);
    p.noise_algorithm = decode_algorithm(g[16]);
    return p;
}

// JSON: a genotype is a bare array of 17 numbers.

inline void to_json(nlohmann::json& j, const Genotype& g) { j = g.genes(); }

inline void from_json(const nlohmann::json& j, Genotype& g)
{
    if (!j.is_array() || j.size() != kGeneCount)
        throw std::invalid_argument("genotype must be a JSON array of 17 numbers");
    Genotype::Genes genes{};
    for (std::size_t i = 0; i < kGeneCount; ++i) {
        if (!j[i].is_number())
            throw std::invalid_argument("genotype entries must be numbers");
        genes[i] = j[i].get<double>();
    }
    g = Genotype(genes);
}

inline void to_json(nlohmann::json& j, const GeneRanges& r)
{
    j = nlohmann::json::object();
    r.for_each([&](const char* name, const GeneRange& range) { j[name] = {range.lo, range.hi}; });
}

/// Partial objects are allowed; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, GeneRanges& r)
{
    if (!j.is_object())
        throw std::invalid_argument("gene_ranges must be an object");
    std::size_t matched = 0;
    r.for_each([&](const char* name, GeneRange& range) {
        if (!j.contains(name))
            return;
        const auto& v = j.at(name);
        if (!v.is_array() || v.size() != 2)
            throw std::invalid_argument(std::string("gene_ranges.") + name + " must be [lo, hi]");
        range.lo = v[0].get<double>();
        range.hi = v[1].get<double>();
        if (!(range.lo <= range.hi))
            throw std::invalid_argument(std::string("gene_ranges.") + name + ": lo > hi");
        ++matched;
    });
    if (matched != j.size())
        throw std::invalid_argument("gene_ranges: unknown key");
}

} // namespace qdart
