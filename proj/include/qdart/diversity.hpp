#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <istream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "image.hpp"

namespace qdart {

using FeatureVector = std::vector<double>;

inline constexpr int kDownsampleGrid = 32;
inline constexpr int kOrientationGrid = 4;
inline constexpr int kOrientationBins = 8;
inline constexpr std::size_t kDescriptorSize =
    kDownsampleGrid * kDownsampleGrid + kOrientationGrid * kOrientationGrid * kOrientationBins; // 1152

struct CellIndex {
    int i = 0;
    int j = 0;

    friend bool operator==(const CellIndex&, const CellIndex&) = default;
    friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

namespace detail {

inline void l2_normalize(double* first, double* last)
{
    double ss = 0.0;
    for (double* p = first; p != last; ++p)
        ss += *p * *p;
    if (ss <= 0.0)
        return;
    const double inv = 1.0 / std::sqrt(ss);
    for (double* p = first; p != last; ++p)
        *p *= inv;
}

} // namespace detail

/// Built-in descriptor before block normalization: a 32x32 box-downsampled
/// intensity grid followed by 8-bin gradient-orientation histograms
/// (magnitude weighted, central differences) on a 4x4 spatial grid.
inline FeatureVector describe_raw(const GrayImage& img)
{
    if (img.width() < kDownsampleGrid || img.height() < kDownsampleGrid)
        throw std::invalid_argument("describe: image smaller than the 32x32 descriptor grid");
    FeatureVector out(kDescriptorSize, 0.0);
    const GrayImage small = box_downsample(img, kDownsampleGrid, kDownsampleGrid);
    std::copy(small.pixels().begin(), small.pixels().end(), out.begin());

    double* hist = out.data() + kDownsampleGrid * kDownsampleGrid;
    constexpr double two_pi = 6.283185307179586;
    for (int y = 1; y + 1 < img.height(); ++y) {
        const int cy = y * kOrientationGrid / img.height();
        for (int x = 1; x + 1 < img.width(); ++x) {
            const double gx = img.at(x + 1, y) - img.at(x - 1, y);
            const double gy = img.at(x, y + 1) - img.at(x, y - 1);
            if (gx == 0.0 && gy == 0.0)
                continue;
            const double mag = std::sqrt(gx * gx + gy * gy);
            const double angle = std::atan2(gy, gx) + two_pi / 2.0; // [0, 2pi]
            const int bin = std::min(kOrientationBins - 1, static_cast<int>(angle / two_pi * kOrientationBins));
            const int cx = x * kOrientationGrid / img.width();
            hist[(cy * kOrientationGrid + cx) * kOrientationBins + bin] += mag;
        }
    }
    return out;
}

/// Descriptor with each block (intensity grid, orientation histograms)
/// L2-normalized independently. `expected_width/height` guard against
/// mixing canvases within one map.
inline FeatureVector describe(const GrayImage& img, int expected_width, int expected_height)
{
    if (img.width() != expected_width || img.height() != expected_height)
        throw std::invalid_argument("describe: expected a " + std::to_string(expected_width) + "x" +
                                    std::to_string(expected_height) + " image, got " + std::to_string(img.width()) + "x" +
                                    std::to_string(img.height()));
    FeatureVector v = describe_raw(img);
    const auto split = static_cast<std::ptrdiff_t>(kDownsampleGrid * kDownsampleGrid);
    detail::l2_normalize(v.data(), v.data() + split);
    detail::l2_normalize(v.data() + split, v.data() + v.size());
    return v;
}

inline FeatureVector describe(const GrayImage& img) { return describe(img, 1024, 768); }

/// Linear 2-D reduction of a feature space plus the grid that quantizes it.
struct ReducedMap {
    std::vector<double> mean;
    std::array<std::vector<double>, 2> basis;
    std::array<std::pair<double, double>, 2> bounds{};
    int grid_n = 8;

    std::size_t dim() const noexcept { return mean.size(); }
};

inline constexpr double kBoundsMargin = 0.05;

namespace detail {

/// Flips a direction so its largest-magnitude coefficient is positive.
inline void canonical_sign(Eigen::VectorXd& v)
{
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0)
        v = -v;
}

} // namespace detail

/// Projects a centered row onto the map basis.
inline std::pair<double, double> embed(const ReducedMap& map, const FeatureVector& v)
{
    if (v.size() != map.dim())
        throw std::invalid_argument("embed: feature dimension " + std::to_string(v.size()) + " does not match map dimension " +
                                    std::to_string(map.dim()));
    double x = 0, y = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double c = v[k] - map.mean[k];
        x += c * map.basis[0][k];
        y += c * map.basis[1][k];
    }
    return {x, y};
}

/// Mean-centered PCA onto the top two principal directions. Uses the
/// covariance eigenproblem when D <= n and the Gram matrix otherwise.
/// Bounds are the sample extent per axis widened by 5% on each side.
inline ReducedMap fit_reduction(const std::vector<FeatureVector>& samples, int grid_n)
{
    if (samples.size() < 3)
        throw std::invalid_argument("fit_reduction: need at least 3 samples");
    if (grid_n < 2)
        throw std::invalid_argument("fit_reduction: grid_n must be at least 2");
    const auto n = static_cast<Eigen::Index>(samples.size());
    const auto d = static_cast<Eigen::Index>(samples.front().size());
    if (d < 2)
        throw std::invalid_argument("fit_reduction: need at least 2 feature dimensions");
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& s = samples[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(s.size()) != d)
            throw std::invalid_argument("fit_reduction: samples differ in dimension");
        for (Eigen::Index c = 0; c < d; ++c) {
            if (!std::isfinite(s[static_cast<std::size_t>(c)]))
                throw std::invalid_argument("fit_reduction: non-finite feature value");
            x(r, c) = s[static_cast<std::size_t>(c)];
        }
    }
    const Eigen::RowVectorXd mu = x.colwise().mean();
    x.rowwise() -= mu;
    if (x.squaredNorm() <= 1e-24 * static_cast<double>(n * d))
        throw std::invalid_argument("fit_reduction: samples have zero variance");

    Eigen::VectorXd v1, v2;
    if (d <= n) {
        const Eigen::MatrixXd cov = x.transpose() * x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("fit_reduction: eigensolver failed");
        v1 = es.eigenvectors().col(d - 1);
        v2 = es.eigenvectors().col(d - 2);
    }
    else {
        const Eigen::MatrixXd gram = x * x.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("fit_reduction: eigensolver failed");
        v1 = (x.transpose() * es.eigenvectors().col(n - 1)).normalized();
        Eigen::VectorXd w = x.transpose() * es.eigenvectors().col(n - 2);
        w -= w.dot(v1) * v1;
        if (w.norm() <= 1e-12 * std::sqrt(es.eigenvalues()(n - 1))) {
            // Rank-one data: any unit vector orthogonal to v1 spans a
            // zero-variance direction; take the least-aligned axis.
            Eigen::Index arg = 0;
            v1.cwiseAbs().minCoeff(&arg);
            w = Eigen::VectorXd::Unit(d, arg);
            w -= w.dot(v1) * v1;
        }
        v2 = w.normalized();
    }
    detail::canonical_sign(v1);
    detail::canonical_sign(v2);

    ReducedMap map;
    map.grid_n = grid_n;
    map.mean.assign(mu.data(), mu.data() + d);
    map.basis[0].assign(v1.data(), v1.data() + d);
    map.basis[1].assign(v2.data(), v2.data() + d);

    std::array<double, 2> lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    std::array<double, 2> hi{-lo[0], -lo[1]};
    for (const auto& s : samples) {
        const auto [px, py] = embed(map, s);
        lo[0] = std::min(lo[0], px);
        hi[0] = std::max(hi[0], px);
        lo[1] = std::min(lo[1], py);
        hi[1] = std::max(hi[1], py);
    }
    const double span0 = hi[0] - lo[0];
    for (int a = 0; a < 2; ++a) {
        double span = hi[a] - lo[a];
        if (span <= 1e-12 * std::max(1.0, span0)) {
            // Flat axis: give it a unit-width window around the data.
            const double mid = 0.5 * (lo[a] + hi[a]);
            const double half = 0.5 * (span0 > 0 ? span0 : 1.0);
            lo[a] = mid - half;
            hi[a] = mid + half;
            span = hi[a] - lo[a];
        }
        map.bounds[static_cast<std::size_t>(a)] = {lo[a] - kBoundsMargin * span, hi[a] + kBoundsMargin * span};
    }
    return map;
}

/// Linear binning over the map bounds; points outside clamp to edge cells.
inline CellIndex quantize(const ReducedMap& map, std::pair<double, double> point)
{
    const auto bin = [&](double v, std::pair<double, double> b) {
        const double t = (v - b.first) / (b.second - b.first);
        if (!(t > 0.0))
            return 0;
        const double cell = std::floor(t * map.grid_n);
        return static_cast<int>(std::min<double>(cell, map.grid_n - 1));
    };
    return {bin(point.first, map.bounds[0]), bin(point.second, map.bounds[1])};
}

// Persistence: {d, mean, basis, bounds, grid_n}.

inline void to_json(nlohmann::json& j, const ReducedMap& m)
{
    j = {{"d", m.dim()},
         {"mean", m.mean},
         {"basis", {m.basis[0], m.basis[1]}},
         {"bounds", {{m.bounds[0].first, m.bounds[0].second}, {m.bounds[1].first, m.bounds[1].second}}},
         {"grid_n", m.grid_n}};
}

inline void from_json(const nlohmann::json& j, ReducedMap& m)
{
    const auto d = j.at("d").get<std::size_t>();
    m.mean = j.at("mean").get<std::vector<double>>();
    const auto& basis = j.at("basis");
    const auto& bounds = j.at("bounds");
    if (m.mean.size() != d || !basis.is_array() || basis.size() != 2 || !bounds.is_array() || bounds.size() != 2)
        throw std::invalid_argument("map document: inconsistent shape");
    for (std::size_t a = 0; a < 2; ++a) {
        m.basis[a] = basis[a].get<std::vector<double>>();
        if (m.basis[a].size() != d)
            throw std::invalid_argument("map document: basis row has wrong length");
        m.bounds[a] = {bounds[a].at(0).get<double>(), bounds[a].at(1).get<double>()};
        if (!(m.bounds[a].first < m.bounds[a].second))
            throw std::invalid_argument("map document: bounds must satisfy min < max");
    }
    m.grid_n = j.at("grid_n").get<int>();
    if (m.grid_n < 2)
        throw std::invalid_argument("map document: grid_n must be at least 2");
}

struct ImportedFeature {
    std::string id;
    FeatureVector values;
};

/// Line-delimited {"id": ..., "values": [...]} records; all rows must share
/// one dimension.
inline std::vector<ImportedFeature> read_feature_file(std::istream& in)
{
    std::vector<ImportedFeature> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ImportedFeature f{j.at("id").get<std::string>(), j.at("values").get<FeatureVector>()};
            if (!out.empty() && f.values.size() != out.front().values.size())
                throw std::invalid_argument("dimension differs from earlier rows");
            if (std::any_of(f.values.begin(), f.values.end(), [](double v) { return !std::isfinite(v); }))
                throw std::invalid_argument("non-finite value");
            out.push_back(std::move(f));
        }
        catch (const std::exception& e) {
            throw std::runtime_error("feature file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace qdart
