#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "image.hpp"
#include "parallel.hpp"

namespace qdart {

/// Statistical, information and morphological measures of one image.
struct MetricVector {
    double mean = 0;
    double variance = 0;
    double cx = 0.5;
    double cy = 0.5;
    double skew = 0;
    double entropy = 0;
    double energy = 1;
    int euler = 0;
    double fractal_dim = 0;

    friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

inline constexpr double kBinarizeThreshold = 0.5;
inline constexpr std::array<int, 6> kBoxSizes = {2, 4, 8, 16, 32, 64};

/// Names of the numeric metric columns, in CSV order after `id`.
inline const std::vector<std::string>& metric_names()
{
    static const std::vector<std::string> names = {"mean",    "variance", "cx",    "cy",         "skew",
                                                   "entropy", "energy",   "euler", "fractal_dim"};
    return names;
}

inline double metric_value(const MetricVector& m, std::size_t column)
{
    switch (column) {
    case 0: return m.mean;
    case 1: return m.variance;
    case 2: return m.cx;
    case 3: return m.cy;
    case 4: return m.skew;
    case 5: return m.entropy;
    case 6: return m.energy;
    case 7: return m.euler;
    case 8: return m.fractal_dim;
    }
    throw std::out_of_range("metric_value: bad column");
}

/// 8-bit histogram bin of an intensity.
inline int intensity_bin(double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

inline std::array<double, 256> histogram(const GrayImage& img)
{
    std::array<double, 256> h{};
    for (double v : img.pixels())
        h[static_cast<std::size_t>(intensity_bin(v))] += 1.0;
    for (double& c : h)
        c /= static_cast<double>(img.size());
    return h;
}

/// Foreground mask: dark pixels (intensity below the threshold).
inline std::vector<std::uint8_t> binarize(const GrayImage& img, double threshold = kBinarizeThreshold)
{
    std::vector<std::uint8_t> fg(img.size());
    std::transform(img.pixels().begin(), img.pixels().end(), fg.begin(),
                   [&](double v) { return static_cast<std::uint8_t>(v < threshold); });
    return fg;
}

/// Euler number (components - holes) of a binary mask with 8-connected
/// foreground and 4-connected background, by Gray's bit-quad counts:
/// E = (Q1 - Q3 - 2 QD) / 4 over all 2x2 windows of the zero-padded mask.
inline int euler_number(const std::vector<std::uint8_t>& fg, int width, int height)
{
    const auto at = [&](int x, int y) -> int {
        if (x < 0 || y < 0 || x >= width || y >= height)
            return 0;
        return fg[static_cast<std::size_t>(y) * width + x] ? 1 : 0;
    };
    long q1 = 0, q3 = 0, qd = 0;
    for (int y = -1; y < height; ++y) {
        for (int x = -1; x < width; ++x) {
            const int a = at(x, y), b = at(x + 1, y), c = at(x, y + 1), d = at(x + 1, y + 1);
            const int n = a + b + c + d;
            if (n == 1)
                ++q1;
            else if (n == 3)
                ++q3;
            else if (n == 2 && a == d)
                ++qd;
        }
    }
    return static_cast<int>((q1 - q3 - 2 * qd) / 4);
}

/// Box-counting dimension: least-squares slope of log N(s) against
/// log(1/s) for s in kBoxSizes. Box sizes with N(s) = 0 are dropped; fewer
/// than two usable sizes gives 0.
inline double fractal_dimension(const std::vector<std::uint8_t>& fg, int width, int height)
{
    std::vector<double> xs, ys;
    for (int s : kBoxSizes) {
        const int bw = (width + s - 1) / s, bh = (height + s - 1) / s;
        std::vector<std::uint8_t> hit(static_cast<std::size_t>(bw) * bh, 0);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (fg[static_cast<std::size_t>(y) * width + x])
                    hit[static_cast<std::size_t>(y / s) * bw + x / s] = 1;
        const auto count = std::count(hit.begin(), hit.end(), std::uint8_t{1});
        if (count > 0) {
            xs.push_back(std::log(1.0 / s));
            ys.push_back(std::log(static_cast<double>(count)));
        }
    }
    if (xs.size() < 2)
        return 0.0;
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return std::clamp(sxy / sxx, 0.0, 2.0);
}

inline MetricVector compute_metrics(const GrayImage& img)
{
    if (img.empty() || img.width() == 0 || img.height() == 0)
        throw std::invalid_argument("compute_metrics: empty image");
    MetricVector m;
    const double n = static_cast<double>(img.size());

    double sum = 0, wx = 0, wy = 0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double v = img.at(x, y);
            sum += v;
            wx += v * (x + 0.5);
            wy += v * (y + 0.5);
        }
    }
    m.mean = sum / n;
    double var = 0;
    for (double v : img.pixels())
        var += (v - m.mean) * (v - m.mean);
    m.variance = var / n;
    if (sum > 0) {
        m.cx = wx / sum / img.width();
        m.cy = wy / sum / img.height();
    }

    const auto hist = histogram(img);
    double hmean = 0;
    for (std::size_t b = 0; b < hist.size(); ++b)
        hmean += hist[b] * static_cast<double>(b);
    double m2 = 0, m3 = 0;
    m.entropy = 0;
    m.energy = 0;
    for (std::size_t b = 0; b < hist.size(); ++b) {
        const double p = hist[b];
        if (p <= 0)
            continue;
        const double d = static_cast<double>(b) - hmean;
        m2 += p * d * d;
        m3 += p * d * d * d;
        m.entropy -= p * std::log2(p);
        m.energy += p * p;
    }
    m.skew = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;

    const auto fg = binarize(img);
    m.euler = euler_number(fg, img.width(), img.height());
    m.fractal_dim = fractal_dimension(fg, img.width(), img.height());
    return m;
}

/// One metric row per image id.
struct MetricRow {
    std::string id;
    MetricVector metrics;
};

struct MetricTable {
    std::vector<MetricRow> rows;
    std::vector<std::string> diagnostics;
};

inline const char* kMetricCsvHeader = "id,mean,variance,cx,cy,skew,entropy,energy,euler,fractal_dim";

/// Metrics for every *.png in `dir`, ordered by id (file stem). Files that
/// fail to decode are reported in `diagnostics` and skipped.
inline MetricTable batch_metrics(const std::filesystem::path& dir, unsigned threads = 1)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw std::runtime_error("batch_metrics: not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.stem().string() < b.stem().string(); });

    std::vector<std::optional<MetricVector>> results(files.size());
    std::vector<std::string> errors(files.size());
    parallel_for(files.size(), threads, [&](std::size_t i) {
        try {
            results[i] = compute_metrics(read_png(files[i]));
        }
        catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    MetricTable table;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (results[i])
            table.rows.push_back({files[i].stem().string(), *results[i]});
        else
            table.diagnostics.push_back(files[i].filename().string() + ": " + errors[i]);
    }
    return table;
}

inline std::string to_csv(const MetricTable& table)
{
    std::ostringstream os;
    os.precision(17);
    os << kMetricCsvHeader << '\n';
    for (const auto& row : table.rows) {
        const auto& m = row.metrics;
        os << row.id << ',' << m.mean << ',' << m.variance << ',' << m.cx << ',' << m.cy << ',' << m.skew << ','
           << m.entropy << ',' << m.energy << ',' << m.euler << ',' << m.fractal_dim << '\n';
    }
    return os.str();
}

inline MetricTable metric_table_from_csv(std::istream& in)
{
    MetricTable table;
    std::string line;
    if (!std::getline(in, line) || line != kMetricCsvHeader)
        throw std::runtime_error("metric CSV: missing or unexpected header");
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() != 10) {
            table.diagnostics.push_back("malformed row: " + line);
            continue;
        }
        MetricRow row;
        row.id = cells[0];
        auto& m = row.metrics;
        m.mean = std::stod(cells[1]);
        m.variance = std::stod(cells[2]);
        m.cx = std::stod(cells[3]);
        m.cy = std::stod(cells[4]);
        m.skew = std::stod(cells[5]);
        m.entropy = std::stod(cells[6]);
        m.energy = std::stod(cells[7]);
        m.euler = std::stoi(cells[8]);
        m.fractal_dim = std::stod(cells[9]);
        table.rows.push_back(std::move(row));
    }
    return table;
}

} // namespace qdart
