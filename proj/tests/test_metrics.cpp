#include <gtest/gtest.h>

#include <qdart/metrics.hpp>
#include <qdart/rng.hpp>

#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qdart;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed)
{
    GrayImage img(w, h);
    Rng rng(seed);
    for (double& v : img.pixels())
        v = std::round(rng.uniform() * 255.0) / 255.0;
    return img;
}

} // namespace

TEST(Euler, MatchesFloodFillOnEveryFourByFourImage)
{
    std::vector<std::uint8_t> fg(16);
    for (int bits = 0; bits < (1 << 16); ++bits) {
        for (int i = 0; i < 16; ++i)
            fg[static_cast<std::size_t>(i)] = (bits >> i) & 1;
        ASSERT_EQ(euler_number(fg, 4, 4), oracle::euler_by_flood_fill(fg, 4, 4)) << "mask " << bits;
    }
}

TEST(Euler, MatchesFloodFillOnRandomLargerMasks)
{
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = 5 + static_cast<int>(rng.below(20)), h = 5 + static_cast<int>(rng.below(20));
        const double density = rng.uniform(0.2, 0.8);
        std::vector<std::uint8_t> fg(static_cast<std::size_t>(w * h));
        for (auto& v : fg)
            v = rng.uniform() < density;
        ASSERT_EQ(euler_number(fg, w, h), oracle::euler_by_flood_fill(fg, w, h));
    }
}

TEST(Euler, RingHasEulerZero)
{
    const int w = 7, h = 7;
    std::vector<std::uint8_t> fg(w * h, 0);
    for (int y = 1; y < 6; ++y)
        for (int x = 1; x < 6; ++x)
            fg[y * w + x] = (x == 1 || x == 5 || y == 1 || y == 5);
    EXPECT_EQ(euler_number(fg, w, h), 0);
}

TEST(FractalDimension, FilledSquareIsTwoLineIsOne)
{
    const int n = 256;
    std::vector<std::uint8_t> square(n * n, 0), line(n * n, 0);
    for (int y = 32; y < 224; ++y)
        for (int x = 32; x < 224; ++x)
            square[y * n + x] = 1;
    for (int x = 10; x < 250; ++x)
        line[128 * n + x] = 1;
    EXPECT_NEAR(fractal_dimension(square, n, n), 2.0, 0.15);
    EXPECT_NEAR(fractal_dimension(line, n, n), 1.0, 0.15);
}

TEST(FractalDimension, EmptyMaskIsZero)
{
    std::vector<std::uint8_t> none(64 * 64, 0);
    EXPECT_EQ(fractal_dimension(none, 64, 64), 0.0);
}

TEST(Metrics, HistogramStatisticsMatchDirectComputation)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto img = random_image(37, 23, seed);
        const auto m = compute_metrics(img);

        std::vector<double> counts(256, 0.0);
        for (double v : img.pixels())
            counts[static_cast<std::size_t>(std::lround(v * 255))] += 1;
        const double n = static_cast<double>(img.size());
        double mean_bin = 0, entropy = 0, energy = 0;
        for (int b = 0; b < 256; ++b) {
            const double p = counts[b] / n;
            mean_bin += p * b;
            if (p > 0)
                entropy -= p * std::log(p) / std::log(2.0);
            energy += p * p;
        }
        double m2 = 0, m3 = 0;
        for (int b = 0; b < 256; ++b) {
            const double p = counts[b] / n;
            m2 += p * std::pow(b - mean_bin, 2);
            m3 += p * std::pow(b - mean_bin, 3);
        }
        EXPECT_NEAR(m.entropy, entropy, 1e-9);
        EXPECT_NEAR(m.energy, energy, 1e-9);
        EXPECT_NEAR(m.skew, m3 / std::pow(m2, 1.5), 1e-9);
    }
}

TEST(Metrics, MomentsAndCentroid)
{
    GrayImage img(4, 2, 0.0);
    img.at(3, 0) = 1.0;
    img.at(3, 1) = 1.0;
    const auto m = compute_metrics(img);
    EXPECT_DOUBLE_EQ(m.mean, 0.25);
    EXPECT_DOUBLE_EQ(m.variance, 0.1875);
    EXPECT_DOUBLE_EQ(m.cx, 3.5 / 4.0);
    EXPECT_DOUBLE_EQ(m.cy, 0.5);
}

TEST(Metrics, UniformImageHasZeroEntropyAndUnitEnergy)
{
    const auto m = compute_metrics(GrayImage(16, 16, 1.0));
    EXPECT_EQ(m.entropy, 0.0);
    EXPECT_EQ(m.energy, 1.0);
    EXPECT_EQ(m.skew, 0.0);
    EXPECT_EQ(m.euler, 0);
    const auto black = compute_metrics(GrayImage(16, 16, 0.0));
    EXPECT_EQ(black.euler, 1);
    EXPECT_EQ(black.cx, 0.5); // no weight anywhere: centered
}

TEST(BatchMetrics, SkipsUndecodableFilesWithDiagnostics)
{
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "qdart_batch_metrics";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_png(dir / "b.png", random_image(20, 10, 1));
    write_png(dir / "a.png", random_image(20, 10, 2));
    std::ofstream(dir / "broken.png") << "not a png";
    std::ofstream(dir / "notes.txt") << "ignored";

    const auto table = batch_metrics(dir, 2);
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_EQ(table.rows[0].id, "a");
    EXPECT_EQ(table.rows[1].id, "b");
    ASSERT_EQ(table.diagnostics.size(), 1u);
    EXPECT_NE(table.diagnostics[0].find("broken.png"), std::string::npos);
    EXPECT_EQ(batch_metrics(dir, 1).rows[0].metrics, table.rows[0].metrics);

    std::istringstream csv(to_csv(table));
    const auto back = metric_table_from_csv(csv);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[1].id, "b");
    EXPECT_EQ(back.rows[1].metrics, table.rows[1].metrics); // 17 digits round-trip
    fs::remove_all(dir);
}

TEST(BatchMetrics, MissingDirectoryThrows)
{
    EXPECT_THROW(batch_metrics("/nonexistent/qdart"), std::runtime_error);
}
