#include <gtest/gtest.h>

#include <qdart/genome.hpp>
#include <qdart/parallel.hpp>
#include <qdart/rng.hpp>

#include <atomic>
#include <set>

using namespace qdart;

TEST(Rng, UniformStaysInHalfOpenUnitInterval)
{
    Rng rng(7);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, BelowIsUnbiasedAcrossBuckets)
{
    Rng rng(11);
    std::array<int, 7> counts{};
    const int draws = 70000;
    for (int i = 0; i < draws; ++i)
        ++counts[rng.below(7)];
    for (int c : counts)
        EXPECT_NEAR(c, draws / 7, 400);
}

TEST(Rng, SameSeedSameStream)
{
    Rng a(123), b(123), c(124);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        differs |= x != c.next();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, DerivedSeedsAreDistinct)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t g = 0; g < 50; ++g)
        for (std::uint64_t k = 0; k < 50; ++k)
            seen.insert(derive_seed(99, g, k));
    EXPECT_EQ(seen.size(), 2500u);
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
}

TEST(Genotype, RejectsGenesOutsideUnitInterval)
{
    Genotype::Genes genes{};
    genes.fill(0.5);
    genes[4] = 1.0000001;
    EXPECT_THROW(Genotype{genes}, std::invalid_argument);
    genes[4] = -0.1;
    EXPECT_THROW(Genotype{genes}, std::invalid_argument);
    genes[4] = std::nan("");
    EXPECT_THROW(Genotype{genes}, std::invalid_argument);
}

TEST(Genotype, JsonRoundTrip)
{
    const auto g = random_genotype(5);
    const nlohmann::json j = g;
    ASSERT_TRUE(j.is_array());
    EXPECT_EQ(j.size(), kGeneCount);
    EXPECT_EQ(j.get<Genotype>(), g);
    EXPECT_THROW(nlohmann::json::parse("[0.1, 0.2]").get<Genotype>(), std::invalid_argument);
    EXPECT_THROW(nlohmann::json::parse(R"([0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,2])").get<Genotype>(), std::invalid_argument);
}

TEST(Mutate, ZeroRateOrZeroFactorIsIdentity)
{
    const auto g = random_genotype(3);
    for (std::uint64_t s = 0; s < 20; ++s) {
        EXPECT_EQ(mutate(g, 0.0, 0.5, s), g);
        EXPECT_EQ(mutate(g, 1.0, 0.0, s), g);
    }
}

TEST(Mutate, GenesStayInRangeAndMoveByAtMostFactor)
{
    for (std::uint64_t s = 0; s < 500; ++s) {
        const auto parent = random_genotype(s);
        const auto child = mutate(parent, 0.25, 0.15, s + 1000);
        for (std::size_t i = 0; i < kGeneCount; ++i) {
            ASSERT_GE(child[i], 0.0);
            ASSERT_LE(child[i], 1.0);
            ASSERT_LE(std::abs(child[i] - parent[i]), 0.15 + 1e-15);
        }
    }
}

TEST(Mutate, RateControlsFractionOfChangedGenes)
{
    int changed = 0, total = 0;
    for (std::uint64_t s = 0; s < 2000; ++s) {
        const auto parent = random_genotype(s);
        const auto child = mutate(parent, 0.25, 0.15, s + 77);
        for (std::size_t i = 0; i < kGeneCount; ++i) {
            changed += child[i] != parent[i];
            ++total;
        }
    }
    EXPECT_NEAR(static_cast<double>(changed) / total, 0.25, 0.01);
}

TEST(Mutate, ClampsAtTheBoundaries)
{
    Genotype::Genes ones{};
    ones.fill(1.0);
    const auto child = mutate(Genotype(ones), 1.0, 1.0, 4);
    for (std::size_t i = 0; i < kGeneCount; ++i)
        EXPECT_LE(child[i], 1.0);
}

TEST(Mutate, RejectsBadParameters)
{
    const Genotype g;
    EXPECT_THROW(mutate(g, 1.5, 0.1, 1), std::invalid_argument);
    EXPECT_THROW(mutate(g, 0.1, -0.1, 1), std::invalid_argument);
}

TEST(Decode, AlgorithmEndpoints)
{
    EXPECT_EQ(decode_algorithm(0.0), NoiseAlgorithm::value);
    EXPECT_EQ(decode_algorithm(1.0), NoiseAlgorithm::ridged);
    EXPECT_EQ(decode_algorithm(0.2), NoiseAlgorithm::perlin);
    EXPECT_EQ(decode_algorithm(0.1999999), NoiseAlgorithm::value);
    EXPECT_EQ(decode_algorithm(0.7), NoiseAlgorithm::curl_perlin);
}

TEST(Decode, MapsGenesLinearlyIntoRanges)
{
    Genotype::Genes lo{}, hi{};
    lo.fill(0.0);
    hi.fill(1.0);
    const GeneRanges r;
    const auto a = decode(Genotype(lo), r);
    const auto b = decode(Genotype(hi), r);
    EXPECT_DOUBLE_EQ(a.border_width, 0.0);
    EXPECT_DOUBLE_EQ(b.border_width, 400.0);
    EXPECT_EQ(a.agent_count, 8);
    EXPECT_EQ(b.agent_count, 512);
    EXPECT_EQ(a.noise_octaves, 1);
    EXPECT_EQ(b.noise_octaves, 6);
    EXPECT_EQ(a.pen_count, 1);
    EXPECT_EQ(b.pen_count, 4);
    EXPECT_DOUBLE_EQ(b.noise_freq_x, 0.02);
    EXPECT_EQ(a.agent_lifetime, kDefaultLifetime);
}

TEST(GeneRanges, PartialJsonOverridesAndUnknownKeysFail)
{
    auto r = nlohmann::json::parse(R"({"agent_count": [4, 16]})").get<GeneRanges>();
    EXPECT_EQ(r.agent_count, (GeneRange{4, 16}));
    EXPECT_EQ(r.border_width, GeneRanges{}.border_width);
    EXPECT_THROW(nlohmann::json::parse(R"({"agent_cnt": [4, 16]})").get<GeneRanges>(), std::invalid_argument);
    EXPECT_THROW(nlohmann::json::parse(R"({"agent_count": [16, 4]})").get<GeneRanges>(), std::invalid_argument);
    const nlohmann::json round = GeneRanges{};
    EXPECT_EQ(round.get<GeneRanges>(), GeneRanges{});
}

TEST(ParallelFor, VisitsEveryIndexOnceAndRethrows)
{
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits)
        EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(100, 4,
                              [](std::size_t i) {
                                  if (i == 42)
                                      throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}
