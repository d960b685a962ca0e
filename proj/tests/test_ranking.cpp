#include <gtest/gtest.h>

#include <qdart/ranking.hpp>

#include "oracles.hpp"

#include <numbers>
#include <sstream>

using namespace qdart;

namespace {

RatedImage rated(std::string id, double r = kInitialRating, double rd = kInitialRd)
{
    RatedImage img;
    img.id = std::move(id);
    img.rating = r;
    img.rd = rd;
    return img;
}

} // namespace

TEST(Glicko, WorkedExample)
{
    const auto p = rated("p", 1500, 200);
    const auto out = glicko_update(p, {{1400, 30, 1.0}, {1550, 100, 0.0}, {1700, 300, 0.0}});
    EXPECT_NEAR(out.rating, 1464.1, 0.5);
    EXPECT_NEAR(out.rd, 151.4, 0.5);
    EXPECT_EQ(out.games, 3);
    const auto oracle = oracle::glicko(1500, 200, {{{1400, 30, 1.0}}, {{1550, 100, 0.0}}, {{1700, 300, 0.0}}});
    EXPECT_NEAR(out.rating, oracle.r, 1e-9);
    EXPECT_NEAR(out.rd, oracle.rd, 1e-9);
}

TEST(Glicko, MatchesOracleOnRandomPeriods)
{
    Rng rng(10);
    for (int trial = 0; trial < 500; ++trial) {
        const double r0 = rng.uniform(1000, 2000);
        const auto p = rated("p", r0, rng.uniform(30, 350));
        std::vector<OpponentResult> opp;
        std::vector<std::array<double, 3>> games;
        const int n = 1 + static_cast<int>(rng.below(6));
        for (int k = 0; k < n; ++k) {
            const double s = 0.5 * static_cast<double>(rng.below(3));
            opp.push_back({rng.uniform(1000, 2000), rng.uniform(30, 350), s});
            games.push_back({opp.back().rating, opp.back().rd, s});
        }
        const auto out = glicko_update(p, opp);
        const auto oracle = oracle::glicko(p.rating, p.rd, games);
        ASSERT_NEAR(out.rating, oracle.r, 1e-9);
        ASSERT_NEAR(out.rd, oracle.rd, 1e-9);
        ASSERT_LT(out.rd, p.rd);
    }
}

TEST(Glicko, DrawBetweenEqualsOnlyShrinksDeviation)
{
    std::vector<RatedImage> pool{rated("a"), rated("b")};
    const std::unordered_map<std::string, std::size_t> index{{"a", 0}, {"b", 1}};
    const Outcome o{"a", "b", Result::draw, 0};
    apply_rating_period(pool, index, &o, &o + 1);
    EXPECT_DOUBLE_EQ(pool[0].rating, 1500.0);
    EXPECT_DOUBLE_EQ(pool[1].rating, 1500.0);
    EXPECT_LT(pool[0].rd, kInitialRd);
    EXPECT_LT(pool[1].rd, kInitialRd);
}

TEST(Glicko, DrawMovesRatingsTowardEachOther)
{
    std::vector<RatedImage> pool{rated("a", 1700, 200), rated("b", 1400, 200)};
    const std::unordered_map<std::string, std::size_t> index{{"a", 0}, {"b", 1}};
    const Outcome o{"a", "b", Result::draw, 0};
    apply_rating_period(pool, index, &o, &o + 1);
    EXPECT_LT(pool[0].rating, 1700);
    EXPECT_GT(pool[1].rating, 1400);
}

TEST(Glicko, EmptyOpponentListIsRejected)
{
    EXPECT_THROW(glicko_update(rated("p"), {}), std::invalid_argument);
}

TEST(Session, PeriodsUsePreBatchRatings)
{
    // Within one period every game is scored against the opponents'
    // ratings from before the period.
    Session s({"a", "b", "c"}, 3);
    s.record({"a", "b", Result::a_wins, 0});
    s.record({"b", "c", Result::a_wins, 0});
    s.record({"a", "c", Result::b_wins, 0});
    const auto r = s.ratings();
    const auto a = oracle::glicko(1500, 350, {{{1500, 350, 1.0}}, {{1500, 350, 0.0}}});
    EXPECT_NEAR(r[0].rating, a.r, 1e-9);
    EXPECT_NEAR(r[0].rd, a.rd, 1e-9);
}

TEST(Session, ProvisionalRatingsEqualReplayOfTheLog)
{
    Session live({"a", "b", "c", "d"});
    Rng rng(1);
    for (int i = 0; i < 37; ++i) {
        const auto [x, y] = live.next_pair(99);
        live.record({x, y, static_cast<Result>(rng.below(3)), i});
        EXPECT_EQ(live.ratings(), replay({"a", "b", "c", "d"}, live.log()));
    }
}

TEST(Session, RecordValidatesIds)
{
    Session s({"a", "b"});
    EXPECT_THROW(s.record({"a", "zzz", Result::draw, 0}), std::invalid_argument);
    EXPECT_THROW(s.record({"a", "a", Result::draw, 0}), std::invalid_argument);
    EXPECT_THROW(Session({"a", "a"}), std::invalid_argument);
    EXPECT_THROW(s.set_score("a", 5.5), std::invalid_argument);
    s.set_score("a", 5.0);
    EXPECT_EQ(s.ratings()[0].direct_score, 5.0);
}

TEST(Pairing, TwoImageCorpusReturnsBoth)
{
    Session s({"x", "y"});
    const auto [a, b] = s.next_pair(3);
    EXPECT_NE(a, b);
    EXPECT_TRUE((a == "x" && b == "y") || (a == "y" && b == "x"));
}

TEST(Pairing, FocusIsTheWidestDeviation)
{
    std::vector<RatedImage> pool;
    for (int i = 0; i < 30; ++i)
        pool.push_back(rated("i" + std::to_string(i), 1300.0 + 10 * i, 100.0));
    pool[17].rd = 300;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto [a, b] = next_pair(pool, seed);
        EXPECT_EQ(a, "i17");
        // Opponent among the 10 closest ratings.
        const int j = std::stoi(b.substr(1));
        EXPECT_LE(std::abs(j - 17), 5);
    }
}

TEST(Pairing, AvoidsRecentPairsWhenPossible)
{
    std::vector<RatedImage> pool{rated("a", 1500, 300), rated("b", 1500, 100), rated("c", 1500, 100)};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto [x, y] = next_pair(pool, seed, {{"b", "a"}});
        EXPECT_EQ(x, "a");
        EXPECT_EQ(y, "c");
    }
    // Everything excluded: falls back rather than failing.
    EXPECT_NO_THROW(next_pair(pool, 1, {{"a", "b"}, {"a", "c"}}));
}

TEST(OutcomeLog, JsonLinesRoundTrip)
{
    std::stringstream ss;
    const std::vector<Outcome> log{{"a", "b", Result::a_wins, 1}, {"b", "c", Result::draw, 2}, {"c", "a", Result::b_wins, 3}};
    for (const auto& o : log)
        write_outcome(ss, o);
    EXPECT_EQ(read_outcome_log(ss), log);
    std::stringstream bad(R"({"a":"x","b":"y","result":"maybe"})");
    EXPECT_THROW(read_outcome_log(bad), std::runtime_error);
}

TEST(OutcomeLog, ReplayIsBitStable)
{
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i)
        ids.push_back("n" + std::to_string(i));
    Session s(ids);
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto [a, b] = s.next_pair(7);
        s.record({a, b, static_cast<Result>(rng.below(3)), i});
    }
    std::stringstream ss;
    for (const auto& o : s.log())
        write_outcome(ss, o);
    const auto back = read_outcome_log(ss);
    const auto r1 = replay(ids, back), r2 = replay(ids, back);
    ASSERT_EQ(r1, r2);
    EXPECT_EQ(r1, s.ratings());
    EXPECT_EQ(ratings_csv(r1), ratings_csv(s.ratings()));
}

TEST(Ranked, SortsByRatingThenId)
{
    const auto r = ranked({rated("b"), rated("a"), rated("c", 1600)});
    EXPECT_EQ(r[0].id, "c");
    EXPECT_EQ(r[1].id, "a");
    EXPECT_EQ(r[2].id, "b");
}
