#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rng.hpp"

namespace qdart {

inline constexpr double kInitialRating = 1500.0;
inline constexpr double kInitialRd = 350.0;
inline constexpr double kDefaultRdThreshold = 250.0;

struct RatedImage {
    std::string id;
    double rating = kInitialRating;
    double rd = kInitialRd;
    int games = 0;
    std::optional<double> direct_score;

    friend bool operator==(const RatedImage&, const RatedImage&) = default;
};

enum class Result { a_wins, b_wins, draw };

inline std::string to_string(Result r)
{
    switch (r) {
    case Result::a_wins: return "a";
    case Result::b_wins: return "b";
    case Result::draw: return "draw";
    }
    return "draw";
}

inline Result parse_result(const std::string& s)
{
    if (s == "a")
        return Result::a_wins;
    if (s == "b")
        return Result::b_wins;
    if (s == "draw")
        return Result::draw;
    throw std::invalid_argument("result must be \"a\", \"b\" or \"draw\"");
}

/// One pairwise judgement. `ts` is informational (seconds since epoch).
struct Outcome {
    std::string a;
    std::string b;
    Result result = Result::draw;
    std::int64_t ts = 0;

    friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct OpponentResult {
    double rating;
    double rd;
    double score; // 1 win, 0.5 draw, 0 loss
};

namespace glicko {

inline const double q = std::log(10.0) / 400.0;

inline double g(double rd)
{
    constexpr double pi2 = 3.14159265358979323846 * 3.14159265358979323846;
    return 1.0 / std::sqrt(1.0 + 3.0 * q * q * rd * rd / pi2);
}

inline double expected(double r, double rj, double rdj) { return 1.0 / (1.0 + std::pow(10.0, -g(rdj) * (r - rj) / 400.0)); }

} // namespace glicko

/// One Glicko rating-period update against all `opponents` (no RD decay
/// between periods).
inline RatedImage glicko_update(const RatedImage& player, const std::vector<OpponentResult>& opponents)
{
    if (opponents.empty())
        throw std::invalid_argument("glicko_update: empty opponent list");
    if (!(player.rd > 0.0))
        throw std::invalid_argument("glicko_update: rating deviation must be positive");
    double inv_d2 = 0.0, delta = 0.0;
    for (const auto& o : opponents) {
        if (!(o.rd > 0.0) || !(o.score >= 0.0 && o.score <= 1.0))
            throw std::invalid_argument("glicko_update: invalid opponent");
        const double gj = glicko::g(o.rd);
        const double e = glicko::expected(player.rating, o.rating, o.rd);
        inv_d2 += gj * gj * e * (1.0 - e);
        delta += gj * (o.score - e);
    }
    inv_d2 *= glicko::q * glicko::q;
    const double precision = 1.0 / (player.rd * player.rd) + inv_d2;
    RatedImage out = player;
    out.rating = player.rating + glicko::q / precision * delta;
    out.rd = std::sqrt(1.0 / precision);
    out.games += static_cast<int>(opponents.size());
    return out;
}

/// Applies a batch of outcomes as one rating period: every image is updated
/// against its opponents' pre-period ratings. Unknown ids throw.
inline void apply_rating_period(std::vector<RatedImage>& pool, const std::unordered_map<std::string, std::size_t>& index,
                                const Outcome* first, const Outcome* last)
{
    std::map<std::size_t, std::vector<OpponentResult>> games;
    const auto lookup = [&](const std::string& id) {
        const auto it = index.find(id);
        if (it == index.end())
            throw std::invalid_argument("unknown image id: " + id);
        return it->second;
    };
    for (const Outcome* o = first; o != last; ++o) {
        const std::size_t ia = lookup(o->a), ib = lookup(o->b);
        if (ia == ib)
            throw std::invalid_argument("outcome pairs an image with itself: " + o->a);
        const double sa = o->result == Result::a_wins ? 1.0 : (o->result == Result::draw ? 0.5 : 0.0);
        games[ia].push_back({pool[ib].rating, pool[ib].rd, sa});
        games[ib].push_back({pool[ia].rating, pool[ia].rd, 1.0 - sa});
    }
    std::vector<std::pair<std::size_t, RatedImage>> updated;
    for (const auto& [i, opp] : games)
        updated.emplace_back(i, glicko_update(pool[i], opp));
    for (auto& [i, r] : updated)
        pool[i] = std::move(r);
}

inline bool session_complete(const std::vector<RatedImage>& pool, double rd_threshold = kDefaultRdThreshold)
{
    return std::all_of(pool.begin(), pool.end(), [&](const RatedImage& r) { return r.rd < rd_threshold; });
}

inline double max_rd(const std::vector<RatedImage>& pool)
{
    double m = 0.0;
    for (const auto& r : pool)
        m = std::max(m, r.rd);
    return m;
}

inline constexpr std::size_t kPairingNeighbours = 10;

/// Pairing policy: the image with the largest RD (ties broken by the seeded
/// generator) meets one of its 10 nearest neighbours by rating, skipping
/// pairs listed in `recent` unless nothing else is left.
inline std::pair<std::string, std::string> next_pair(const std::vector<RatedImage>& pool, std::uint64_t seed,
                                                     const std::vector<std::pair<std::string, std::string>>& recent = {})
{
    if (pool.size() < 2)
        throw std::invalid_argument("next_pair: pool needs at least two images");
    Rng rng(seed);
    const double top = max_rd(pool);
    std::vector<std::size_t> widest;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].rd == top)
            widest.push_back(i);
    const std::size_t focus = widest[rng.below(widest.size())];

    std::set<std::pair<std::string, std::string>> played;
    for (const auto& [x, y] : recent)
        played.insert(std::minmax(x, y));

    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (i != focus)
            others.push_back(i);
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(pool[a].rating - pool[focus].rating) < std::abs(pool[b].rating - pool[focus].rating);
    });
    std::vector<std::size_t> fresh;
    for (std::size_t i : others) {
        if (!played.count(std::minmax(pool[focus].id, pool[i].id)))
            fresh.push_back(i);
        if (fresh.size() == kPairingNeighbours)
            break;
    }
    if (fresh.empty())
        fresh.assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(std::min(kPairingNeighbours, others.size())));
    const std::size_t opponent = fresh[rng.below(fresh.size())];
    return {pool[focus].id, pool[opponent].id};
}

inline constexpr std::size_t kDefaultBatchSize = 10;

/// Ranking session: a fixed pool of images and an append-only outcome log.
/// Outcomes are grouped into rating periods of `batch_size`; the reported
/// ratings apply the open (partial) period on top of the closed ones, so
/// ratings are always a pure function of the log.
class Session {
public:
    explicit Session(std::vector<std::string> ids, std::size_t batch_size = kDefaultBatchSize) : batch_size_(batch_size)
    {
        if (batch_size_ == 0)
            throw std::invalid_argument("Session: batch size must be positive");
        for (auto& id : ids) {
            if (index_.count(id))
                throw std::invalid_argument("Session: duplicate id " + id);
            index_[id] = committed_.size();
            RatedImage img;
            img.id = std::move(id);
            committed_.push_back(std::move(img));
        }
    }

    /// Validates and appends; closes the period once it holds batch_size outcomes.
    void record(const Outcome& o)
    {
        if (!index_.count(o.a) || !index_.count(o.b))
            throw std::invalid_argument("Session::record: unknown image id");
        if (o.a == o.b)
            throw std::invalid_argument("Session::record: an image cannot play itself");
        log_.push_back(o);
        if (log_.size() - period_start_ == batch_size_) {
            apply_rating_period(committed_, index_, log_.data() + period_start_, log_.data() + log_.size());
            period_start_ = log_.size();
        }
    }

    void set_score(const std::string& id, double score)
    {
        if (!(score >= 0.0 && score <= 5.0))
            throw std::invalid_argument("direct score must lie in [0,5]");
        const auto it = index_.find(id);
        if (it == index_.end())
            throw std::invalid_argument("Session::set_score: unknown image id");
        committed_[it->second].direct_score = score;
    }

    std::vector<RatedImage> ratings() const
    {
        auto pool = committed_;
        if (period_start_ < log_.size())
            apply_rating_period(pool, index_, log_.data() + period_start_, log_.data() + log_.size());
        return pool;
    }

    /// Outcomes from the most recent `n` entries, as id pairs.
    std::vector<std::pair<std::string, std::string>> recent_pairs(std::size_t n = 20) const
    {
        std::vector<std::pair<std::string, std::string>> out;
        for (std::size_t i = log_.size() > n ? log_.size() - n : 0; i < log_.size(); ++i)
            out.emplace_back(log_[i].a, log_[i].b);
        return out;
    }

    std::pair<std::string, std::string> next_pair(std::uint64_t seed) const
    {
        return qdart::next_pair(ratings(), derive_seed(seed, log_.size()), recent_pairs());
    }

    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    const std::vector<Outcome>& log() const noexcept { return log_; }
    std::size_t batch_size() const noexcept { return batch_size_; }
    std::size_t size() const noexcept { return committed_.size(); }

private:
    std::size_t batch_size_;
    std::vector<RatedImage> committed_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Outcome> log_;
    std::size_t period_start_ = 0;
};

/// Rebuilds ratings by folding a log through a fresh session.
inline std::vector<RatedImage> replay(const std::vector<std::string>& ids, const std::vector<Outcome>& log,
                                      std::size_t batch_size = kDefaultBatchSize)
{
    Session s(ids, batch_size);
    for (const auto& o : log)
        s.record(o);
    return s.ratings();
}

// Outcome log: one JSON object per line, {"a","b","result","ts"}.

inline void to_json(nlohmann::json& j, const Outcome& o) { j = {{"a", o.a}, {"b", o.b}, {"result", to_string(o.result)}, {"ts", o.ts}}; }

inline void from_json(const nlohmann::json& j, Outcome& o)
{
    o.a = j.at("a").get<std::string>();
    o.b = j.at("b").get<std::string>();
    o.result = parse_result(j.at("result").get<std::string>());
    o.ts = j.value("ts", std::int64_t{0});
}

inline std::vector<Outcome> read_outcome_log(std::istream& in)
{
    std::vector<Outcome> log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            log.push_back(nlohmann::json::parse(line).get<Outcome>());
        }
        catch (const std::exception& e) {
            throw std::runtime_error("outcome log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return log;
}

inline void write_outcome(std::ostream& out, const Outcome& o) { out << nlohmann::json(o).dump() << '\n'; }

inline std::string ratings_csv(const std::vector<RatedImage>& pool)
{
    std::ostringstream os;
    os.precision(10);
    os << "id,rating,rd,games,direct_score\n";
    for (const auto& r : pool) {
        os << r.id << ',' << r.rating << ',' << r.rd << ',' << r.games << ',';
        if (r.direct_score)
            os << *r.direct_score;
        os << '\n';
    }
    return os.str();
}

/// Images sorted by rating, best first (ties by id).
inline std::vector<RatedImage> ranked(std::vector<RatedImage> pool)
{
    std::stable_sort(pool.begin(), pool.end(), [](const RatedImage& a, const RatedImage& b) {
        return a.rating != b.rating ? a.rating > b.rating : a.id < b.id;
    });
    return pool;
}

} // namespace qdart
