#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "image.hpp"
#include "metrics.hpp"

namespace qdart {

/// Hat-shaped fitness over mean intensity: zero outside (mu_min, mu_max),
/// linear up to 1 at gamma, linear back down to 0 at mu_max.
struct FitnessConfig {
    double mu_min = 0.05;
    double mu_max = 0.95;
    double gamma = 0.75;

    void validate() const
    {
        if (!(0.0 <= mu_min && mu_min < gamma && gamma < mu_max && mu_max <= 1.0))
            throw std::invalid_argument("FitnessConfig: need 0 <= mu_min < gamma < mu_max <= 1");
    }

    friend bool operator==(const FitnessConfig&, const FitnessConfig&) = default;
};

inline double hat_fitness(double mu, const FitnessConfig& cfg)
{
    cfg.validate();
    if (mu <= cfg.mu_min || mu >= cfg.mu_max)
        return 0.0;
    if (mu <= cfg.gamma)
        return (mu - cfg.mu_min) / (cfg.gamma - cfg.mu_min);
    return (cfg.mu_max - mu) / (cfg.mu_max - cfg.gamma);
}

inline double mean_intensity(const GrayImage& img)
{
    if (img.empty())
        throw std::invalid_argument("mean_intensity: empty image");
    return std::accumulate(img.pixels().begin(), img.pixels().end(), 0.0) / static_cast<double>(img.size());
}

inline double fitness(const GrayImage& img, const FitnessConfig& cfg = {}) { return hat_fitness(mean_intensity(img), cfg); }

inline void to_json(nlohmann::json& j, const FitnessConfig& c) { j = {{"mu_min", c.mu_min}, {"mu_max", c.mu_max}, {"gamma", c.gamma}}; }

inline void from_json(const nlohmann::json& j, FitnessConfig& c)
{
    c.mu_min = j.value("mu_min", c.mu_min);
    c.mu_max = j.value("mu_max", c.mu_max);
    c.gamma = j.value("gamma", c.gamma);
    c.validate();
}

// ---------------------------------------------------------------------------
// Rank correlation

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
            ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

struct Correlation {
    double rho = 0;
    double p_value = 1;
    std::size_t n = 0;
};

inline double pearson(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 0)
        return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Two-sided p-value for a correlation via t = rho sqrt((n-2)/(1-rho^2))
/// with n-2 degrees of freedom.
inline double correlation_p_value(double rho, std::size_t n)
{
    if (n < 3)
        return 1.0;
    if (std::abs(rho) >= 1.0)
        return 0.0;
    const double df = static_cast<double>(n - 2);
    const double t = std::abs(rho) * std::sqrt(df / (1.0 - rho * rho));
    const boost::math::students_t dist(df);
    return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

/// Tie-aware Spearman rank correlation (Pearson on average ranks).
/// A constant input has undefined correlation; it reports rho = 0, p = 1.
inline Correlation spearman(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 3)
        throw std::invalid_argument("spearman: need at least 3 pairs");
    Correlation c;
    c.n = x.size();
    c.rho = pearson(average_ranks(x), average_ranks(y));
    c.p_value = correlation_p_value(c.rho, c.n);
    return c;
}

/// Exact two-sided permutation p-value of Spearman's rho, for small n.
inline double spearman_exact_p(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 3 || x.size() > 10)
        throw std::invalid_argument("spearman_exact_p: need 3 <= n <= 10 pairs");
    const auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    const double observed = std::abs(pearson(rx, ry));
    std::sort(ry.begin(), ry.end());
    std::size_t hits = 0, total = 0;
    do {
        ++total;
        if (std::abs(pearson(rx, ry)) >= observed - 1e-12)
            ++hits;
    } while (std::next_permutation(ry.begin(), ry.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Proxy selection

struct MetricCorrelation {
    std::string metric;
    std::string target; // "score" or "rating"
    Correlation corr;
};

struct CorrelationReport {
    std::vector<MetricCorrelation> entries; // sorted by |rho| descending
    std::optional<Correlation> method_agreement;
    std::vector<std::string> missing_ids;

    const MetricCorrelation* top() const { return entries.empty() ? nullptr : &entries.front(); }
};

/// Correlates every metric column with each available artist ranking.
/// Rows lacking either value are excluded per comparison; ids present in a
/// ranking but absent from the metric table are listed in missing_ids.
inline CorrelationReport proxy_selection(const MetricTable& metrics, const std::map<std::string, double>& scores,
                                         const std::map<std::string, double>& ratings)
{
    if (scores.empty() && ratings.empty())
        throw std::invalid_argument("proxy_selection: need artist scores or ratings");
    CorrelationReport report;
    std::map<std::string, const MetricVector*> by_id;
    for (const auto& row : metrics.rows)
        by_id[row.id] = &row.metrics;

    std::vector<std::string> missing;
    for (const auto* table : {&scores, &ratings})
        for (const auto& [id, _] : *table)
            if (!by_id.count(id))
                missing.push_back(id);
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    report.missing_ids = std::move(missing);

    const auto correlate_target = [&](const std::map<std::string, double>& target, const char* name) {
        std::vector<const MetricVector*> rows;
        std::vector<double> values;
        for (const auto& [id, v] : target) {
            if (auto it = by_id.find(id); it != by_id.end()) {
                rows.push_back(it->second);
                values.push_back(v);
            }
        }
        if (rows.empty() && !target.empty())
            throw std::invalid_argument(std::string("proxy_selection: no ids shared between metrics and ") + name + "s");
        if (rows.size() < 3)
            return;
        for (std::size_t c = 0; c < metric_names().size(); ++c) {
            std::vector<double> column(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                column[i] = metric_value(*rows[i], c);
            report.entries.push_back({metric_names()[c], name, spearman(column, values)});
        }
    };
    correlate_target(scores, "score");
    correlate_target(ratings, "rating");

    std::stable_sort(report.entries.begin(), report.entries.end(), [](const auto& a, const auto& b) {
        return std::abs(a.corr.rho) > std::abs(b.corr.rho);
    });

    std::vector<double> s, r;
    for (const auto& [id, v] : scores) {
        if (auto it = ratings.find(id); it != ratings.end()) {
            s.push_back(v);
            r.push_back(it->second);
        }
    }
    if (s.size() >= 3)
        report.method_agreement = spearman(s, r);
    return report;
}

inline std::string report_csv(const CorrelationReport& report)
{
    std::ostringstream os;
    os.precision(10);
    os << "metric,target,rho,p_value,n\n";
    for (const auto& e : report.entries)
        os << e.metric << ',' << e.target << ',' << e.corr.rho << ',' << e.corr.p_value << ',' << e.corr.n << '\n';
    if (report.method_agreement)
        os << "score_vs_rating,agreement," << report.method_agreement->rho << ',' << report.method_agreement->p_value << ','
           << report.method_agreement->n << '\n';
    return os.str();
}

inline std::string report_text(const CorrelationReport& report)
{
    std::ostringstream os;
    os.precision(4);
    os << "Metric correlations (Spearman), strongest first\n";
    for (const auto& e : report.entries)
        os << "  " << e.metric << " vs " << e.target << ": rho=" << e.corr.rho << " p=" << e.corr.p_value << " n=" << e.corr.n
           << '\n';
    if (report.method_agreement)
        os << "Direct score vs Glicko rating agreement: rho=" << report.method_agreement->rho
           << " p=" << report.method_agreement->p_value << " n=" << report.method_agreement->n << '\n';
    if (const auto* top = report.top())
        os << "Suggested proxy: " << top->metric << '\n';
    if (!report.missing_ids.empty())
        os << report.missing_ids.size() << " ranked id(s) had no metrics and were excluded\n";
    return os.str();
}

} // namespace qdart
