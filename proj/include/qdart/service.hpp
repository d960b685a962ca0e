#pragma once

#include <sys/socket.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

// Before httplib: its resolver headers define a `_res` macro that breaks
// Eigen's product kernels.
#include "qd.hpp"
#include "ranking.hpp"

#include <httplib.h>
#include <json.hpp>

namespace qdart {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080; // 0 picks a free port
    std::filesystem::path corpus;
    std::filesystem::path runs = "runs";
    std::filesystem::path static_dir; // optional UI assets
    double rd_threshold = kDefaultRdThreshold;
    std::uint64_t seed = 1;
    std::chrono::seconds rater_lease{300};
};

/// Image ids of a corpus directory: stems of its *.png files, sorted.
inline std::vector<std::string> corpus_ids(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        throw std::runtime_error("corpus directory not found or unreadable: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            ids.push_back(entry.path().stem().string());
    if (ec)
        throw std::runtime_error("cannot list corpus directory " + dir.string() + ": " + ec.message());
    std::sort(ids.begin(), ids.end());
    if (ids.size() < 2)
        throw std::runtime_error("corpus " + dir.string() + " needs at least two PNG images, found " + std::to_string(ids.size()));
    return ids;
}

struct ScoreEntry {
    std::string id;
    double score = 0;
    std::int64_t ts = 0;
};

inline std::vector<ScoreEntry> read_score_log(std::istream& in)
{
    std::vector<ScoreEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("score").get<double>(), j.value("ts", std::int64_t{0})});
        }
        catch (const std::exception& e) {
            throw std::runtime_error("score log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// HTTP front end for one ranking session over a corpus, plus read-only
/// access to evolved runs. Outcomes and scores are appended to
/// corpus/outcomes.jsonl and corpus/scores.jsonl before the reply is sent,
/// and replayed on startup.
class Service {
public:
    explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), session_(corpus_ids(cfg_.corpus))
    {
        replay_logs();
        routes();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket. Throws with a diagnostic if the port is
    /// taken. Returns the bound port.
    int bind()
    {
        // Plain SO_REUSEADDR: the library default also sets SO_REUSEPORT,
        // which would let a second instance share the port silently.
        server_.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
        });
        if (cfg_.port == 0) {
            port_ = server_.bind_to_any_port(cfg_.host);
            if (port_ < 0)
                throw std::runtime_error("cannot bind any port on " + cfg_.host);
        }
        else {
            if (!server_.bind_to_port(cfg_.host, cfg_.port))
                throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port) +
                                         " (port in use or not permitted)");
            port_ = cfg_.port;
        }
        return port_;
    }

    /// Serves until stop(). Call bind() first.
    void listen()
    {
        if (port_ < 0)
            throw std::logic_error("Service::listen: call bind() first");
        server_.listen_after_bind();
    }

    void stop()
    {
        server_.stop();
        std::unique_lock lock(mutex_);
        if (outcome_log_.is_open())
            outcome_log_.flush();
        if (score_log_.is_open())
            score_log_.flush();
    }

    void wait_until_ready() const { server_.wait_until_ready(); }
    int port() const noexcept { return port_; }

    std::vector<RatedImage> ratings() const
    {
        std::shared_lock lock(mutex_);
        return session_.ratings();
    }

private:
    using Json = nlohmann::json;

    static void send_json(httplib::Response& res, int status, const Json& body)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& message, const Json& fields = Json::object())
    {
        Json body = {{"error", message}};
        if (!fields.empty())
            body["fields"] = fields;
        send_json(res, status, body);
    }

    static std::int64_t now_seconds()
    {
        return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
    }

    static bool safe_name(const std::string& s)
    {
        static const std::regex re(R"([A-Za-z0-9_][A-Za-z0-9._-]*)");
        return std::regex_match(s, re);
    }

    void replay_logs()
    {
        const auto outcomes = cfg_.corpus / "outcomes.jsonl";
        const auto scores = cfg_.corpus / "scores.jsonl";
        if (std::filesystem::exists(outcomes)) {
            std::ifstream in(outcomes);
            for (const auto& o : read_outcome_log(in)) {
                try {
                    session_.record(o);
                }
                catch (const std::exception& e) {
                    throw std::runtime_error(outcomes.string() + ": " + e.what());
                }
            }
        }
        if (std::filesystem::exists(scores)) {
            std::ifstream in(scores);
            for (const auto& s : read_score_log(in)) {
                try {
                    session_.set_score(s.id, s.score);
                }
                catch (const std::exception& e) {
                    throw std::runtime_error(scores.string() + ": " + e.what());
                }
            }
        }
        outcome_log_.open(outcomes, std::ios::app);
        score_log_.open(scores, std::ios::app);
        if (!outcome_log_ || !score_log_)
            throw std::runtime_error("corpus directory is not writable: " + cfg_.corpus.string());
    }

    Json progress_locked() const
    {
        const auto pool = session_.ratings();
        return {{"max_rd", max_rd(pool)},
                {"complete", session_complete(pool, cfg_.rd_threshold)},
                {"comparisons", session_.log().size()},
                {"rd_threshold", cfg_.rd_threshold}};
    }

    static Json rating_json(const RatedImage& r)
    {
        return {{"id", r.id},
                {"rating", r.rating},
                {"rd", r.rd},
                {"games", r.games},
                {"direct_score", r.direct_score ? Json(*r.direct_score) : Json(nullptr)}};
    }

    static std::string image_url(const std::string& id) { return "/api/image/" + id + ".png"; }

    /// Single-artist model: the first rater (X-Rater-Id, default
    /// "anonymous") holds the session until idle for the lease period.
    bool claim_rater(const httplib::Request& req, httplib::Response& res)
    {
        const std::string who = req.has_header("X-Rater-Id") ? req.get_header_value("X-Rater-Id") : "anonymous";
        const auto now = std::chrono::steady_clock::now();
        if (!rater_.empty() && rater_ != who && now - rater_seen_ < cfg_.rater_lease) {
            send_error(res, 409, "busy: another rater is using this session");
            return false;
        }
        rater_ = who;
        rater_seen_ = now;
        return true;
    }

    static std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res)
    {
        try {
            auto j = Json::parse(req.body);
            if (!j.is_object()) {
                send_error(res, 400, "request body must be a JSON object");
                return std::nullopt;
            }
            return j;
        }
        catch (const Json::parse_error& e) {
            send_error(res, 400, std::string("malformed JSON: ") + e.what());
            return std::nullopt;
        }
    }

    void write_ratings_snapshot_locked()
    {
        detail::write_file_atomic(cfg_.corpus / "ratings.csv", ratings_csv(ranked(session_.ratings())));
    }

    void routes()
    {
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "internal error";
            try {
                std::rethrow_exception(ep);
            }
            catch (const std::exception& e) {
                what = e.what();
            }
            catch (...) {
            }
            send_error(res, 500, what);
        });

        server_.Get("/api/pair", [this](const httplib::Request& req, httplib::Response& res) {
            std::unique_lock lock(mutex_);
            if (!claim_rater(req, res))
                return;
            const auto [a, b] = session_.next_pair(cfg_.seed);
            send_json(res, 200,
                      {{"a", {{"id", a}, {"png_url", image_url(a)}}},
                       {"b", {{"id", b}, {"png_url", image_url(b)}}},
                       {"progress", progress_locked()}});
        });

        server_.Post("/api/outcome", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req, res);
            if (!body)
                return;
            Json fields = Json::object();
            for (const char* key : {"a", "b", "result"})
                if (!body->contains(key) || !(*body)[key].is_string())
                    fields[key] = "required string";
            if (fields.empty()) {
                const auto result = (*body)["result"].get<std::string>();
                if (result != "a" && result != "b" && result != "draw")
                    fields["result"] = "must be \"a\", \"b\" or \"draw\"";
            }
            std::unique_lock lock(mutex_);
            if (fields.empty()) {
                for (const char* key : {"a", "b"})
                    if (!session_.contains((*body)[key].get<std::string>()))
                        fields[key] = "unknown image id";
                if (fields.empty() && (*body)["a"] == (*body)["b"])
                    fields["b"] = "must differ from a";
            }
            if (!fields.empty()) {
                send_error(res, 400, "invalid outcome", fields);
                return;
            }
            if (!claim_rater(req, res))
                return;
            Outcome o{(*body)["a"].get<std::string>(), (*body)["b"].get<std::string>(),
                      parse_result((*body)["result"].get<std::string>()), now_seconds()};
            write_outcome(outcome_log_, o);
            outcome_log_.flush();
            if (!outcome_log_)
                throw std::runtime_error("failed to append to the outcome log");
            session_.record(o);
            write_ratings_snapshot_locked();
            const auto pool = session_.ratings();
            const auto find = [&](const std::string& id) {
                return *std::find_if(pool.begin(), pool.end(), [&](const RatedImage& r) { return r.id == id; });
            };
            send_json(res, 200, {{"a", rating_json(find(o.a))}, {"b", rating_json(find(o.b))}, {"progress", progress_locked()}});
        });

        server_.Post("/api/score", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req, res);
            if (!body)
                return;
            Json fields = Json::object();
            if (!body->contains("id") || !(*body)["id"].is_string())
                fields["id"] = "required string";
            if (!body->contains("score") || !(*body)["score"].is_number())
                fields["score"] = "required number in [0,5]";
            else if (const double s = (*body)["score"].get<double>(); !(s >= 0.0 && s <= 5.0))
                fields["score"] = "must lie in [0,5]";
            std::unique_lock lock(mutex_);
            if (!fields.count("id") && !session_.contains((*body)["id"].get<std::string>()))
                fields["id"] = "unknown image id";
            if (!fields.empty()) {
                send_error(res, 400, "invalid score", fields);
                return;
            }
            if (!claim_rater(req, res))
                return;
            const auto id = (*body)["id"].get<std::string>();
            const double score = (*body)["score"].get<double>();
            score_log_ << Json{{"id", id}, {"score", score}, {"ts", now_seconds()}}.dump() << '\n';
            score_log_.flush();
            if (!score_log_)
                throw std::runtime_error("failed to append to the score log");
            session_.set_score(id, score);
            write_ratings_snapshot_locked();
            send_json(res, 200, {{"id", id}, {"direct_score", score}});
        });

        server_.Get("/api/ratings", [this](const httplib::Request&, httplib::Response& res) {
            std::shared_lock lock(mutex_);
            Json list = Json::array();
            for (const auto& r : ranked(session_.ratings()))
                list.push_back(rating_json(r));
            send_json(res, 200, {{"ratings", list}, {"progress", progress_locked()}});
        });

        server_.Get(R"(/api/image/([^/]+)\.(png|svg))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1], ext = req.matches[2];
            {
                std::shared_lock lock(mutex_);
                if (!safe_name(id) || !session_.contains(id)) {
                    send_error(res, 404, "unknown image id: " + id);
                    return;
                }
            }
            send_file(res, cfg_.corpus / (id + "." + ext), ext);
        });

        server_.Get(R"(/api/grid/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string run_id = req.matches[1];
            const auto dir = cfg_.runs / run_id;
            if (!safe_name(run_id) || !std::filesystem::exists(dir / "checkpoint.json")) {
                send_error(res, 404, "unknown run: " + run_id);
                return;
            }
            // Runs are read-only here: the checkpoint is parsed, never written.
            const auto run = MapElites::from_checkpoint(Json::parse(detail::slurp(dir / "checkpoint.json")));
            Json cells = Json::array();
            for (const auto& [cell, occ] : run.grid().occupants())
                cells.push_back({{"i", cell.i},
                                 {"j", cell.j},
                                 {"id", elite_stem(occ.id)},
                                 {"fitness", occ.fitness},
                                 {"png_url", "/api/runs/" + run_id + "/image/" + elite_stem(occ.id) + ".png"}});
            Json stats = Json::array();
            for (const auto& s : run.stats())
                stats.push_back({{"generation", s.generation}, {"mean_fitness", s.mean_fitness}, {"occupancy", s.occupancy}});
            send_json(res, 200,
                      {{"run_id", run_id},
                       {"grid_n", run.grid().grid_n()},
                       {"generations_done", run.next_generation()},
                       {"generations", run.config().generations},
                       {"cells", cells},
                       {"stats", stats}});
        });

        server_.Get(R"(/api/runs/([^/]+)/image/([^/]+)\.(png|svg))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string run_id = req.matches[1], id = req.matches[2], ext = req.matches[3];
            if (!safe_name(run_id) || !safe_name(id)) {
                send_error(res, 404, "unknown run or image");
                return;
            }
            send_file(res, cfg_.runs / run_id / "elites" / (id + "." + ext), ext);
        });

        if (!cfg_.static_dir.empty() && !server_.set_mount_point("/", cfg_.static_dir.string()))
            throw std::runtime_error("static directory not found: " + cfg_.static_dir.string());
    }

    static void send_file(httplib::Response& res, const std::filesystem::path& path, const std::string& ext)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            send_error(res, 404, "not found: " + path.filename().string());
            return;
        }
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        res.status = 200;
        res.set_content(std::move(bytes), ext == "png" ? "image/png" : "image/svg+xml");
    }

    ServiceConfig cfg_;
    Session session_;
    mutable std::shared_mutex mutex_;
    std::ofstream outcome_log_;
    std::ofstream score_log_;
    std::string rater_;
    std::chrono::steady_clock::time_point rater_seen_{};
    httplib::Server server_;
    int port_ = -1;
};

} // namespace qdart
