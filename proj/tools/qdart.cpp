// qdart: command-line front end for the workbench pipeline.
//
//   sample -> metrics / serve (ranking) -> correlate -> fit-map -> evolve -> export

#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <qdart/diversity.hpp>
#include <qdart/draw.hpp>
#include <qdart/fitness.hpp>
#include <qdart/metrics.hpp>
#include <qdart/qd.hpp>
#include <qdart/ranking.hpp>
#include <qdart/service.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    }
    catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.write(text.data(), static_cast<std::streamsize>(text.size())))
        throw std::runtime_error("cannot write " + path.string());
}

/// Run config from a file (or defaults), with the map path made relative
/// to the config file's directory.
qdart::RunConfig load_config(const std::string& path)
{
    qdart::RunConfig cfg;
    if (path.empty())
        return cfg;
    cfg = read_json_file(path).get<qdart::RunConfig>();
    if (!cfg.map_path.empty() && fs::path(cfg.map_path).is_relative())
        cfg.map_path = (fs::path(path).parent_path() / cfg.map_path).lexically_normal().string();
    return cfg;
}

std::string utc_timestamp()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string image_id(int k)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", k);
    return buf;
}

// ---------------------------------------------------------------------------

struct SampleOpts {
    int n = 257;
    std::uint64_t seed = 1;
    std::string out = "corpus";
    std::string config;
};

constexpr int kMaxSampleAttempts = 64;

int cmd_sample(const SampleOpts& o, unsigned threads)
{
    if (o.n < 1)
        throw std::invalid_argument("sample: n must be >= 1");
    const auto cfg = load_config(o.config);
    qdart::detail::ensure_writable_dir(o.out);

    struct Item {
        qdart::Genotype g;
        int attempt = 0;
        std::string svg;
        qdart::GrayImage png;
    };
    std::vector<Item> items(static_cast<std::size_t>(o.n));
    std::vector<std::string> errors(items.size());
    // Some genotypes cannot be drawn (border wider than the canvas); those
    // are redrawn from the next seed in a fixed sequence.
    qdart::parallel_for(items.size(), threads, [&](std::size_t k) {
        for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
            const auto g = qdart::random_genotype(qdart::derive_seed(o.seed, k, static_cast<std::uint64_t>(attempt)));
            try {
                const auto p = qdart::render(g, cfg.draw);
                items[k] = {g, attempt, qdart::to_svg(p), qdart::rasterize(p)};
                return;
            }
            catch (const std::invalid_argument& e) {
                errors[k] = e.what();
            }
        }
        throw std::runtime_error("sample " + std::to_string(k) + ": no drawable genotype after retries: " + errors[k]);
    });

    json images = json::array();
    for (std::size_t k = 0; k < items.size(); ++k) {
        const std::string id = image_id(static_cast<int>(k));
        write_text(fs::path(o.out) / (id + ".svg"), items[k].svg);
        qdart::write_png(fs::path(o.out) / (id + ".png"), items[k].png);
        images.push_back({{"id", id},
                          {"genotype", items[k].g},
                          {"attempt", items[k].attempt},
                          {"svg", id + ".svg"},
                          {"png", id + ".png"}});
    }
    json manifest = {{"seed", o.seed},
                     {"count", o.n},
                     {"canvas", {cfg.draw.canvas_width, cfg.draw.canvas_height}},
                     {"images", images},
                     {"metadata", {{"generated_at", utc_timestamp()}}}};
    write_text(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << o.n << " drawings to " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct RenderOpts {
    std::string genotype; // JSON file holding an array of 17 genes
    std::optional<std::uint64_t> seed;
    std::string out = "drawing";
    std::string config;
};

int cmd_render(const RenderOpts& o, unsigned threads)
{
    const auto cfg = load_config(o.config);
    qdart::Genotype g;
    if (!o.genotype.empty())
        g = read_json_file(o.genotype).get<qdart::Genotype>();
    else if (o.seed)
        g = qdart::random_genotype(*o.seed);
    else
        throw std::invalid_argument("render: pass --genotype FILE or --seed N");
    const auto p = qdart::render(g, cfg.draw, threads);
    write_text(o.out + ".svg", qdart::to_svg(p));
    const auto img = qdart::rasterize(p, threads);
    qdart::write_png(o.out + ".png", img);
    std::cout << "wrote " << o.out << ".svg and " << o.out << ".png (fitness " << qdart::fitness(img, cfg.fitness) << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct MetricsOpts {
    std::string corpus = "corpus";
    std::string out;
};

int cmd_metrics(const MetricsOpts& o, unsigned threads)
{
    const auto table = qdart::batch_metrics(o.corpus, threads);
    for (const auto& d : table.diagnostics)
        std::cerr << "warning: " << d << "\n";
    if (o.out.empty())
        std::cout << qdart::to_csv(table);
    else
        write_text(o.out, qdart::to_csv(table));
    return 0;
}

// ---------------------------------------------------------------------------

struct CorrelateOpts {
    std::string corpus;
    std::string metrics;
    std::string scores;
    std::string outcomes;
    std::string out;
};

int cmd_correlate(const CorrelateOpts& o, unsigned threads)
{
    if (o.scores.empty() && o.outcomes.empty())
        throw std::invalid_argument("correlate: pass --scores and/or --outcomes");
    qdart::MetricTable table;
    if (!o.metrics.empty()) {
        std::ifstream in(o.metrics);
        if (!in)
            throw std::runtime_error("cannot open " + o.metrics);
        table = qdart::metric_table_from_csv(in);
    }
    else if (!o.corpus.empty()) {
        table = qdart::batch_metrics(o.corpus, threads);
    }
    else {
        throw std::invalid_argument("correlate: pass --corpus DIR or --metrics CSV");
    }
    for (const auto& d : table.diagnostics)
        std::cerr << "warning: " << d << "\n";

    std::map<std::string, double> scores, ratings;
    if (!o.scores.empty()) {
        std::ifstream in(o.scores);
        if (!in)
            throw std::runtime_error("cannot open " + o.scores);
        for (const auto& s : qdart::read_score_log(in))
            scores[s.id] = s.score; // later entries win
    }
    if (!o.outcomes.empty()) {
        std::ifstream in(o.outcomes);
        if (!in)
            throw std::runtime_error("cannot open " + o.outcomes);
        const auto log = qdart::read_outcome_log(in);
        std::set<std::string> ids;
        for (const auto& row : table.rows)
            ids.insert(row.id);
        for (const auto& oc : log) {
            ids.insert(oc.a);
            ids.insert(oc.b);
        }
        for (const auto& r : qdart::replay({ids.begin(), ids.end()}, log))
            if (r.games > 0)
                ratings[r.id] = r.rating;
    }

    const auto report = qdart::proxy_selection(table, scores, ratings);
    for (const auto& id : report.missing_ids)
        std::cerr << "warning: no metrics for ranked id " << id << "\n";
    std::cout << qdart::report_text(report);
    if (!o.out.empty())
        write_text(o.out, qdart::report_csv(report));
    return 0;
}

// ---------------------------------------------------------------------------

struct FitMapOpts {
    std::string corpus;
    std::string features;
    int grid_n = 8;
    std::string out = "map.json";
};

/// Descriptors of every PNG in a corpus; all images must share one size.
std::vector<qdart::FeatureVector> corpus_descriptors(const fs::path& dir, unsigned threads, std::vector<std::string>* ids)
{
    std::vector<fs::path> files;
    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("no PNG images in " + dir.string());
    std::vector<qdart::GrayImage> images(files.size());
    qdart::parallel_for(files.size(), threads, [&](std::size_t i) { images[i] = qdart::read_png(files[i]); });
    std::vector<qdart::FeatureVector> out(files.size());
    qdart::parallel_for(files.size(), threads, [&](std::size_t i) {
        out[i] = qdart::describe(images[i], images.front().width(), images.front().height());
    });
    if (ids)
        for (const auto& f : files)
            ids->push_back(f.stem().string());
    return out;
}

int cmd_fit_map(const FitMapOpts& o, unsigned threads)
{
    std::vector<qdart::FeatureVector> samples;
    if (!o.features.empty()) {
        std::ifstream in(o.features);
        if (!in)
            throw std::runtime_error("cannot open " + o.features);
        for (auto& f : qdart::read_feature_file(in))
            samples.push_back(std::move(f.values));
    }
    else if (!o.corpus.empty()) {
        samples = corpus_descriptors(o.corpus, threads, nullptr);
    }
    else {
        throw std::invalid_argument("fit-map: pass --corpus DIR or --features FILE");
    }
    const auto map = qdart::fit_reduction(samples, o.grid_n);
    write_text(o.out, json(map).dump() + "\n");
    std::cout << "fitted a " << o.grid_n << "x" << o.grid_n << " map over " << samples.size() << " samples of dimension "
              << map.dim() << " -> " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvolveOpts {
    std::string config;
    std::string out = "runs/run";
    bool resume = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> grid_n;
    std::optional<int> stop_after;
};

int cmd_evolve(const EvolveOpts& o, unsigned threads)
{
    const auto progress = [](const qdart::StatsRow& s) {
        std::cerr << "generation " << s.generation << ": occupancy " << s.occupancy << ", mean fitness " << s.mean_fitness
                  << ", placed " << s.placed;
        if (s.failures)
            std::cerr << ", " << s.failures << " render failure(s)";
        std::cerr << "\n";
    };
    if (o.resume) {
        auto run = qdart::MapElites::resume(o.out);
        if (run.finished()) {
            std::cout << "run in " << o.out << " already finished (" << run.next_generation() << " generations); nothing to do\n";
            return 0;
        }
        std::cout << "resuming " << o.out << " at generation " << run.next_generation() << "\n";
        run.run(o.stop_after, progress);
        if (run.finished())
            run.montage();
        std::cout << "archive checksum " << qdart::archive_checksum(run.archive()) << "\n";
        return 0;
    }

    if (o.config.empty())
        throw std::invalid_argument("evolve: --config is required (see configs/default.json)");
    auto cfg = load_config(o.config);
    if (o.seed)
        cfg.seed = *o.seed;
    if (o.grid_n)
        cfg.grid_n = *o.grid_n;
    if (threads)
        cfg.threads = threads;
    cfg.validate();
    if (cfg.map_path.empty() || !fs::exists(cfg.map_path))
        throw std::runtime_error("map not found" + (cfg.map_path.empty() ? std::string() : ": " + cfg.map_path) +
                                 "; run `qdart fit-map --corpus DIR --out MAP` first and point the config's \"map\" key at it");
    const auto map = read_json_file(cfg.map_path).get<qdart::ReducedMap>();
    qdart::MapElites run(cfg, map, o.out);
    run.run(o.stop_after, progress);
    if (run.finished())
        run.montage();
    std::cout << "archive checksum " << qdart::archive_checksum(run.archive()) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ServeOpts {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string corpus = "corpus";
    std::string runs = "runs";
    std::string static_dir;
    double rd_threshold = qdart::kDefaultRdThreshold;
    std::uint64_t seed = 1;
};

int cmd_serve(const ServeOpts& o)
{
    // Block termination signals here; a watcher thread turns them into a
    // clean stop so the logs are flushed.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    qdart::ServiceConfig cfg;
    cfg.host = o.host;
    cfg.port = o.port;
    cfg.corpus = o.corpus;
    cfg.runs = o.runs;
    cfg.static_dir = o.static_dir;
    cfg.rd_threshold = o.rd_threshold;
    cfg.seed = o.seed;
    qdart::Service svc(cfg);
    const int port = svc.bind();
    std::cout << "serving " << o.corpus << " on http://" << o.host << ":" << port << std::endl;

    std::thread watcher([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        svc.stop();
    });
    svc.listen();
    // listen() also returns if the server fails; wake the watcher either way.
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    std::cout << "stopped\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ExportOpts {
    std::string kind;
    std::string run;
    std::string map;
    std::string corpus;
    std::string features;
    std::string out;
};

int cmd_export(const ExportOpts& o, unsigned threads)
{
    if (o.kind == "montage") {
        if (o.run.empty())
            throw std::invalid_argument("export montage: pass --run DIR");
        const auto doc = read_json_file(fs::path(o.run) / "checkpoint.json");
        auto run = qdart::MapElites::from_checkpoint(doc, o.out.empty() ? fs::path(o.run) : fs::path(o.out));
        const auto m = run.montage();
        std::cout << "montage with " << m.cells.size() << " occupied tile(s) written to "
                  << (o.out.empty() ? o.run : o.out) << "\n";
        return 0;
    }
    if (o.kind == "embedding") {
        if (o.map.empty())
            throw std::invalid_argument("export embedding: pass --map FILE");
        const auto map = read_json_file(o.map).get<qdart::ReducedMap>();
        std::vector<std::string> ids;
        std::vector<qdart::FeatureVector> vs;
        if (!o.features.empty()) {
            std::ifstream in(o.features);
            if (!in)
                throw std::runtime_error("cannot open " + o.features);
            for (auto& f : qdart::read_feature_file(in)) {
                ids.push_back(f.id);
                vs.push_back(std::move(f.values));
            }
        }
        else if (!o.corpus.empty()) {
            vs = corpus_descriptors(o.corpus, threads, &ids);
        }
        else {
            throw std::invalid_argument("export embedding: pass --corpus DIR or --features FILE");
        }
        std::ostringstream os;
        os.precision(17);
        os << "id,x,y,i,j\n";
        for (std::size_t k = 0; k < vs.size(); ++k) {
            const auto p = qdart::embed(map, vs[k]);
            const auto c = qdart::quantize(map, p);
            os << ids[k] << ',' << p.first << ',' << p.second << ',' << c.i << ',' << c.j << '\n';
        }
        if (o.out.empty())
            std::cout << os.str();
        else
            write_text(o.out, os.str());
        return 0;
    }
    if (o.kind == "ratings") {
        const fs::path corpus = o.corpus.empty() ? fs::path("corpus") : fs::path(o.corpus);
        const auto ids = qdart::corpus_ids(corpus);
        std::vector<qdart::Outcome> log;
        if (std::ifstream in(corpus / "outcomes.jsonl"); in)
            log = qdart::read_outcome_log(in);
        qdart::Session s(ids);
        for (const auto& oc : log)
            s.record(oc);
        if (std::ifstream in(corpus / "scores.jsonl"); in)
            for (const auto& sc : qdart::read_score_log(in))
                s.set_score(sc.id, sc.score);
        const auto csv = qdart::ratings_csv(qdart::ranked(s.ratings()));
        if (o.out.empty())
            std::cout << csv;
        else
            write_text(o.out, csv);
        return 0;
    }
    throw std::invalid_argument("export: kind must be montage, embedding or ratings");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quality-diversity workbench for agent-drawn line images"};
    app.require_subcommand(1, 1);
    unsigned threads = 0;
    app.add_option("-j,--threads", threads, "Worker threads (0 = all cores); never changes results")->envname("QDA_THREADS");

    SampleOpts sample;
    auto* s = app.add_subcommand("sample", "Render n random genotypes to SVG+PNG with a manifest");
    s->add_option("-n,--count", sample.n, "Number of drawings")->check(CLI::PositiveNumber);
    s->add_option("--seed", sample.seed, "Master seed");
    s->add_option("-o,--out", sample.out, "Output directory");
    s->add_option("-c,--config", sample.config, "Run config (canvas, lifetime, gene_ranges)");

    RenderOpts render;
    auto* r = app.add_subcommand("render", "Render one genotype");
    r->add_option("-g,--genotype", render.genotype, "JSON file with 17 genes in [0,1]");
    r->add_option("--seed", render.seed, "Render a random genotype from this seed instead");
    r->add_option("-o,--out", render.out, "Output path prefix (.svg/.png appended)");
    r->add_option("-c,--config", render.config, "Run config (canvas, lifetime, gene_ranges)");

    MetricsOpts metrics;
    auto* m = app.add_subcommand("metrics", "Compute the metric table for a directory of PNGs");
    m->add_option("--corpus", metrics.corpus, "Image directory");
    m->add_option("-o,--out", metrics.out, "CSV path (stdout if omitted)");

    CorrelateOpts corr;
    auto* c = app.add_subcommand("correlate", "Correlate metrics with artist scores and/or pairwise outcomes");
    c->add_option("--corpus", corr.corpus, "Image directory (metrics computed on the fly)");
    c->add_option("--metrics", corr.metrics, "Precomputed metric CSV");
    c->add_option("--scores", corr.scores, "Direct scores, JSON lines {id, score}");
    c->add_option("--outcomes", corr.outcomes, "Outcome log, JSON lines {a, b, result}");
    c->add_option("-o,--out", corr.out, "Report CSV path");

    FitMapOpts fit;
    auto* f = app.add_subcommand("fit-map", "Fit the 2-D feature map from a corpus or imported features");
    f->add_option("--corpus", fit.corpus, "Image directory");
    f->add_option("--features", fit.features, "Feature vectors, JSON lines {id, values}");
    f->add_option("--grid-n", fit.grid_n, "Cells per axis")->check(CLI::Range(2, 1024));
    f->add_option("-o,--out", fit.out, "Map JSON path");

    EvolveOpts evolve;
    auto* e = app.add_subcommand("evolve", "Run MAP-Elites");
    e->add_option("-c,--config", evolve.config, "Run config JSON");
    e->add_option("-o,--out", evolve.out, "Run output directory");
    e->add_flag("--resume", evolve.resume, "Continue from the checkpoint in --out");
    e->add_option("--seed", evolve.seed, "Override the config seed");
    e->add_option("--grid-n", evolve.grid_n, "Override the config grid size");
    e->add_option("--stop-after", evolve.stop_after, "Stop once this many generations are complete");

    ServeOpts serve;
    auto* sv = app.add_subcommand("serve", "Serve the ranking API and run browser");
    sv->add_option("--host", serve.host, "Bind address")->envname("QDA_HOST");
    sv->add_option("--port", serve.port, "Port (0 picks a free one)")->envname("QDA_PORT")->check(CLI::Range(0, 65535));
    sv->add_option("--corpus", serve.corpus, "Image corpus to rank")->envname("QDA_CORPUS");
    sv->add_option("--runs", serve.runs, "Directory holding evolve runs")->envname("QDA_RUNS");
    sv->add_option("--static", serve.static_dir, "UI asset directory served at /")->envname("QDA_STATIC");
    sv->add_option("--rd-threshold", serve.rd_threshold, "RD below which every image counts as ranked")
        ->envname("QDA_RD_THRESHOLD");
    sv->add_option("--seed", serve.seed, "Pairing seed")->envname("QDA_SEED");

    ExportOpts exp;
    auto* x = app.add_subcommand("export", "Export a montage, embedding or ratings table");
    x->add_option("kind", exp.kind, "montage | embedding | ratings")->required();
    x->add_option("--run", exp.run, "Run directory (montage)");
    x->add_option("--map", exp.map, "Map JSON (embedding)");
    x->add_option("--corpus", exp.corpus, "Image directory (embedding, ratings)");
    x->add_option("--features", exp.features, "Feature vectors (embedding)");
    x->add_option("-o,--out", exp.out, "Output path");

    CLI11_PARSE(app, argc, argv);
    const unsigned workers = threads ? threads : qdart::default_threads();

    try {
        if (*s)
            return cmd_sample(sample, workers);
        if (*r)
            return cmd_render(render, workers);
        if (*m)
            return cmd_metrics(metrics, workers);
        if (*c)
            return cmd_correlate(corr, workers);
        if (*f)
            return cmd_fit_map(fit, workers);
        if (*e)
            return cmd_evolve(evolve, threads);
        if (*sv)
            return cmd_serve(serve);
        if (*x)
            return cmd_export(exp, workers);
    }
    catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 1;
}
