#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "checksum.hpp"
#include "diversity.hpp"
#include "draw.hpp"
#include "fitness.hpp"
#include "genome.hpp"
#include "image.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace qdart {

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
    int grid_n = 8;
    int generations = 100;
    int population = 25;
    double mutation_rate = 0.25;
    double mutation_factor = 0.15;
    std::uint64_t seed = 1;
    FitnessConfig fitness{};
    DrawConfig draw{};
    std::string map_path; // fitted ReducedMap document
    unsigned threads = 0; // 0: all cores; never affects results

    void validate() const
    {
        if (generations < 1)
            throw std::invalid_argument("run config: generations must be >= 1");
        if (population < 1)
            throw std::invalid_argument("run config: population must be >= 1");
        if (grid_n < 2)
            throw std::invalid_argument("run config: grid_n must be >= 2");
        if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
            throw std::invalid_argument("run config: mutation_rate must lie in [0,1]");
        if (!(mutation_factor >= 0.0 && mutation_factor <= 1.0))
            throw std::invalid_argument("run config: mutation_factor must lie in [0,1]");
        if (draw.canvas_width < 32 || draw.canvas_height < 32)
            throw std::invalid_argument("run config: canvas must be at least 32x32");
        if (draw.lifetime < 1)
            throw std::invalid_argument("run config: lifetime must be >= 1");
        fitness.validate();
    }

    unsigned worker_count() const { return threads ? threads : default_threads(); }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline void to_json(nlohmann::json& j, const RunConfig& c)
{
    j = {{"grid_n", c.grid_n},
         {"generations", c.generations},
         {"population", c.population},
         {"mutation_rate", c.mutation_rate},
         {"mutation_factor", c.mutation_factor},
         {"seed", c.seed},
         {"fitness", c.fitness},
         {"canvas", {c.draw.canvas_width, c.draw.canvas_height}},
         {"lifetime", c.draw.lifetime},
         {"gene_ranges", c.draw.gene_ranges},
         {"map", c.map_path}};
}

/// Missing keys keep their defaults; unknown keys are rejected so typos do
/// not silently fall back. `threads` is accepted but not written back.
inline void from_json(const nlohmann::json& j, RunConfig& c)
{
    static const std::vector<std::string> known = {"grid_n",    "generations", "population", "mutation_rate",
                                                   "mutation_factor", "seed",  "fitness",    "canvas",
                                                   "lifetime",  "gene_ranges", "map",        "threads"};
    if (!j.is_object())
        throw std::invalid_argument("run config: expected a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::invalid_argument("run config: unknown key \"" + key + "\"");
    c.grid_n = j.value("grid_n", c.grid_n);
    c.generations = j.value("generations", c.generations);
    c.population = j.value("population", c.population);
    c.mutation_rate = j.value("mutation_rate", c.mutation_rate);
    c.mutation_factor = j.value("mutation_factor", c.mutation_factor);
    c.seed = j.value("seed", c.seed);
    if (j.contains("fitness"))
        c.fitness = j.at("fitness").get<FitnessConfig>();
    if (j.contains("canvas")) {
        const auto& canvas = j.at("canvas");
        if (!canvas.is_array() || canvas.size() != 2)
            throw std::invalid_argument("run config: canvas must be [width, height]");
        c.draw.canvas_width = canvas[0].get<int>();
        c.draw.canvas_height = canvas[1].get<int>();
    }
    c.draw.lifetime = j.value("lifetime", c.draw.lifetime);
    if (j.contains("gene_ranges"))
        c.draw.gene_ranges = j.at("gene_ranges").get<GeneRanges>();
    c.map_path = j.value("map", c.map_path);
    c.threads = j.value("threads", c.threads);
    c.validate();
}

// ---------------------------------------------------------------------------
// Grid and archive

struct Occupant {
    std::uint64_t id = 0;
    double fitness = 0;
    Genotype genotype;

    friend bool operator==(const Occupant&, const Occupant&) = default;
};

class EliteGrid {
public:
    explicit EliteGrid(int grid_n = 8) : n_(grid_n), cells_(static_cast<std::size_t>(grid_n) * grid_n)
    {
        if (grid_n < 2)
            throw std::invalid_argument("EliteGrid: grid_n must be >= 2");
    }

    int grid_n() const noexcept { return n_; }
    bool contains(CellIndex c) const noexcept { return c.i >= 0 && c.j >= 0 && c.i < n_ && c.j < n_; }

    const std::optional<Occupant>& at(CellIndex c) const { return cells_.at(offset(c)); }
    void set(CellIndex c, Occupant o) { cells_.at(offset(c)) = std::move(o); }

    std::size_t occupied() const
    {
        return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); }));
    }
    double occupancy() const { return static_cast<double>(occupied()) / static_cast<double>(cells_.size()); }

    /// Mean fitness of occupied cells; 0 for an empty grid.
    double mean_fitness() const
    {
        double sum = 0;
        std::size_t k = 0;
        for (const auto& c : cells_)
            if (c) {
                sum += c->fitness;
                ++k;
            }
        return k ? sum / static_cast<double>(k) : 0.0;
    }

    /// Occupied cells in row-major (j, i) order.
    std::vector<std::pair<CellIndex, Occupant>> occupants() const
    {
        std::vector<std::pair<CellIndex, Occupant>> out;
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i)
                if (const auto& c = at({i, j}))
                    out.emplace_back(CellIndex{i, j}, *c);
        return out;
    }

    friend bool operator==(const EliteGrid&, const EliteGrid&) = default;

private:
    std::size_t offset(CellIndex c) const
    {
        if (!contains(c))
            throw std::out_of_range("EliteGrid: cell outside the grid");
        return static_cast<std::size_t>(c.j) * n_ + c.i;
    }

    int n_;
    std::vector<std::optional<Occupant>> cells_;
};

struct ArchiveRecord {
    std::uint64_t id = 0;
    Genotype genotype;
    double fitness = 0;
    std::pair<double, double> embedding{};
    CellIndex cell{};
    int generation = 0;
    std::optional<std::uint64_t> parent_id;
    std::string svg_path;
    std::string png_path;

    friend bool operator==(const ArchiveRecord&, const ArchiveRecord&) = default;
};

inline void to_json(nlohmann::json& j, const ArchiveRecord& r)
{
    j = {{"id", r.id},
         {"genotype", r.genotype},
         {"fitness", r.fitness},
         {"embedding", {r.embedding.first, r.embedding.second}},
         {"cell", {r.cell.i, r.cell.j}},
         {"generation", r.generation},
         {"parent_id", r.parent_id ? nlohmann::json(*r.parent_id) : nlohmann::json(nullptr)},
         {"svg_path", r.svg_path},
         {"png_path", r.png_path}};
}

inline void from_json(const nlohmann::json& j, ArchiveRecord& r)
{
    r.id = j.at("id").get<std::uint64_t>();
    r.genotype = j.at("genotype").get<Genotype>();
    r.fitness = j.at("fitness").get<double>();
    r.embedding = {j.at("embedding").at(0).get<double>(), j.at("embedding").at(1).get<double>()};
    r.cell = {j.at("cell").at(0).get<int>(), j.at("cell").at(1).get<int>()};
    r.generation = j.at("generation").get<int>();
    const auto& parent = j.at("parent_id");
    r.parent_id = parent.is_null() ? std::nullopt : std::optional<std::uint64_t>(parent.get<std::uint64_t>());
    r.svg_path = j.value("svg_path", std::string{});
    r.png_path = j.value("png_path", std::string{});
}

/// Archive as written to archive.jsonl.
inline std::string archive_jsonl(const std::vector<ArchiveRecord>& archive)
{
    std::string out;
    for (const auto& r : archive) {
        out += nlohmann::json(r).dump();
        out += '\n';
    }
    return out;
}

inline std::string archive_checksum(const std::vector<ArchiveRecord>& archive) { return sha256_hex(archive_jsonl(archive)); }

/// Places the candidate if its cell is empty or it is strictly fitter than
/// the occupant. Equal fitness keeps the incumbent.
inline bool try_place(EliteGrid& grid, const ArchiveRecord& candidate)
{
    const auto& current = grid.at(candidate.cell);
    if (current && !(candidate.fitness > current->fitness))
        return false;
    grid.set(candidate.cell, Occupant{candidate.id, candidate.fitness, candidate.genotype});
    return true;
}

struct StatsRow {
    int generation = 0;
    double mean_fitness = 0;
    double occupancy = 0;
    int placed = 0;   // not part of the CSV
    int failures = 0; // children whose render failed; not part of the CSV

    friend bool operator==(const StatsRow&, const StatsRow&) = default;
};

using RunStats = std::vector<StatsRow>;

inline std::string stats_line(const StatsRow& s)
{
    std::ostringstream os;
    os.precision(17);
    os << s.generation << ',' << s.mean_fitness << ',' << s.occupancy << '\n';
    return os.str();
}

inline std::string stats_csv(const RunStats& stats)
{
    std::string out = "generation,mean_fitness,occupancy\n";
    for (const auto& s : stats)
        out += stats_line(s);
    return out;
}

inline void to_json(nlohmann::json& j, const StatsRow& s)
{
    j = {{"generation", s.generation}, {"mean_fitness", s.mean_fitness}, {"occupancy", s.occupancy},
         {"placed", s.placed},         {"failures", s.failures}};
}

inline void from_json(const nlohmann::json& j, StatsRow& s)
{
    s.generation = j.at("generation").get<int>();
    s.mean_fitness = j.at("mean_fitness").get<double>();
    s.occupancy = j.at("occupancy").get<double>();
    s.placed = j.value("placed", 0);
    s.failures = j.value("failures", 0);
}

// ---------------------------------------------------------------------------
// One generation

/// Everything measured about one child before placement.
struct Evaluation {
    Genotype genotype;
    std::optional<std::uint64_t> parent_id;
    std::optional<std::string> error; // set when rendering failed
    double fitness = 0;
    std::pair<double, double> embedding{};
    CellIndex cell{};
    Phenotype phenotype;
    GrayImage raster;
};

inline Evaluation evaluate(const Genotype& g, const RunConfig& cfg, const ReducedMap& map)
{
    Evaluation ev;
    ev.genotype = g;
    try {
        ev.phenotype = render(g, cfg.draw);
        ev.raster = rasterize(ev.phenotype);
        ev.fitness = fitness(ev.raster, cfg.fitness);
        ev.embedding = embed(map, describe(ev.raster, cfg.draw.canvas_width, cfg.draw.canvas_height));
        ev.cell = quantize(map, ev.embedding);
    }
    catch (const std::exception& e) {
        ev.error = e.what();
        ev.phenotype = {};
        ev.raster = {};
    }
    return ev;
}

/// The cell sampled at generation `gen` (uniform over all cells).
inline CellIndex sampled_cell(const RunConfig& cfg, int gen)
{
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(gen), 0));
    const auto k = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.grid_n) * cfg.grid_n));
    return {k % cfg.grid_n, k / cfg.grid_n};
}

/// Child genomes for generation `gen`: random when the sampled cell is
/// empty, otherwise mutations of its occupant.
inline std::vector<std::pair<Genotype, std::optional<std::uint64_t>>> make_children(const EliteGrid& grid, const RunConfig& cfg,
                                                                                     int gen)
{
    const auto& parent = grid.at(sampled_cell(cfg, gen));
    std::vector<std::pair<Genotype, std::optional<std::uint64_t>>> out;
    out.reserve(static_cast<std::size_t>(cfg.population));
    for (int k = 0; k < cfg.population; ++k) {
        const auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(k) + 1);
        if (parent)
            out.emplace_back(mutate(parent->genotype, cfg.mutation_rate, cfg.mutation_factor, seed), parent->id);
        else
            out.emplace_back(random_genotype(seed), std::nullopt);
    }
    return out;
}

/// Called for every placed child with its record and evaluation, in
/// placement order.
using PlacementSink = std::function<void(const ArchiveRecord&, const Evaluation&)>;

/// Runs one generation: children are evaluated in parallel (in chunks, to
/// bound memory) and placed strictly in child-index order. Failed renders
/// are counted and skipped. New records are appended to `archive`.
inline StatsRow step_generation(EliteGrid& grid, std::vector<ArchiveRecord>& archive, const RunConfig& cfg,
                                const ReducedMap& map, int gen, const PlacementSink& sink = {})
{
    if (gen < 0 || gen >= cfg.generations)
        throw std::invalid_argument("step_generation: generation index out of range");
    if (grid.grid_n() != cfg.grid_n || map.grid_n != cfg.grid_n)
        throw std::invalid_argument("step_generation: grid size disagrees with config or map");
    const auto children = make_children(grid, cfg, gen);
    const std::size_t chunk = std::max<std::size_t>(1, cfg.worker_count());
    StatsRow row;
    row.generation = gen;
    for (std::size_t first = 0; first < children.size(); first += chunk) {
        const std::size_t count = std::min(chunk, children.size() - first);
        std::vector<Evaluation> evals(count);
        parallel_for(count, cfg.worker_count(), [&](std::size_t k) {
            evals[k] = evaluate(children[first + k].first, cfg, map);
            evals[k].parent_id = children[first + k].second;
        });
        for (const auto& ev : evals) {
            if (ev.error) {
                ++row.failures;
                continue;
            }
            ArchiveRecord rec;
            rec.id = archive.size();
            rec.genotype = ev.genotype;
            rec.fitness = ev.fitness;
            rec.embedding = ev.embedding;
            rec.cell = ev.cell;
            rec.generation = gen;
            rec.parent_id = ev.parent_id;
            if (!try_place(grid, rec))
                continue;
            ++row.placed;
            if (sink)
                sink(rec, ev);
            archive.push_back(std::move(rec));
        }
    }
    row.mean_fitness = grid.mean_fitness();
    row.occupancy = grid.occupancy();
    return row;
}

// ---------------------------------------------------------------------------
// Montage

struct Montage {
    GrayImage image;
    nlohmann::json cells; // [{cell:[i,j], id, fitness}]
    int tile_width = 0;
    int tile_height = 0;
};

inline constexpr double kTileFrame = 0.5;

/// Tiles one thumbnail per occupied cell: cell (i, j) sits at column i,
/// row j. Occupied tiles carry a one-pixel gray frame; empty tiles stay
/// white. `thumbnail(occupant)` must return a tile_width x tile_height image.
template <class ThumbFn>
Montage export_grid_montage(const EliteGrid& grid, int tile_width, int tile_height, ThumbFn&& thumbnail)
{
    if (tile_width < 3 || tile_height < 3)
        throw std::invalid_argument("export_grid_montage: tiles must be at least 3x3");
    const int n = grid.grid_n();
    Montage m{GrayImage(n * tile_width, n * tile_height, 1.0), nlohmann::json::array(), tile_width, tile_height};
    for (const auto& [cell, occ] : grid.occupants()) {
        const GrayImage thumb = thumbnail(occ);
        if (thumb.width() != tile_width || thumb.height() != tile_height)
            throw std::invalid_argument("export_grid_montage: thumbnail has the wrong size");
        const int ox = cell.i * tile_width, oy = cell.j * tile_height;
        for (int y = 0; y < tile_height; ++y)
            for (int x = 0; x < tile_width; ++x) {
                const bool frame = x == 0 || y == 0 || x == tile_width - 1 || y == tile_height - 1;
                m.image.at(ox + x, oy + y) = frame ? kTileFrame : thumb.at(x, y);
            }
        m.cells.push_back({{"cell", {cell.i, cell.j}}, {"id", occ.id}, {"fitness", occ.fitness}});
    }
    return m;
}

// ---------------------------------------------------------------------------
// Engine with persistence

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string elite_stem(std::uint64_t id)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(id));
    return buf;
}

namespace detail {

/// Write-then-rename so readers never see a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& data)
{
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out)
            throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void append_file(const std::filesystem::path& path, const std::string& data)
{
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out.write(data.data(), static_cast<std::streamsize>(data.size())))
        throw std::runtime_error("cannot append to " + path.string());
}

inline std::string slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void ensure_writable_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto probe = dir / ".write-probe";
    std::ofstream out(probe);
    if (ec || !out)
        throw std::runtime_error("output directory is not writable: " + dir.string());
    out.close();
    std::filesystem::remove(probe, ec);
}

} // namespace detail

/// MAP-Elites driver. With an output directory it writes, after every
/// generation: archive.jsonl, stats.csv, elites/<id>.svg|png and
/// checkpoint.json. Without one it runs purely in memory.
class MapElites {
public:
    static constexpr int kThumbWidth = 64;

    MapElites(RunConfig cfg, ReducedMap map, std::filesystem::path out_dir = {})
        : cfg_(std::move(cfg)), map_(std::move(map)), grid_(cfg_.grid_n), out_(std::move(out_dir))
    {
        cfg_.validate();
        if (map_.dim() != kDescriptorSize)
            throw std::invalid_argument("map dimension " + std::to_string(map_.dim()) +
                                        " does not match the built-in image descriptor (" + std::to_string(kDescriptorSize) +
                                        "); imported-feature maps cannot place rendered drawings");
        map_.grid_n = cfg_.grid_n;
        if (!out_.empty()) {
            detail::ensure_writable_dir(out_);
            detail::ensure_writable_dir(out_ / "elites");
            detail::write_file_atomic(out_ / "archive.jsonl", "");
            detail::write_file_atomic(out_ / "stats.csv", stats_csv({}));
            nlohmann::json config = cfg_;
            detail::write_file_atomic(out_ / "config.json", config.dump(2) + "\n");
        }
    }

    /// Restores from a checkpoint document. Fails on a checksum mismatch.
    static MapElites from_checkpoint(const nlohmann::json& doc, std::filesystem::path out_dir = {})
    {
        if (!doc.is_object() || !doc.contains("state") || !doc.contains("checksum"))
            throw CheckpointError("checkpoint: missing state or checksum");
        const auto& state = doc.at("state");
        if (sha256_hex(state.dump()) != doc.at("checksum").get<std::string>())
            throw CheckpointError("checkpoint: checksum mismatch (file is corrupt or was edited)");
        try {
            MapElites me(state.at("config").get<RunConfig>(), state.at("map").get<ReducedMap>());
            me.out_ = std::move(out_dir);
            me.next_gen_ = state.at("next_generation").get<int>();
            for (const auto& c : state.at("grid")) {
                const CellIndex cell{c.at("cell").at(0).get<int>(), c.at("cell").at(1).get<int>()};
                me.grid_.set(cell, Occupant{c.at("id").get<std::uint64_t>(), c.at("fitness").get<double>(),
                                            c.at("genotype").get<Genotype>()});
            }
            me.archive_ = state.at("archive").get<std::vector<ArchiveRecord>>();
            me.stats_ = state.at("stats").get<RunStats>();
            if (me.next_gen_ < 0 || me.next_gen_ > me.cfg_.generations ||
                me.stats_.size() != static_cast<std::size_t>(me.next_gen_))
                throw CheckpointError("checkpoint: inconsistent generation count");
            if (!me.out_.empty()) {
                // Drop anything written after the checkpoint was taken.
                detail::ensure_writable_dir(me.out_ / "elites");
                detail::write_file_atomic(me.out_ / "archive.jsonl", archive_jsonl(me.archive_));
                detail::write_file_atomic(me.out_ / "stats.csv", stats_csv(me.stats_));
            }
            return me;
        }
        catch (const CheckpointError&) {
            throw;
        }
        catch (const std::exception& e) {
            throw CheckpointError(std::string("checkpoint: malformed state: ") + e.what());
        }
    }

    static MapElites resume(const std::filesystem::path& out_dir)
    {
        const auto path = out_dir / "checkpoint.json";
        if (!std::filesystem::exists(path))
            throw CheckpointError("no checkpoint found at " + path.string());
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(detail::slurp(path));
        }
        catch (const nlohmann::json::exception& e) {
            throw CheckpointError(std::string("checkpoint: unreadable JSON: ") + e.what());
        }
        return from_checkpoint(doc, out_dir);
    }

    nlohmann::json checkpoint() const
    {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& [cell, occ] : grid_.occupants())
            cells.push_back({{"cell", {cell.i, cell.j}}, {"id", occ.id}, {"fitness", occ.fitness}, {"genotype", occ.genotype}});
        // Every generation derives its generator from (seed, generation), so
        // the next generation index is the full generator cursor.
        nlohmann::json state = {{"format", 1},
                                {"config", cfg_},
                                {"map", map_},
                                {"next_generation", next_gen_},
                                {"grid", cells},
                                {"archive", archive_},
                                {"stats", stats_}};
        return {{"state", state}, {"checksum", sha256_hex(state.dump())}};
    }

    /// Runs one generation and persists its results.
    const StatsRow& step()
    {
        if (finished())
            throw std::logic_error("MapElites::step: run already finished");
        const std::size_t before = archive_.size();
        const PlacementSink sink = [&](const ArchiveRecord& rec, const Evaluation& ev) {
            thumbs_[rec.id] = thumbnail_of(ev.raster);
            if (out_.empty())
                return;
            const std::string stem = elite_stem(rec.id);
            detail::write_file_atomic(out_ / "elites" / (stem + ".svg"), to_svg(ev.phenotype));
            write_png(out_ / "elites" / (stem + ".png"), ev.raster);
        };
        StatsRow row = step_generation(grid_, archive_, cfg_, map_, next_gen_, sink);
        if (!out_.empty())
            for (std::size_t k = before; k < archive_.size(); ++k) {
                const std::string stem = elite_stem(archive_[k].id);
                archive_[k].svg_path = "elites/" + stem + ".svg";
                archive_[k].png_path = "elites/" + stem + ".png";
            }
        stats_.push_back(row);
        ++next_gen_;
        if (!out_.empty()) {
            detail::append_file(out_ / "archive.jsonl",
                                archive_jsonl({archive_.begin() + static_cast<std::ptrdiff_t>(before), archive_.end()}));
            detail::append_file(out_ / "stats.csv", stats_line(row));
            detail::write_file_atomic(out_ / "checkpoint.json", checkpoint().dump() + "\n");
        }
        return stats_.back();
    }

    /// Runs until `stop_after` generations have completed in total (or the
    /// configured count). `progress` is called after every generation.
    void run(std::optional<int> stop_after = std::nullopt, const std::function<void(const StatsRow&)>& progress = {})
    {
        const int end = std::min(cfg_.generations, stop_after.value_or(cfg_.generations));
        while (next_gen_ < end) {
            const auto& row = step();
            if (progress)
                progress(row);
        }
    }

    /// Montage of the current grid, also written to montage.png/json when
    /// the run has an output directory.
    Montage montage()
    {
        const int tw = kThumbWidth;
        const int th = thumb_height();
        Montage m = export_grid_montage(grid_, tw, th, [&](const Occupant& occ) {
            if (auto it = thumbs_.find(occ.id); it != thumbs_.end())
                return it->second;
            // Not cached (resumed run): re-render, which is deterministic.
            return thumbnail_of(rasterize(render(occ.genotype, cfg_.draw)));
        });
        if (!out_.empty()) {
            write_png(out_ / "montage.png", m.image);
            nlohmann::json doc = {{"grid_n", grid_.grid_n()}, {"tile", {tw, th}}, {"cells", m.cells}};
            detail::write_file_atomic(out_ / "montage.json", doc.dump(2) + "\n");
        }
        return m;
    }

    bool finished() const noexcept { return next_gen_ >= cfg_.generations; }
    int next_generation() const noexcept { return next_gen_; }
    const RunConfig& config() const noexcept { return cfg_; }
    const ReducedMap& map() const noexcept { return map_; }
    const EliteGrid& grid() const noexcept { return grid_; }
    const std::vector<ArchiveRecord>& archive() const noexcept { return archive_; }
    const RunStats& stats() const noexcept { return stats_; }
    const std::filesystem::path& output_dir() const noexcept { return out_; }

private:
    int thumb_height() const
    {
        return std::max(3, static_cast<int>(std::lround(static_cast<double>(kThumbWidth) * cfg_.draw.canvas_height /
                                                        cfg_.draw.canvas_width)));
    }

    GrayImage thumbnail_of(const GrayImage& raster) const { return box_downsample(raster, kThumbWidth, thumb_height()); }

    RunConfig cfg_;
    ReducedMap map_;
    EliteGrid grid_;
    std::vector<ArchiveRecord> archive_;
    RunStats stats_;
    int next_gen_ = 0;
    std::filesystem::path out_;
    std::map<std::uint64_t, GrayImage> thumbs_;
};

} // namespace qdart
