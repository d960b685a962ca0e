#include <gtest/gtest.h>

#include <qdart/qd.hpp>

#include <filesystem>
#include <fstream>
#include <set>

using namespace qdart;
namespace fs = std::filesystem;

namespace {

RunConfig small_config()
{
    RunConfig cfg;
    cfg.grid_n = 4;
    cfg.generations = 6;
    cfg.population = 5;
    cfg.seed = 11;
    cfg.draw.canvas_width = 96;
    cfg.draw.canvas_height = 72;
    cfg.draw.lifetime = 150;
    cfg.threads = 1;
    return cfg;
}

const ReducedMap& small_map()
{
    static const ReducedMap map = [] {
        const auto cfg = small_config();
        std::vector<FeatureVector> samples;
        for (std::uint64_t s = 0; samples.size() < 24; ++s) {
            try {
                const auto img = rasterize(render(random_genotype(1000 + s), cfg.draw));
                samples.push_back(describe(img, cfg.draw.canvas_width, cfg.draw.canvas_height));
            }
            catch (const std::exception&) {
            }
        }
        return fit_reduction(samples, cfg.grid_n);
    }();
    return map;
}

ArchiveRecord candidate(CellIndex cell, double f, std::uint64_t id = 0)
{
    ArchiveRecord r;
    r.id = id;
    r.cell = cell;
    r.fitness = f;
    r.genotype = random_genotype(id);
    return r;
}

fs::path fresh_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("qdart_test_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST(Placement, EmptyCellAcceptsAnything)
{
    EliteGrid g(8);
    EXPECT_TRUE(try_place(g, candidate({2, 5}, 0.3)));
    EXPECT_EQ(g.at({2, 5})->fitness, 0.3);
    EXPECT_EQ(g.occupied(), 1u);
}

TEST(Placement, StrictImprovementOnlyAndIncumbentWinsTies)
{
    EliteGrid g(8);
    ASSERT_TRUE(try_place(g, candidate({1, 1}, 0.5, 1)));
    EXPECT_FALSE(try_place(g, candidate({1, 1}, 0.4, 2)));
    EXPECT_FALSE(try_place(g, candidate({1, 1}, 0.5, 3)));
    EXPECT_EQ(g.at({1, 1})->id, 1u);
    EXPECT_TRUE(try_place(g, candidate({1, 1}, 0.6, 4)));
    EXPECT_EQ(g.at({1, 1})->id, 4u);
}

TEST(Placement, OccupantsAreRowMajorAndMeanIgnoresEmptyCells)
{
    EliteGrid g(3);
    EXPECT_EQ(g.mean_fitness(), 0.0);
    try_place(g, candidate({2, 0}, 0.2, 1));
    try_place(g, candidate({0, 1}, 0.6, 2));
    const auto occ = g.occupants();
    ASSERT_EQ(occ.size(), 2u);
    EXPECT_EQ(occ[0].first, (CellIndex{2, 0}));
    EXPECT_EQ(occ[1].first, (CellIndex{0, 1}));
    EXPECT_DOUBLE_EQ(g.mean_fitness(), 0.4);
    EXPECT_DOUBLE_EQ(g.occupancy(), 2.0 / 9.0);
}

TEST(Children, EmptySampledCellGivesRandomGenomes)
{
    const auto cfg = small_config();
    const auto kids = make_children(EliteGrid(cfg.grid_n), cfg, 0);
    ASSERT_EQ(kids.size(), 5u);
    for (std::size_t k = 0; k < kids.size(); ++k) {
        EXPECT_FALSE(kids[k].second.has_value());
        EXPECT_EQ(kids[k].first, random_genotype(derive_seed(cfg.seed, 0, k + 1)));
    }
}

TEST(Children, OccupiedCellGivesMutantsOfItsOccupant)
{
    const auto cfg = small_config();
    EliteGrid g(cfg.grid_n);
    for (int j = 0; j < cfg.grid_n; ++j)
        for (int i = 0; i < cfg.grid_n; ++i)
            g.set({i, j}, Occupant{static_cast<std::uint64_t>(100 + j * cfg.grid_n + i), 0.5,
                                   random_genotype(static_cast<std::uint64_t>(j * 10 + i))});
    for (int gen = 0; gen < 5; ++gen) {
        const auto cell = sampled_cell(cfg, gen);
        const auto& parent = *g.at(cell);
        for (const auto& [child, pid] : make_children(g, cfg, gen)) {
            ASSERT_TRUE(pid.has_value());
            EXPECT_EQ(*pid, parent.id);
            // Each gene moves by a bounded step and stays in the unit interval.
            for (std::size_t k = 0; k < kGeneCount; ++k) {
                EXPECT_LE(std::abs(child.genes()[k] - parent.genotype.genes()[k]), cfg.mutation_factor + 1e-12);
                EXPECT_GE(child.genes()[k], 0.0);
                EXPECT_LE(child.genes()[k], 1.0);
            }
        }
    }
}

TEST(Children, SampledCellsCoverTheGrid)
{
    const auto cfg = small_config();
    std::set<std::pair<int, int>> seen;
    for (int gen = 0; gen < 400; ++gen) {
        const auto c = sampled_cell(cfg, gen);
        ASSERT_TRUE(EliteGrid(cfg.grid_n).contains(c));
        seen.insert({c.i, c.j});
    }
    EXPECT_EQ(seen.size(), 16u);
}

TEST(MapElitesRun, DeterministicAndThreadIndependent)
{
    auto cfg = small_config();
    MapElites a(cfg, small_map());
    a.run();
    cfg.threads = 3;
    MapElites b(cfg, small_map());
    b.run();
    EXPECT_EQ(archive_checksum(a.archive()), archive_checksum(b.archive()));
    EXPECT_EQ(a.grid(), b.grid());
    EXPECT_EQ(a.stats(), b.stats());
    ASSERT_EQ(a.stats().size(), 6u);
    EXPECT_FALSE(a.archive().empty());
}

TEST(MapElitesRun, CellFitnessNeverDecreases)
{
    MapElites me(small_config(), small_map());
    EliteGrid prev(4);
    while (!me.finished()) {
        const auto& row = me.step();
        std::size_t placed_from_archive = 0;
        for (const auto& r : me.archive())
            placed_from_archive += r.generation == row.generation;
        EXPECT_EQ(placed_from_archive, static_cast<std::size_t>(row.placed));
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 4; ++i) {
                const auto& before = prev.at({i, j});
                const auto& now = me.grid().at({i, j});
                if (before) {
                    ASSERT_TRUE(now.has_value());
                    EXPECT_GE(now->fitness, before->fitness);
                }
            }
        EXPECT_EQ(row.occupancy, me.grid().occupancy());
        EXPECT_EQ(row.mean_fitness, me.grid().mean_fitness());
        prev = me.grid();
    }
    // Every occupant is an archive record with a matching cell.
    for (const auto& [cell, occ] : me.grid().occupants()) {
        const auto& rec = me.archive().at(occ.id);
        EXPECT_EQ(rec.cell, cell);
        EXPECT_EQ(rec.fitness, occ.fitness);
    }
}

TEST(MapElitesRun, SingleGenerationSingleChild)
{
    auto cfg = small_config();
    cfg.generations = 1;
    cfg.population = 1;
    MapElites me(cfg, small_map());
    me.run();
    ASSERT_EQ(me.stats().size(), 1u);
    EXPECT_LE(me.archive().size(), 1u);
    EXPECT_LE(me.grid().occupied(), 1u);
    EXPECT_EQ(me.stats()[0].placed + me.stats()[0].failures, 1);
    EXPECT_THROW(me.step(), std::logic_error);
}

TEST(MapElitesRun, RejectsMismatchedMaps)
{
    ReducedMap tiny;
    tiny.mean = {0, 0};
    tiny.basis = {std::vector<double>{1, 0}, std::vector<double>{0, 1}};
    tiny.bounds = {std::pair{0.0, 1.0}, std::pair{0.0, 1.0}};
    EXPECT_THROW(MapElites(small_config(), tiny), std::invalid_argument);
    auto bad = small_config();
    bad.population = 0;
    EXPECT_THROW(MapElites(bad, small_map()), std::invalid_argument);
}

TEST(Checkpoint, ResumedRunMatchesUninterruptedRun)
{
    MapElites full(small_config(), small_map());
    full.run();

    MapElites first(small_config(), small_map());
    first.run(3);
    EXPECT_EQ(first.next_generation(), 3);
    const auto text = first.checkpoint().dump();
    auto resumed = MapElites::from_checkpoint(nlohmann::json::parse(text));
    resumed.run();
    EXPECT_EQ(archive_checksum(resumed.archive()), archive_checksum(full.archive()));
    EXPECT_EQ(resumed.grid(), full.grid());
    EXPECT_EQ(resumed.stats(), full.stats());
}

TEST(Checkpoint, OnDiskResumeRewritesLogs)
{
    const auto dir = fresh_dir("resume");
    {
        MapElites me(small_config(), small_map(), dir);
        me.run(2);
    }
    auto me = MapElites::resume(dir);
    EXPECT_EQ(me.next_generation(), 2);
    me.run();
    MapElites ref(small_config(), small_map());
    ref.run();
    EXPECT_EQ(me.grid(), ref.grid());

    // The log on disk is the same JSON lines as the in-memory archive, with
    // elite files for every record.
    EXPECT_EQ(detail::slurp(dir / "archive.jsonl"), archive_jsonl(me.archive()));
    for (const auto& r : me.archive()) {
        EXPECT_TRUE(fs::exists(dir / r.svg_path)) << r.svg_path;
        EXPECT_TRUE(fs::exists(dir / r.png_path)) << r.png_path;
    }
    std::ifstream stats(dir / "stats.csv");
    std::string line;
    int rows = -1;
    while (std::getline(stats, line))
        ++rows;
    EXPECT_EQ(rows, 6);
    EXPECT_TRUE(fs::exists(dir / "config.json"));

    const auto m = me.montage();
    EXPECT_EQ(m.cells.size(), me.grid().occupied());
    EXPECT_TRUE(fs::exists(dir / "montage.png"));
    EXPECT_TRUE(fs::exists(dir / "montage.json"));
    fs::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsDetected)
{
    MapElites me(small_config(), small_map());
    me.run(2);
    auto doc = me.checkpoint();
    auto edited = doc;
    edited["state"]["next_generation"] = 1;
    EXPECT_THROW(MapElites::from_checkpoint(edited), CheckpointError);
    edited = doc;
    edited["checksum"] = std::string(64, '0');
    EXPECT_THROW(MapElites::from_checkpoint(edited), CheckpointError);
    EXPECT_THROW(MapElites::from_checkpoint(nlohmann::json::object()), CheckpointError);

    // A self-consistent checksum over an inconsistent state is still refused.
    edited = doc;
    edited["state"]["next_generation"] = 5;
    edited["checksum"] = sha256_hex(edited["state"].dump());
    EXPECT_THROW(MapElites::from_checkpoint(edited), CheckpointError);

    const auto dir = fresh_dir("corrupt");
    fs::create_directories(dir);
    std::ofstream(dir / "checkpoint.json") << "{ truncated";
    EXPECT_THROW(MapElites::resume(dir), CheckpointError);
    EXPECT_THROW(MapElites::resume(dir / "missing"), CheckpointError);
    fs::remove_all(dir);
}

TEST(Checkpoint, UnwritableOutputDirectoryFailsUpFront)
{
    const auto dir = fresh_dir("unwritable");
    fs::create_directories(dir);
    std::ofstream(dir / "plain_file") << "x";
    try {
        MapElites me(small_config(), small_map(), dir / "plain_file" / "run");
        FAIL() << "expected an error";
    }
    catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("not writable"), std::string::npos) << e.what();
    }
    fs::remove_all(dir);
}

TEST(Montage, EmptyGridIsBlank)
{
    const EliteGrid g(8);
    const auto m = export_grid_montage(g, 10, 8, [](const Occupant&) { return GrayImage(10, 8, 0.0); });
    EXPECT_EQ(m.image.width(), 80);
    EXPECT_EQ(m.image.height(), 64);
    EXPECT_TRUE(m.cells.empty());
    for (double v : m.image.pixels())
        ASSERT_EQ(v, 1.0);
}

TEST(Montage, SingleOccupantLandsInItsTile)
{
    EliteGrid g(8);
    g.set({2, 3}, Occupant{7, 0.9, random_genotype(1)});
    const auto m = export_grid_montage(g, 10, 8, [](const Occupant&) { return GrayImage(10, 8, 0.0); });
    ASSERT_EQ(m.cells.size(), 1u);
    EXPECT_EQ(m.cells[0]["cell"], nlohmann::json({2, 3}));
    EXPECT_EQ(m.cells[0]["id"], 7);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 80; ++x) {
            const bool inside = x >= 20 && x < 30 && y >= 24 && y < 32;
            const bool frame = inside && (x == 20 || x == 29 || y == 24 || y == 31);
            const double expected = !inside ? 1.0 : frame ? kTileFrame : 0.0;
            ASSERT_EQ(m.image.at(x, y), expected) << x << "," << y;
        }
}

TEST(Montage, TileCountEqualsOccupancy)
{
    EliteGrid g(5);
    Rng rng(2);
    for (int k = 0; k < 12; ++k)
        g.set({static_cast<int>(rng.below(5)), static_cast<int>(rng.below(5))}, Occupant{static_cast<std::uint64_t>(k), 0.5, {}});
    const auto m = export_grid_montage(g, 4, 4, [](const Occupant&) { return GrayImage(4, 4, 0.0); });
    EXPECT_EQ(m.cells.size(), g.occupied());
    std::size_t dark_tiles = 0;
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i)
            dark_tiles += m.image.at(i * 4 + 1, j * 4 + 1) == 0.0;
    EXPECT_EQ(dark_tiles, g.occupied());
    EXPECT_THROW(export_grid_montage(g, 4, 4, [](const Occupant&) { return GrayImage(5, 4, 0.0); }), std::invalid_argument);
}

TEST(RunConfigDocument, RoundTripAndUnknownKeys)
{
    auto cfg = small_config();
    cfg.map_path = "map.json";
    cfg.threads = 0;
    const nlohmann::json j = cfg;
    EXPECT_FALSE(j.contains("threads"));
    EXPECT_EQ(j.get<RunConfig>(), cfg);
    auto bad = j;
    bad["mutation_rat"] = 0.3;
    EXPECT_THROW(bad.get<RunConfig>(), std::invalid_argument);
    bad = j;
    bad["mutation_rate"] = 1.5;
    EXPECT_THROW(bad.get<RunConfig>(), std::invalid_argument);
    const auto defaults = nlohmann::json::object().get<RunConfig>();
    EXPECT_EQ(defaults.grid_n, 8);
    EXPECT_EQ(defaults.generations, 100);
    EXPECT_EQ(defaults.population, 25);
    EXPECT_EQ(defaults.mutation_rate, 0.25);
    EXPECT_EQ(defaults.mutation_factor, 0.15);
}

TEST(Stats, CsvHasOneRowPerGeneration)
{
    const RunStats rows{{0, 0.25, 0.5, 3, 0}, {1, 0.5, 0.75, 1, 1}};
    const auto csv = stats_csv(rows);
    EXPECT_EQ(csv.rfind("generation,mean_fitness,occupancy\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_NE(csv.find("1,0.5,0.75"), std::string::npos);
}
