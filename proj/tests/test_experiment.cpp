#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "arblab/experiment.hpp"

using namespace arblab;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kTinyExperiment = R"(
[experiment]
name = tiny
agent = dqn
seeds = [1]
episodes = 2
range = full
[data]
kind = synthetic
length = 60
seed = 5
spike_rate = 0.0
splits = [1.0, 1.0]
[dqn]
hidden = [4]
batch_size = 8
sync_interval = 25
)";

}  // namespace

TEST_CASE("config: sections, comments, lists and maps") {
    const auto cfg = Config::parse_string(R"(
# a comment
top = 1
[data]
path = prices.csv   # trailing comment
splits = [0.5, 0.75]
flag = true
[wrapper]
checkpoints = {1: a.fc, 2: b.fc}
horizons = []
)");
    CHECK(cfg.get_int("top") == 1);
    CHECK(cfg.get_string("data.path") == "prices.csv");
    CHECK(cfg.get_double_list("data.splits") == std::vector<double>{0.5, 0.75});
    CHECK(cfg.get_bool("data.flag"));
    const auto map = cfg.get_map("wrapper.checkpoints");
    REQUIRE(map.size() == 2);
    CHECK(map[0].first == "1");
    CHECK(map[0].second == "a.fc");
    CHECK(cfg.get_list("wrapper.horizons").empty());
    CHECK(cfg.get_double("missing", 9.5) == 9.5);
    REQUIRE_THROWS_WITH(cfg.get_string("nope"), Catch::Matchers::ContainsSubstring("nope"));
    REQUIRE_THROWS_AS(cfg.get_int("data.path"), std::runtime_error);
}

TEST_CASE("config: malformed lines are rejected with location") {
    REQUIRE_THROWS_WITH(Config::parse_string("just words\n", "bad.cfg"),
                        Catch::Matchers::ContainsSubstring("bad.cfg:1"));
    REQUIRE_THROWS_WITH(Config::parse_string("[unterminated\n", "bad.cfg"),
                        Catch::Matchers::ContainsSubstring("bad.cfg:1"));
}

TEST_CASE("config: spec hash is stable and override-sensitive") {
    auto a = Config::parse_string("x = 1\ny = 2\n");
    const auto b = Config::parse_string("y = 2\nx = 1\n");  // order-insensitive
    CHECK(a.spec_hash() == b.spec_hash());
    a.set("x", "3");
    CHECK(a.spec_hash() != b.spec_hash());
}

TEST_CASE("load_series: synthetic with fractional and index splits") {
    auto cfg = Config::parse_string("[data]\nkind = synthetic\nlength = 100\nseed = 1\n"
                                    "spike_rate = 0\nsplits = [0.6, 0.8]\n");
    const auto s = load_series(cfg);
    CHECK(s.size() == 100);
    CHECK(s.train_range().size() == 60);
    CHECK(s.validation_range().size() == 20);
    cfg.set("data.splits", "[50, 75]");
    const auto s2 = load_series(cfg);
    CHECK(s2.train_range().size() == 50);
    CHECK(s2.validation_range().size() == 25);
}

TEST_CASE("run_experiment: files, aggregate arithmetic, reproducibility") {
    const auto out = fresh_dir("arblab_run_test");
    auto cfg = Config::parse_string(kTinyExperiment);
    cfg.set("experiment.out", out.string());
    const auto spec = ExperimentSpec::from_config(cfg);
    const RunSummary summary = run_experiment(spec);

    const fs::path dir(summary.run_dir);
    CHECK(fs::exists(dir / "summary.csv"));
    CHECK(fs::exists(dir / "history.csv"));
    CHECK(fs::exists(dir / "trace_seed1.csv"));
    CHECK(fs::exists(dir / "qnet_seed1.txt"));
    CHECK(fs::exists(dir / "timing.csv"));

    // summary round-trips through its own reader at full precision
    const RunSummary parsed = read_summary_csv((dir / "summary.csv").string());
    REQUIRE(parsed.rewards.size() == 1);
    CHECK(parsed.rewards[0] == summary.rewards[0]);
    CHECK(parsed.mean_reward == summary.mean_reward);
    CHECK(parsed.std_reward == 0.0);  // single seed

    // history csv re-parses and has one row per episode
    const CsvTable hist = read_csv((dir / "history.csv").string());
    CHECK(hist.rows.size() == 2);

    // identical spec rerun: byte-identical metric csvs (timing excluded)
    const std::string summary_bytes = read_file(dir / "summary.csv");
    const std::string history_bytes = read_file(dir / "history.csv");
    const std::string trace_bytes = read_file(dir / "trace_seed1.csv");
    run_experiment(spec);
    CHECK(read_file(dir / "summary.csv") == summary_bytes);
    CHECK(read_file(dir / "history.csv") == history_bytes);
    CHECK(read_file(dir / "trace_seed1.csv") == trace_bytes);
}

TEST_CASE("aggregate_histories: per-episode mean and std across seeds") {
    const std::vector<std::vector<double>> histories = {{1.0, 4.0}, {3.0, 8.0}};
    const auto curves = aggregate_histories(histories);
    REQUIRE(curves.mean.size() == 2);
    CHECK(curves.mean[0] == 2.0);
    CHECK(curves.mean[1] == 6.0);
    CHECK(curves.stddev[0] == 1.0);  // population std
    CHECK(curves.stddev[1] == 2.0);
    REQUIRE_THROWS_AS(aggregate_histories({{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("run_experiment: dqn emits aggregated history curves") {
    const auto out = fresh_dir("arblab_run_curves");
    auto cfg = Config::parse_string(kTinyExperiment);
    cfg.set("experiment.out", out.string());
    cfg.set("experiment.seeds", "[1, 2]");
    const auto spec = ExperimentSpec::from_config(cfg);
    const RunSummary summary = run_experiment(spec);
    const auto stats = read_csv((fs::path(summary.run_dir) / "history_stats.csv").string());
    REQUIRE(stats.rows.size() == 2);  // one row per episode
    const auto hist = read_csv((fs::path(summary.run_dir) / "history.csv").string());
    // episode-1 mean equals the average of the two seeds' first episodes
    const double e1_seed1 = parse_double(hist.rows[0][2]);
    const double e1_seed2 = parse_double(hist.rows[2][2]);
    CHECK(parse_double(stats.rows[0][1]) == (e1_seed1 + e1_seed2) / 2.0);
}

TEST_CASE("run_experiment: multi-seed aggregate matches per-seed rewards") {
    const auto out = fresh_dir("arblab_run_multiseed");
    auto cfg = Config::parse_string(kTinyExperiment);
    cfg.set("experiment.out", out.string());
    cfg.set("experiment.agent", "dp");
    cfg.set("experiment.seeds", "[1, 2, 3]");
    const auto spec = ExperimentSpec::from_config(cfg);
    const RunSummary s = run_experiment(spec);
    REQUIRE(s.rewards.size() == 3);
    CHECK(s.mean_reward == (s.rewards[0] + s.rewards[1] + s.rewards[2]) / 3.0);
    // dp ignores the seed, so the three rewards agree
    CHECK(s.rewards[0] == s.rewards[1]);
    CHECK(s.std_reward == 0.0);
}

TEST_CASE("run_experiment: missing forecaster checkpoint fails before any output") {
    const auto out = fresh_dir("arblab_failfast");
    auto cfg = Config::parse_string(kTinyExperiment);
    cfg.set("experiment.out", out.string());
    cfg.set("wrapper.mode", "predicted");
    cfg.set("wrapper.horizons", "[1]");
    cfg.set("wrapper.checkpoints", "{1: /nonexistent/path.fc}");
    const auto spec = ExperimentSpec::from_config(cfg);
    REQUIRE_THROWS_WITH(run_experiment(spec),
                        Catch::Matchers::ContainsSubstring("/nonexistent/path.fc"));
    CHECK_FALSE(fs::exists(spec.run_dir()));  // no partial run directory
}

TEST_CASE("compare_report: relative gain arithmetic") {
    const auto out = fresh_dir("arblab_report");
    // two hand-written run summaries: baseline 341k, candidate 547k
    RunSummary base;
    base.name = "basic";
    base.kind = "dqn";
    base.seeds = {1};
    base.rewards = {341000.0};
    base.activities = {1179};
    base.steps = 8760;
    base.finalize();
    RunSummary cand = base;
    cand.name = "with-forecasts";
    cand.rewards = {547000.0};
    cand.activities = {2056};
    cand.finalize();
    fs::create_directories(out / "basic");
    fs::create_directories(out / "cand");
    write_summary_csv((out / "basic" / "summary.csv").string(), base);
    write_summary_csv((out / "cand" / "summary.csv").string(), cand);

    const auto report = compare_report({(out / "basic").string(), (out / "cand").string()},
                                       (out / "report.csv").string());
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].gain_pct == 0.0);  // baseline vs itself
    CHECK_THAT(report.rows[1].gain_pct,
               Catch::Matchers::WithinAbs((547000.0 - 341000.0) / 341000.0 * 100.0, 1e-12));
    CHECK(std::llround(report.rows[1].gain_pct) == 60);  // rounds to a whole +60%
    CHECK(fs::exists(out / "report.csv"));

    SECTION("report csv re-parses") {
        const auto table = read_csv((out / "report.csv").string());
        REQUIRE(table.rows.size() == 2);
        CHECK(parse_double(table.rows[1][4]) == report.rows[1].gain_pct);
    }

    SECTION("missing directory is named in the error") {
        REQUIRE_THROWS_WITH(compare_report({(out / "nothing_here").string()}),
                            Catch::Matchers::ContainsSubstring("nothing_here"));
    }
}

TEST_CASE("sweep: grid expansion, metric argmax, tie and cap rules") {
    const auto out = fresh_dir("arblab_sweep");
    auto cfg = Config::parse_string(R"(
[experiment]
name = sweepbase
agent = dp
seeds = [1]
episodes = 1
[data]
kind = synthetic
length = 200
seed = 3
spike_rate = 0.05
splits = [0.5, 0.75]
[sweep]
episodes = 1
seeds = [1]
range = validation
)");
    cfg.set("experiment.out", out.string());

    SECTION("argmax over initial soc: more stored energy, more reward") {
        cfg.set("sweep.grid.experiment.initial_soc", "[0.2, 0.8]");
        const auto result = hyperparameter_sweep(cfg, 0, 0);
        REQUIRE(result.cells.size() == 2);
        CHECK(result.cells[1].metric > result.cells[0].metric);
        CHECK(result.best_index == 1);
        CHECK(result.best_config.get_double("experiment.initial_soc") == 0.8);
    }

    SECTION("exact tie keeps the first cell in enumeration order") {
        cfg.set("sweep.grid.dqn.gamma", "[0.9, 0.99]");  // irrelevant to dp: tie
        const auto result = hyperparameter_sweep(cfg, 0, 0);
        REQUIRE(result.cells.size() == 2);
        CHECK(result.cells[0].metric == result.cells[1].metric);
        CHECK(result.best_index == 0);
    }

    SECTION("cap samples exactly n cells, reproducibly") {
        cfg.set("sweep.grid.experiment.initial_soc", "[0.2, 0.5, 0.8]");
        cfg.set("sweep.grid.dp.resolution", "[301, 601, 1201]");
        const auto a = hyperparameter_sweep(cfg, 4, 99);
        REQUIRE(a.cells.size() == 4);
        const auto b = hyperparameter_sweep(cfg, 4, 99);
        REQUIRE(b.cells.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(a.cells[i].overrides == b.cells[i].overrides);
            CHECK(a.cells[i].metric == b.cells[i].metric);
        }
    }
}

TEST_CASE("forecaster metrics: sorted upsert keeps reruns byte-identical") {
    const auto out = fresh_dir("arblab_metrics");
    const auto path = (out / "metrics.csv").string();
    upsert_forecaster_metrics(path, {3, "neural", 120.0, 80.0, 0.4, 100});
    upsert_forecaster_metrics(path, {1, "persistence", 140.0, 90.0, 0.5, 0});
    const std::string once = read_file(path);
    // replacing an existing row and re-adding the other leaves the file unchanged
    upsert_forecaster_metrics(path, {3, "neural", 120.0, 80.0, 0.4, 100});
    CHECK(read_file(path) == once);
    const auto table = read_csv(path);
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0][0] == "1");  // sorted by horizon
    CHECK(table.rows[1][0] == "3");
}

TEST_CASE("experiment spec: content-addressed run directories") {
    auto cfg = Config::parse_string(kTinyExperiment);
    cfg.set("experiment.out", "outdir");
    const auto a = ExperimentSpec::from_config(cfg);
    cfg.set("dqn.batch_size", "16");
    const auto b = ExperimentSpec::from_config(cfg);
    CHECK(a.run_dir() != b.run_dir());  // different spec, different directory
}
