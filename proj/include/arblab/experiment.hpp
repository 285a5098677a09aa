#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "arblab/battery.hpp"
#include "arblab/cem.hpp"
#include "arblab/config.hpp"
#include "arblab/dqn.hpp"
#include "arblab/forecast_wrapper.hpp"
#include "arblab/forecasting.hpp"
#include "arblab/market_data.hpp"
#include "arblab/oracle.hpp"

namespace arblab {

enum class AgentKind { dqn, cem, mpc_ga, dp };

inline std::string to_string(AgentKind k) {
    switch (k) {
        case AgentKind::dqn: return "dqn";
        case AgentKind::cem: return "cem";
        case AgentKind::mpc_ga: return "mpc-ga";
        case AgentKind::dp: return "dp";
    }
    throw std::invalid_argument("unknown agent kind");
}

inline AgentKind agent_kind_from_string(const std::string& s) {
    if (s == "dqn") return AgentKind::dqn;
    if (s == "cem") return AgentKind::cem;
    if (s == "mpc-ga") return AgentKind::mpc_ga;
    if (s == "dp") return AgentKind::dp;
    throw std::invalid_argument("unknown agent kind '" + s + "'");
}

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty sequence");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// population standard deviation; a single sample has std 0
inline double std_of(std::span<const double> xs) {
    const double mu = mean_of(xs);
    double var = 0.0;
    for (double x : xs) var += (x - mu) * (x - mu);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Data loading

struct DataBundle {
    MarketSeries series;
    std::vector<Feature> features;
    std::size_t window_size = 24;
    double smoothing_alpha = 0.0;  // 0 = off
    ScalerParams scaler;
};

/// Builds the market series named by the config: `data.kind` is one of
/// csv (reads data.path), synthetic, or mean_revert. Split points in
/// `data.splits` are fractions when <= 1, record indices otherwise.
inline MarketSeries load_series(const Config& cfg) {
    const std::string kind = cfg.get_string("data.kind", cfg.has("data.path") ? "csv" : "synthetic");
    auto build = [&]() -> MarketSeries {
        if (kind == "csv") {
            IngestOptions opts;
            opts.fill_gaps = cfg.get_bool("data.fill_gaps", false);
            return ingest_csv(cfg.get_string("data.path"), opts);
        }
        if (kind == "synthetic") {
            SyntheticConfig sc;
            sc.length_hours = static_cast<std::size_t>(cfg.get_int("data.length", 8760));
            sc.seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 0));
            sc.spike_rate = cfg.get_double("data.spike_rate", 0.0);
            sc.base_mean = cfg.get_double("data.base_mean", sc.base_mean);
            sc.daily_amplitude = cfg.get_double("data.daily_amplitude", sc.daily_amplitude);
            sc.noise_scale = cfg.get_double("data.noise_scale", sc.noise_scale);
            sc.spike_min_mult = cfg.get_double("data.spike_min_mult", sc.spike_min_mult);
            sc.spike_max_mult = cfg.get_double("data.spike_max_mult", sc.spike_max_mult);
            sc.spike_duration_hours = static_cast<std::size_t>(
                cfg.get_int("data.spike_duration", (std::int64_t)sc.spike_duration_hours));
            sc.dip_rate = cfg.get_double("data.dip_rate", sc.dip_rate);
            return generate_synthetic(sc).series;
        }
        if (kind == "mean_revert") {
            return generate_mean_reverting(
                static_cast<std::size_t>(cfg.get_int("data.length", 8760)),
                static_cast<std::uint64_t>(cfg.get_int("data.seed", 0)),
                cfg.get_double("data.mu", 60.0), cfg.get_double("data.phi", 0.95),
                cfg.get_double("data.noise_std", 8.0));
        }
        throw std::runtime_error("unknown data.kind '" + kind + "'");
    };
    MarketSeries series = build();
    const auto splits = cfg.get_double_list("data.splits", {0.7, 0.85});
    if (splits.size() != 2) {
        throw std::runtime_error("data.splits needs exactly [train_end, val_end]");
    }
    if (splits[0] <= 1.0 && splits[1] <= 1.0) {
        series.set_split_fractions(splits[0], splits[1]);
    } else {
        series.set_split(static_cast<std::size_t>(splits[0]),
                         static_cast<std::size_t>(splits[1]));
    }
    return series;
}

inline DataBundle load_data(const Config& cfg) {
    DataBundle bundle{load_series(cfg), {}, 24, 0.0, {}};
    for (const auto& name : cfg.get_list("features", {"price"})) {
        bundle.features.push_back(feature_from_string(name));
    }
    bundle.window_size = static_cast<std::size_t>(cfg.get_int("window_size", 24));
    bundle.smoothing_alpha = cfg.get_double("smoothing.alpha", 0.0);
    bundle.scaler = ScalerParams::fit(bundle.series, bundle.features, bundle.smoothing_alpha);
    return bundle;
}

/// Resolves a named split ("train", "validation", "test", "full") or an
/// explicit [begin, end) pair into an index range.
inline IndexRange resolve_range(const MarketSeries& series, const Config& cfg,
                                const std::string& key, const std::string& fallback) {
    const std::string raw = cfg.get_string(key, fallback);
    if (raw == "train") return series.train_range();
    if (raw == "validation") return series.validation_range();
    if (raw == "test") return series.test_range();
    if (raw == "full") return series.full_range();
    const auto pair = cfg.get_int_list(key);
    if (pair.size() != 2 || pair[0] < 0 || pair[1] <= pair[0] ||
        static_cast<std::size_t>(pair[1]) > series.size()) {
        throw std::runtime_error("config key '" + key + "': invalid range");
    }
    return {static_cast<std::size_t>(pair[0]), static_cast<std::size_t>(pair[1])};
}

/// Wrapper settings from [wrapper]; predicted mode loads every checkpoint
/// up front so missing files fail before any training starts.
inline WrapperConfig wrapper_from_config(const Config& cfg, std::size_t window_size) {
    WrapperConfig w;
    w.mode = wrapper_mode_from_string(cfg.get_string("wrapper.mode", "none"));
    w.window_size = window_size;
    if (w.mode == WrapperMode::none) return w;
    for (auto h : cfg.get_int_list("wrapper.horizons")) w.horizons.push_back(static_cast<int>(h));
    if (w.mode == WrapperMode::predicted) {
        for (const auto& [key, path] : cfg.get_map("wrapper.checkpoints")) {
            std::ifstream in(path);
            if (!in) {
                throw std::runtime_error("missing forecaster checkpoint '" + path + "'");
            }
            const int h = static_cast<int>(parse_int(key));
            w.forecasters.emplace(h, Forecaster::load(in));
        }
    }
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------
// Experiment execution

struct ExperimentSpec {
    std::string name = "experiment";
    AgentKind kind = AgentKind::dqn;
    std::vector<std::uint64_t> seeds = {1};
    std::size_t episodes = 1;
    std::string out_dir = "runs";
    Config config;

    static ExperimentSpec from_config(const Config& cfg) {
        ExperimentSpec s;
        s.config = cfg;
        s.name = cfg.get_string("experiment.name", "experiment");
        s.kind = agent_kind_from_string(cfg.get_string("experiment.agent", "dqn"));
        s.seeds.clear();
        for (auto v : cfg.get_int_list("experiment.seeds", {1})) {
            s.seeds.push_back(static_cast<std::uint64_t>(v));
        }
        if (s.seeds.empty()) throw std::runtime_error("experiment.seeds must be non-empty");
        s.episodes = static_cast<std::size_t>(cfg.get_int("experiment.episodes", 1));
        s.out_dir = cfg.get_string("experiment.out", "runs");
        return s;
    }

    /// Content-addressed run directory: <out>/<name>-<hash8>.
    std::string run_dir() const {
        return (std::filesystem::path(out_dir) / (name + "-" + config.spec_hash().substr(0, 8)))
            .string();
    }
};

struct SeedRunOutput {
    double reward = 0.0;
    std::size_t activity = 0;
    std::vector<TraceRow> trace;
    std::vector<double> episode_history;     // dqn: reward per training episode
    std::vector<CemIterStats> cem_stats;     // cem only
    DenseNet trained_net;                    // dqn only
    double compute_seconds = 0.0;
};

/// Trains/solves one seed of the experiment and evaluates greedily.
/// Deterministic for a fixed (config, seed).
inline SeedRunOutput run_single_seed(const ExperimentSpec& spec, const DataBundle& data,
                                     IndexRange range, const WrapperConfig& wcfg,
                                     std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const Config& cfg = spec.config;
    const BatteryParams params = BatteryParams::from_config(cfg);
    const double initial_soc = cfg.get_double("experiment.initial_soc", 0.5);
    const std::array<double, 3> table = discretize_actions(params);
    SeedRunOutput out;
    switch (spec.kind) {
        case AgentKind::dqn: {
            ForecastWrapper env(data.series, range, params, wcfg, initial_soc);
            DqnConfig dq = DqnConfig::from_config(cfg);
            auto trained = train_dqn(env, table, dq, spec.episodes, data.scaler, seed);
            out.episode_history = trained.episode_rewards;
            out.trained_net = trained.agent.q_net();
            const auto eval = evaluate_policy(trained.agent, env);
            out.reward = eval.total_reward;
            out.activity = eval.activity_count;
            out.trace = eval.trace;
            break;
        }
        case AgentKind::cem: {
            ForecastWrapper env(data.series, range, params, wcfg, initial_soc);
            CemConfig cc = CemConfig::from_config(cfg);
            cc.seed = seed;
            const auto widths = cem_policy_widths(env.obs_width(), cc.hidden);
            const auto result = cem_optimize(
                [&](std::span<const double> p) {
                    return cem_policy_eval(p, widths, env, table, data.scaler);
                },
                DenseNet::param_count_for(widths), cc);
            out.cem_stats = result.stats;
            const DenseNet policy = make_cem_policy(result.best_params, widths);
            const auto eval = rollout_policy(
                [&](const std::vector<double>& obs) {
                    std::vector<double> x(obs.size());
                    x[0] = obs[0];
                    for (std::size_t i = 1; i < obs.size(); ++i) {
                        x[i] = data.scaler.transform_price(obs[i]);
                    }
                    const auto logits = policy.forward(x);
                    int best = 0;
                    for (int a = 1; a < static_cast<int>(logits.size()); ++a) {
                        if (logits[a] > logits[best]) best = a;
                    }
                    return best;
                },
                env, table);
            out.reward = eval.total_reward;
            out.activity = eval.activity_count;
            out.trace = eval.trace;
            break;
        }
        case AgentKind::mpc_ga: {
            GaConfig gc = GaConfig::from_config(cfg);
            gc.seed = seed;
            const std::span<const MarketRecord> segment(data.series.records().data() + range.begin,
                                                        range.size());
            auto result = mpc_ga_dispatch(segment, params, gc, initial_soc);
            out.reward = result.total_reward;
            out.trace = std::move(result.trace);
            for (const auto& row : out.trace) {
                if (std::abs(row.corrected_action) > kActivityEpsilonMw) ++out.activity;
            }
            break;
        }
        case AgentKind::dp: {
            const DpConfig dc = DpConfig::from_config(cfg);
            const std::span<const MarketRecord> segment(data.series.records().data() + range.begin,
                                                        range.size());
            auto result = dp_optimal(segment, params, dc, initial_soc);
            out.reward = result.total_reward;
            out.trace = std::move(result.trace);
            for (const auto& row : out.trace) {
                if (std::abs(row.corrected_action) > kActivityEpsilonMw) ++out.activity;
            }
            break;
        }
    }
    out.compute_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct RunSummary {
    std::string name;
    std::string kind;
    std::vector<std::uint64_t> seeds;
    std::vector<double> rewards;
    std::vector<std::size_t> activities;
    std::size_t steps = 0;
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double mean_activity = 0.0;
    double compute_seconds = 0.0;
    std::string run_dir;

    void finalize() {
        mean_reward = mean_of(rewards);
        std_reward = std_of(rewards);
        double act = 0.0;
        for (auto a : activities) act += static_cast<double>(a);
        mean_activity = act / static_cast<double>(activities.size());
    }
};

inline void write_summary_csv(const std::string& path, const RunSummary& s) {
    CsvWriter w(path);
    w.row({"name", "kind", "seed", "reward", "activity", "steps"});
    for (std::size_t i = 0; i < s.seeds.size(); ++i) {
        w.row({s.name, s.kind, std::to_string(s.seeds[i]), fmt_double(s.rewards[i]),
               std::to_string(s.activities[i]), std::to_string(s.steps)});
    }
}

inline RunSummary read_summary_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.rows.empty()) throw std::runtime_error(path + ": summary has no rows");
    RunSummary s;
    for (const auto& r : t.rows) {
        if (r.size() != 6) throw std::runtime_error(path + ": summary row needs 6 fields");
        s.name = r[0];
        s.kind = r[1];
        s.seeds.push_back(static_cast<std::uint64_t>(parse_int(r[2])));
        s.rewards.push_back(parse_double(r[3]));
        s.activities.push_back(static_cast<std::size_t>(parse_int(r[4])));
        s.steps = static_cast<std::size_t>(parse_int(r[5]));
    }
    s.finalize();
    return s;
}

inline void write_history_csv(const std::string& path,
                              const std::vector<std::uint64_t>& seeds,
                              const std::vector<std::vector<double>>& histories) {
    CsvWriter w(path);
    w.row({"episode", "seed", "reward"});
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        for (std::size_t ep = 0; ep < histories[k].size(); ++ep) {
            w.row({std::to_string(ep + 1), std::to_string(seeds[k]),
                   fmt_double(histories[k][ep])});
        }
    }
}

/// Per-episode mean and standard deviation across seed runs.
struct HistoryCurves {
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline HistoryCurves aggregate_histories(const std::vector<std::vector<double>>& histories) {
    HistoryCurves curves;
    if (histories.empty()) return curves;
    const std::size_t episodes = histories.front().size();
    for (const auto& h : histories) {
        if (h.size() != episodes) {
            throw std::invalid_argument("seed histories differ in episode count");
        }
    }
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        std::vector<double> column;
        column.reserve(histories.size());
        for (const auto& h : histories) column.push_back(h[ep]);
        curves.mean.push_back(mean_of(column));
        curves.stddev.push_back(std_of(column));
    }
    return curves;
}

inline void write_cem_csv(const std::string& path, const std::vector<CemIterStats>& stats) {
    CsvWriter w(path);
    w.row({"iteration", "best", "mean", "std"});
    for (const auto& st : stats) {
        w.row({std::to_string(st.iteration), fmt_double(st.best), fmt_double(st.score_mean),
               fmt_double(st.score_std)});
    }
}

/// Runs every seed (in parallel worker threads), writes history, per-seed
/// traces and the summary into the content-addressed run directory, and
/// returns the aggregate. Wall-clock timings go to timing.csv, which is
/// the one file that differs between reruns.
inline RunSummary run_experiment(const ExperimentSpec& spec) {
    const DataBundle data = load_data(spec.config);
    const IndexRange range = resolve_range(data.series, spec.config, "experiment.range", "test");
    if (range.size() == 0) throw std::runtime_error("experiment range is empty");
    // fail fast on missing checkpoints before any directory is created
    const WrapperConfig wcfg = wrapper_from_config(spec.config, data.window_size);

    std::vector<SeedRunOutput> outputs(spec.seeds.size());
    std::vector<std::thread> workers;
    const std::size_t n_workers =
        std::min<std::size_t>(spec.seeds.size(),
                              std::max(1u, std::thread::hardware_concurrency()));
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&]() {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= spec.seeds.size()) break;
                outputs[i] = run_single_seed(spec, data, range, wcfg, spec.seeds[i]);
            }
        });
    }
    for (auto& t : workers) t.join();

    const std::filesystem::path dir(spec.run_dir());
    std::filesystem::create_directories(dir);

    RunSummary summary;
    summary.name = spec.name;
    summary.kind = to_string(spec.kind);
    summary.seeds = spec.seeds;
    summary.steps = range.size();
    summary.run_dir = dir.string();
    std::vector<std::vector<double>> histories;
    for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
        const auto& out = outputs[i];
        summary.rewards.push_back(out.reward);
        summary.activities.push_back(out.activity);
        summary.compute_seconds += out.compute_seconds;
        histories.push_back(out.episode_history);
        const std::string tag = std::to_string(spec.seeds[i]);
        write_trace_csv((dir / ("trace_seed" + tag + ".csv")).string(), out.trace);
        if (spec.kind == AgentKind::dqn) {
            std::ofstream net_out(dir / ("qnet_seed" + tag + ".txt"));
            save_net(net_out, out.trained_net);
        } else if (spec.kind == AgentKind::cem) {
            write_cem_csv((dir / ("cem_seed" + tag + ".csv")).string(), out.cem_stats);
        }
    }
    if (spec.kind == AgentKind::dqn) {
        write_history_csv((dir / "history.csv").string(), spec.seeds, histories);
        const HistoryCurves curves = aggregate_histories(histories);
        CsvWriter w((dir / "history_stats.csv").string());
        w.row({"episode", "mean", "std"});
        for (std::size_t ep = 0; ep < curves.mean.size(); ++ep) {
            w.row({std::to_string(ep + 1), fmt_double(curves.mean[ep]),
                   fmt_double(curves.stddev[ep])});
        }
    }
    summary.finalize();
    write_summary_csv((dir / "summary.csv").string(), summary);
    {
        CsvWriter w((dir / "timing.csv").string());
        w.row({"seed", "compute_seconds"});
        for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
            w.row({std::to_string(spec.seeds[i]), fmt_double(outputs[i].compute_seconds)});
        }
    }
    return summary;
}

// ---------------------------------------------------------------------------
// Comparison report

struct ReportRow {
    std::string name;
    std::string kind;
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double gain_pct = 0.0;  // relative to the baseline run's mean
    double mean_activity = 0.0;
    std::size_t steps = 0;
    double compute_seconds = 0.0;
};

struct Report {
    std::vector<ReportRow> rows;
    std::string text;
};

inline double read_total_timing(const std::filesystem::path& dir) {
    const auto path = dir / "timing.csv";
    if (!std::filesystem::exists(path)) return 0.0;
    double total = 0.0;
    for (const auto& r : read_csv(path.string()).rows) {
        if (r.size() == 2) total += parse_double(r[1]);
    }
    return total;
}

/// Side-by-side comparison of run directories. The first directory is the
/// baseline for the relative-gain column. report.csv carries the
/// deterministic metrics; compute seconds appear in the text table only.
inline Report compare_report(const std::vector<std::string>& run_dirs,
                             const std::string& out_csv = "") {
    if (run_dirs.empty()) throw std::invalid_argument("compare_report needs at least one run");
    Report report;
    for (const auto& d : run_dirs) {
        const std::filesystem::path dir(d);
        const auto summary_path = dir / "summary.csv";
        if (!std::filesystem::exists(summary_path)) {
            throw std::runtime_error("no run summary found in '" + d + "'");
        }
        const RunSummary s = read_summary_csv(summary_path.string());
        ReportRow row;
        row.name = s.name;
        row.kind = s.kind;
        row.mean_reward = s.mean_reward;
        row.std_reward = s.std_reward;
        row.mean_activity = s.mean_activity;
        row.steps = s.steps;
        row.compute_seconds = read_total_timing(dir);
        report.rows.push_back(row);
    }
    const double base = report.rows.front().mean_reward;
    for (auto& row : report.rows) {
        row.gain_pct = base == 0.0 ? 0.0 : (row.mean_reward - base) / std::abs(base) * 100.0;
        if (row.steps != report.rows.front().steps) {
            std::cerr << "compare_report: run '" << row.name << "' has " << row.steps
                      << " steps per episode, baseline has " << report.rows.front().steps << "\n";
        }
    }
    std::ostringstream text;
    {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-24s%-8s%-16s%-12s%-10s%-10s%-12s", "run", "kind",
                      "mean_reward", "std", "gain%", "activity", "compute(s)");
        text << buf << '\n';
    }
    for (const auto& row : report.rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-24s%-8s%-16.2f%-12.2f%-10.2f%-10.1f%-12.2f",
                      row.name.c_str(), row.kind.c_str(), row.mean_reward, row.std_reward,
                      row.gain_pct, row.mean_activity, row.compute_seconds);
        text << buf << '\n';
    }
    report.text = text.str();
    if (!out_csv.empty()) {
        CsvWriter w(out_csv);
        w.row({"name", "kind", "mean_reward", "std_reward", "gain_vs_baseline_pct",
               "mean_activity", "steps"});
        for (const auto& row : report.rows) {
            w.row({row.name, row.kind, fmt_double(row.mean_reward), fmt_double(row.std_reward),
                   fmt_double(row.gain_pct), fmt_double(row.mean_activity),
                   std::to_string(row.steps)});
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep (grid / capped random search)

struct SweepCell {
    std::vector<std::pair<std::string, std::string>> overrides;
    double metric = 0.0;
};

struct SweepResult {
    std::size_t best_index = 0;
    Config best_config;
    double best_metric = 0.0;
    std::vector<SweepCell> cells;
};

/// Expands `sweep.grid.<key> = [v1, v2, ...]` entries into a Cartesian
/// grid over config overrides (capped at `cap` uniformly sampled cells
/// when cap > 0), scores each cell by mean reward on the sweep range, and
/// returns the argmax. Ties keep the first cell in enumeration order.
inline SweepResult hyperparameter_sweep(const Config& base, std::size_t cap, std::uint64_t seed) {
    const std::string prefix = "sweep.grid.";
    std::vector<std::string> keys;
    std::vector<std::vector<std::string>> values;
    for (const auto& [k, v] : base.entries()) {
        if (k.rfind(prefix, 0) == 0) {
            keys.push_back(k.substr(prefix.size()));
            values.push_back(base.get_list(k));
            if (values.back().empty()) {
                throw std::runtime_error("sweep grid for '" + keys.back() + "' is empty");
            }
        }
    }
    if (keys.empty()) throw std::runtime_error("no sweep.grid.* entries in config");
    std::size_t total = 1;
    for (const auto& v : values) total *= v.size();

    std::vector<std::size_t> cells(total);
    std::iota(cells.begin(), cells.end(), 0);
    if (cap > 0 && cap < total) {
        // uniform sample without replacement, then restore enumeration order
        std::mt19937_64 rng(seed);
        std::vector<std::size_t> picked;
        std::unordered_set<std::size_t> chosen;
        for (std::size_t j = total - cap; j < total; ++j) {
            std::uniform_int_distribution<std::size_t> dist(0, j);
            std::size_t t = dist(rng);
            if (chosen.count(t)) t = j;
            chosen.insert(t);
            picked.push_back(t);
        }
        std::sort(picked.begin(), picked.end());
        cells = std::move(picked);
    }

    SweepResult result;
    result.best_metric = -std::numeric_limits<double>::infinity();
    for (std::size_t cell : cells) {
        Config cfg = base;
        SweepCell record;
        std::size_t rem = cell;
        // last key varies fastest
        for (std::size_t k = keys.size(); k-- > 0;) {
            const std::size_t idx = rem % values[k].size();
            rem /= values[k].size();
            cfg.set(keys[k], values[k][idx]);
            record.overrides.emplace_back(keys[k], values[k][idx]);
        }
        std::reverse(record.overrides.begin(), record.overrides.end());

        ExperimentSpec spec = ExperimentSpec::from_config(cfg);
        spec.episodes = static_cast<std::size_t>(cfg.get_int("sweep.episodes", 1));
        spec.seeds.clear();
        for (auto v : cfg.get_int_list("sweep.seeds", {1})) {
            spec.seeds.push_back(static_cast<std::uint64_t>(v));
        }
        const DataBundle data = load_data(cfg);
        const IndexRange range = resolve_range(data.series, cfg, "sweep.range", "validation");
        const WrapperConfig wcfg = wrapper_from_config(cfg, data.window_size);
        std::vector<double> rewards;
        for (auto s : spec.seeds) {
            rewards.push_back(run_single_seed(spec, data, range, wcfg, s).reward);
        }
        record.metric = mean_of(rewards);
        if (record.metric > result.best_metric) {
            result.best_metric = record.metric;
            result.best_index = result.cells.size();
            result.best_config = cfg;
        }
        result.cells.push_back(std::move(record));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Forecaster metrics files (sorted upsert, so reruns are byte-identical)

struct ForecasterMetricsRow {
    int horizon = 0;
    std::string kind;
    double rmse = 0.0, mae = 0.0, mape = 0.0;
    std::size_t params = 0;
};

inline void upsert_forecaster_metrics(const std::string& path, const ForecasterMetricsRow& row) {
    std::vector<ForecasterMetricsRow> rows;
    if (std::filesystem::exists(path)) {
        for (const auto& r : read_csv(path).rows) {
            if (r.size() != 6) throw std::runtime_error(path + ": metrics row needs 6 fields");
            ForecasterMetricsRow m;
            m.horizon = static_cast<int>(parse_int(r[0]));
            m.kind = r[1];
            m.rmse = parse_double(r[2]);
            m.mae = parse_double(r[3]);
            m.mape = parse_double(r[4]);
            m.params = static_cast<std::size_t>(parse_int(r[5]));
            if (m.horizon == row.horizon && m.kind == row.kind) continue;  // replaced
            rows.push_back(m);
        }
    }
    rows.push_back(row);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.horizon != b.horizon ? a.horizon < b.horizon : a.kind < b.kind;
    });
    CsvWriter w(path);
    w.row({"horizon", "kind", "rmse", "mae", "mape", "params"});
    for (const auto& m : rows) {
        w.row({std::to_string(m.horizon), m.kind, fmt_double(m.rmse), fmt_double(m.mae),
               fmt_double(m.mape), std::to_string(m.params)});
    }
}

}  // namespace arblab
