// arblab: battery energy-arbitrage lab command line.
//
// Subcommands cover the full pipeline: data generation/ingestion,
// per-horizon forecaster training and evaluation, DQN training, CEM and
// oracle benchmarks, run comparison and hyperparameter sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "arblab/experiment.hpp"

namespace fs = std::filesystem;
using namespace arblab;

namespace {

Config load_config(const std::string& path) {
    if (path.empty()) throw std::runtime_error("--config is required");
    return Config::parse_file(path);
}

std::string forecaster_file(const std::string& dir, const std::string& kind, int horizon) {
    return (fs::path(dir) / (kind + "_h" + std::to_string(horizon) + ".fc")).string();
}

Forecaster train_forecaster_from_config(const Config& cfg, const DataBundle& data,
                                        const std::string& kind, int horizon,
                                        std::uint64_t seed) {
    const ForecasterKind k = forecaster_kind_from_string(kind);
    if (k == ForecasterKind::persistence) {
        return Forecaster::persistence(horizon);
    }
    const IndexRange train = data.series.train_range();
    if (k == ForecasterKind::ar) {
        const auto prices = data.series.prices();
        const std::span<const double> train_prices(prices.data() + train.begin, train.size());
        const int order = static_cast<int>(cfg.get_int("forecaster.ar_order", 24));
        const int diff = static_cast<int>(cfg.get_int("forecaster.ar_diff", 0));
        return Forecaster::autoregressive(fit_ar(train_prices, order, diff), horizon);
    }
    WindowOptions wopts;
    wopts.smoothing_alpha = data.smoothing_alpha;
    const auto train_ds =
        build_windows(data.series, train, data.features, data.window_size,
                      static_cast<std::size_t>(horizon), data.scaler, wopts);
    const auto val_ds =
        build_windows(data.series, data.series.validation_range(), data.features,
                      data.window_size, static_cast<std::size_t>(horizon), data.scaler, wopts);
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("forecaster.learning_rate", 1e-3);
    tc.batch_size = static_cast<std::size_t>(cfg.get_int("forecaster.batch_size", 32));
    tc.max_epochs = static_cast<std::size_t>(cfg.get_int("forecaster.max_epochs", 200));
    tc.patience = static_cast<std::size_t>(cfg.get_int("forecaster.patience", 10));
    tc.seed = seed;
    NeuralForecasterSpec spec;
    spec.features = data.features;
    spec.scaler = data.scaler;
    spec.smoothing_alpha = data.smoothing_alpha;
    spec.hidden.clear();
    for (auto v : cfg.get_int_list("forecaster.hidden", {64})) {
        spec.hidden.push_back(static_cast<std::size_t>(v));
    }
    return train_neural_forecaster(train_ds, val_ds, tc, spec);
}

void apply_seed_override(ExperimentSpec& spec, int seeds_count, long long seed) {
    if (seeds_count > 0) {
        spec.seeds.clear();
        for (int i = 1; i <= seeds_count; ++i) spec.seeds.push_back(static_cast<std::uint64_t>(i));
    } else if (seed >= 0) {
        spec.seeds = {static_cast<std::uint64_t>(seed)};
    }
}

void print_summary(const RunSummary& s) {
    std::cout << s.name << " (" << s.kind << "): mean reward " << fmt_double(s.mean_reward)
              << ", std " << fmt_double(s.std_reward) << ", mean activity "
              << fmt_double(s.mean_activity) << ", " << s.seeds.size() << " seed(s) -> "
              << s.run_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"battery energy-arbitrage lab"};
    app.require_subcommand(1);
    app.fallthrough();  // global --config/--seed/--out may follow the subcommand

    std::string config_path, out_path, kind_arg;
    long long seed_arg = -1;
    int horizon_arg = 0, seeds_count = 0;
    std::size_t cap = 0;
    std::vector<std::string> run_dirs;

    app.add_option("--config", config_path, "experiment config file")->envname("ARBLAB_CONFIG");
    app.add_option("--seed", seed_arg, "seed override");
    app.add_option("--out", out_path, "output path override");

    auto* c_ingest = app.add_subcommand("ingest", "validate a market CSV and report its shape");
    auto* c_gen = app.add_subcommand("generate-data", "write a synthetic market CSV");
    auto* c_trainf = app.add_subcommand("train-forecaster", "train one per-horizon forecaster");
    c_trainf->add_option("--horizon", horizon_arg, "forecast horizon in hours")->required();
    c_trainf->add_option("--kind", kind_arg, "persistence | ar | neural")->required();
    auto* c_evalf = app.add_subcommand("eval-forecaster", "score a saved forecaster on the test split");
    c_evalf->add_option("--horizon", horizon_arg, "forecast horizon in hours")->required();
    c_evalf->add_option("--kind", kind_arg, "persistence | ar | neural")->required();
    auto* c_dqn = app.add_subcommand("train-dqn", "train and evaluate the DQN agent");
    c_dqn->add_option("--seeds", seeds_count, "run seeds 1..N");
    auto* c_cem = app.add_subcommand("run-cem", "cross-entropy-method benchmark");
    c_cem->add_option("--seeds", seeds_count, "run seeds 1..N");
    auto* c_oracle = app.add_subcommand("run-oracle", "perfect-foresight benchmark");
    c_oracle->add_option("--kind", kind_arg, "mpc-ga | dp")->required();
    auto* c_report = app.add_subcommand("report", "compare finished runs");
    c_report->add_option("dirs", run_dirs, "run directories (first = baseline)")->required();
    auto* c_sweep = app.add_subcommand("sweep", "grid/random hyperparameter search");
    c_sweep->add_option("--cap", cap, "max sampled grid cells (0 = full grid)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_ingest->parsed()) {
            const Config cfg = load_config(config_path);
            const MarketSeries series = load_series(cfg);
            if (!out_path.empty()) write_series_csv(out_path, series);
            std::cout << "records: " << series.size() << "\n"
                      << "span: " << format_iso8601_utc(series.record(0).timestamp) << " .. "
                      << format_iso8601_utc(series.record(series.size() - 1).timestamp) << "\n"
                      << "split: train " << series.train_range().size() << ", validation "
                      << series.validation_range().size() << ", test "
                      << series.test_range().size() << "\n";
        } else if (c_gen->parsed()) {
            Config cfg = load_config(config_path);
            if (seed_arg >= 0) cfg.set("data.seed", std::to_string(seed_arg));
            // synthesize even when the pipeline consumes the result as csv
            if (cfg.get_string("data.kind", "synthetic") == "csv") {
                cfg.set("data.kind", cfg.get_string("generate.kind", "synthetic"));
            }
            const MarketSeries series = load_series(cfg);
            const std::string path =
                !out_path.empty() ? out_path : cfg.get_string("data.path");
            if (const auto dir = fs::path(path).parent_path(); !dir.empty()) {
                fs::create_directories(dir);
            }
            write_series_csv(path, series);
            std::cout << "wrote " << series.size() << " records to " << path << "\n";
        } else if (c_trainf->parsed()) {
            const Config cfg = load_config(config_path);
            const DataBundle data = load_data(cfg);
            const std::uint64_t seed = seed_arg >= 0 ? static_cast<std::uint64_t>(seed_arg)
                                                     : static_cast<std::uint64_t>(
                                                           cfg.get_int("forecaster.seed", 0));
            const Forecaster f =
                train_forecaster_from_config(cfg, data, kind_arg, horizon_arg, seed);
            const auto metrics =
                evaluate_forecaster(f, data.series, data.series.validation_range());
            const std::string dir = !out_path.empty()
                                        ? out_path
                                        : cfg.get_string("forecaster.out", "forecasters");
            fs::create_directories(dir);
            const std::string file = forecaster_file(dir, kind_arg, horizon_arg);
            std::ofstream out(file);
            f.save(out);
            upsert_forecaster_metrics(
                (fs::path(dir) / "metrics.csv").string(),
                {horizon_arg, kind_arg, metrics.rmse, metrics.mae, metrics.mape,
                 f.param_count()});
            std::cout << "horizon " << horizon_arg << " " << kind_arg << ": validation rmse "
                      << fmt_double(metrics.rmse) << ", mae " << fmt_double(metrics.mae)
                      << ", mape " << fmt_double(metrics.mape * 100.0) << "% ("
                      << metrics.mape_excluded << " excluded) -> " << file << "\n";
        } else if (c_evalf->parsed()) {
            const Config cfg = load_config(config_path);
            const DataBundle data = load_data(cfg);
            const std::string dir = !out_path.empty()
                                        ? out_path
                                        : cfg.get_string("forecaster.out", "forecasters");
            const std::string file = forecaster_file(dir, kind_arg, horizon_arg);
            std::ifstream in(file);
            if (!in) throw std::runtime_error("missing forecaster checkpoint '" + file + "'");
            const Forecaster f = Forecaster::load(in);
            const auto metrics = evaluate_forecaster(f, data.series, data.series.test_range());
            upsert_forecaster_metrics(
                (fs::path(dir) / "test_metrics.csv").string(),
                {horizon_arg, kind_arg, metrics.rmse, metrics.mae, metrics.mape,
                 f.param_count()});
            std::cout << "horizon " << horizon_arg << " " << kind_arg << ": test rmse "
                      << fmt_double(metrics.rmse) << ", mae " << fmt_double(metrics.mae)
                      << ", mape " << fmt_double(metrics.mape * 100.0) << "% ("
                      << metrics.mape_excluded << " excluded)\n";
        } else if (c_dqn->parsed() || c_cem->parsed() || c_oracle->parsed()) {
            const Config cfg = load_config(config_path);
            ExperimentSpec spec = ExperimentSpec::from_config(cfg);
            if (c_dqn->parsed()) spec.kind = AgentKind::dqn;
            if (c_cem->parsed()) spec.kind = AgentKind::cem;
            if (c_oracle->parsed()) spec.kind = agent_kind_from_string(kind_arg);
            spec.config.set("experiment.agent", to_string(spec.kind));
            if (!out_path.empty()) {
                spec.out_dir = out_path;
                spec.config.set("experiment.out", out_path);
            }
            apply_seed_override(spec, seeds_count, seed_arg);
            const RunSummary summary = run_experiment(spec);
            print_summary(summary);
            if (c_oracle->parsed()) {
                // Table-2 style summary row
                std::cout << summary.kind << "," << fmt_double(summary.mean_reward) << ","
                          << fmt_double(summary.compute_seconds) << "\n";
            }
        } else if (c_report->parsed()) {
            const std::string csv = out_path.empty() ? "report.csv" : out_path;
            const Report report = compare_report(run_dirs, csv);
            std::cout << report.text;
            std::cout << "wrote " << csv << "\n";
        } else if (c_sweep->parsed()) {
            const Config cfg = load_config(config_path);
            const std::size_t sweep_cap =
                cap > 0 ? cap : static_cast<std::size_t>(cfg.get_int("sweep.cap", 0));
            const std::uint64_t seed =
                seed_arg >= 0 ? static_cast<std::uint64_t>(seed_arg)
                              : static_cast<std::uint64_t>(cfg.get_int("sweep.seed", 0));
            const SweepResult result = hyperparameter_sweep(cfg, sweep_cap, seed);
            const std::string csv = out_path.empty() ? "sweep.csv" : out_path;
            {
                CsvWriter w(csv);
                w.row({"cell", "overrides", "metric"});
                for (std::size_t i = 0; i < result.cells.size(); ++i) {
                    std::string overrides;
                    for (const auto& [k, v] : result.cells[i].overrides) {
                        if (!overrides.empty()) overrides += ';';
                        overrides += k + "=" + v;
                    }
                    w.row({std::to_string(i), overrides, fmt_double(result.cells[i].metric)});
                }
            }
            std::cout << "evaluated " << result.cells.size() << " cells; best metric "
                      << fmt_double(result.best_metric) << " at cell " << result.best_index
                      << ":\n";
            for (const auto& [k, v] : result.cells[result.best_index].overrides) {
                std::cout << "  " << k << " = " << v << "\n";
            }
            std::cout << "wrote " << csv << "\n";
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
