#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arblab/battery.hpp"
#include "arblab/forecasting.hpp"
#include "arblab/market_data.hpp"

namespace arblab {

enum class WrapperMode { none, predicted, perfect };

inline std::string to_string(WrapperMode m) {
    switch (m) {
        case WrapperMode::none: return "none";
        case WrapperMode::predicted: return "predicted";
        case WrapperMode::perfect: return "perfect";
    }
    throw std::invalid_argument("unknown wrapper mode");
}

inline WrapperMode wrapper_mode_from_string(const std::string& s) {
    if (s == "none") return WrapperMode::none;
    if (s == "predicted") return WrapperMode::predicted;
    if (s == "perfect") return WrapperMode::perfect;
    throw std::invalid_argument("unknown wrapper mode '" + s + "'");
}

struct WrapperConfig {
    WrapperMode mode = WrapperMode::none;
    std::vector<int> horizons;                // ordered; appended in this order
    std::map<int, Forecaster> forecasters;    // required iff mode == predicted
    std::size_t window_size = 24;             // history kept for forecaster inputs

    void validate() const {
        if (mode == WrapperMode::none) return;
        if (horizons.empty()) {
            throw std::invalid_argument("wrapper horizons must be non-empty unless mode=none");
        }
        for (int h : horizons) {
            if (!is_valid_horizon(h)) {
                throw std::invalid_argument("wrapper horizon " + std::to_string(h) +
                                            " not in {1,2,3,6,12,18,24}");
            }
            if (mode == WrapperMode::predicted) {
                auto it = forecasters.find(h);
                if (it == forecasters.end()) {
                    throw std::invalid_argument("no forecaster configured for horizon " +
                                                std::to_string(h));
                }
                if (it->second.horizon != h) {
                    throw std::invalid_argument("forecaster for horizon " + std::to_string(h) +
                                                " was trained for horizon " +
                                                std::to_string(it->second.horizon));
                }
            }
        }
    }
};

struct WarmupHistory {
    std::vector<MarketRecord> records;
    bool padded = false;  // true when pre-episode data was missing
};

/// History prefill for the first window_size hours: takes the records
/// right before the episode when available, otherwise pads by repeating
/// the episode's first record.
inline WarmupHistory build_warmup(const MarketSeries& series, std::size_t episode_begin,
                                  std::size_t window_size) {
    WarmupHistory wh;
    const std::size_t available = std::min(episode_begin, window_size);
    const std::size_t missing = window_size - available;
    if (missing > 0) {
        wh.padded = true;
        wh.records.assign(missing, series.record(episode_begin));
        // padded copies sit on the hourly grid before the episode
        for (std::size_t i = 0; i < missing; ++i) {
            wh.records[i].timestamp = series.record(episode_begin).timestamp -
                                      static_cast<std::int64_t>(window_size - i) * kSecondsPerHour;
        }
    }
    for (std::size_t i = episode_begin - available; i < episode_begin; ++i) {
        wh.records.push_back(series.record(i));
    }
    return wh;
}

/// Sits between the battery environment and an agent: tracks the rolling
/// record history, queries frozen forecasters (or reads ground-truth
/// future prices in perfect mode) and appends the predictions to the
/// observation vector.
///
/// Observation layout: [soc, current_price, forecast_1, ...], all in raw
/// units; agents apply their own state scaling.
class ForecastWrapper {
  public:
    ForecastWrapper(const MarketSeries& series, IndexRange episode, const BatteryParams& params,
                    const WrapperConfig& config, double initial_soc = 0.5)
        : env_(series, episode, params, initial_soc), config_(config) {
        config_.validate();
        const WarmupHistory wh = build_warmup(series, episode.begin, config_.window_size);
        warmup_ = wh.records;
        padded_warmup_ = wh.padded;
        reset();
    }

    std::size_t obs_width() const {
        return config_.mode == WrapperMode::none ? 2 : 2 + config_.horizons.size();
    }

    std::vector<double> reset() {
        const EnvObservation obs = env_.reset();
        history_ = warmup_;
        history_.push_back(env_.record(0));
        return wrap(obs);
    }

    struct WrapStep {
        std::vector<double> obs;
        double reward = 0.0;
        bool done = false;
        StepOutcome raw;
    };

    WrapStep step(double action_mw) {
        const StepOutcome out = env_.step(action_mw);
        if (!out.done) {
            history_.push_back(env_.record(env_.state().step_index));
        }
        WrapStep ws;
        ws.obs = wrap(out.observation);
        ws.reward = out.reward;
        ws.done = out.done;
        ws.raw = out;
        return ws;
    }

    bool done() const { return env_.done(); }
    std::size_t length() const { return env_.length(); }
    const BatteryEnv& env() const { return env_; }
    const WrapperConfig& config() const { return config_; }
    bool padded_warmup() const { return padded_warmup_; }

  private:
    std::vector<double> wrap(const EnvObservation& base) const {
        std::vector<double> obs;
        obs.reserve(obs_width());
        obs.push_back(base.soc);
        obs.push_back(base.current_price);
        if (config_.mode == WrapperMode::none) return obs;
        const std::size_t t = std::min(env_.state().step_index, env_.length() - 1);
        for (int h : config_.horizons) {
            if (config_.mode == WrapperMode::perfect) {
                // episode-end shortfall repeats the last known price
                const std::size_t idx =
                    std::min(t + static_cast<std::size_t>(h), env_.length() - 1);
                obs.push_back(env_.record(idx).price);
            } else {
                obs.push_back(config_.forecasters.at(h).predict(history_));
            }
        }
        return obs;
    }

    BatteryEnv env_;
    WrapperConfig config_;
    std::vector<MarketRecord> warmup_;
    std::vector<MarketRecord> history_;  // warmup + records seen so far
    bool padded_warmup_ = false;
};

}  // namespace arblab
