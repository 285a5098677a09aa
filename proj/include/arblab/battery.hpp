#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arblab/config.hpp"
#include "arblab/csv.hpp"
#include "arblab/market_data.hpp"
#include "arblab/time_util.hpp"

namespace arblab {

/// Physical constants of the grid-connected battery. Defaults are the
/// 10 MWh lithium-ion case study values.
struct BatteryParams {
    double capacity_mwh = 10.0;
    double soc_min = 0.2;
    double soc_max = 0.8;
    double p_min_mw = -2.5;  // charge limit (negative power = charging)
    double p_max_mw = 2.5;   // discharge limit
    double eta_charge = 0.92;
    double eta_discharge = 1.0 / 0.92;
    double self_discharge = 0.0;  // fraction per step
    double peukert_exponent = 1.14;
    double cycles_to_failure = 6000.0;
    double invest_cost_per_mwh = 300000.0;
    double dt_hours = 1.0;

    double total_investment() const { return invest_cost_per_mwh * capacity_mwh; }

    void validate() const {
        if (!(capacity_mwh > 0.0)) throw std::invalid_argument("capacity must be > 0");
        if (!(soc_min >= 0.0 && soc_min < soc_max && soc_max <= 1.0)) {
            throw std::invalid_argument("require 0 <= soc_min < soc_max <= 1");
        }
        if (!(p_min_mw < 0.0 && p_max_mw > 0.0)) {
            throw std::invalid_argument("require p_min < 0 < p_max");
        }
        if (!(eta_charge > 0.0 && eta_charge <= 1.0)) {
            throw std::invalid_argument("eta_charge must be in (0, 1]");
        }
        if (!(eta_discharge >= 1.0)) throw std::invalid_argument("eta_discharge must be >= 1");
        if (!(dt_hours > 0.0)) throw std::invalid_argument("dt must be > 0");
        if (!(self_discharge >= 0.0 && self_discharge < 1.0)) {
            throw std::invalid_argument("self_discharge must be in [0, 1)");
        }
    }

    static BatteryParams from_config(const Config& cfg) {
        BatteryParams p;
        p.capacity_mwh = cfg.get_double("battery.capacity_mwh", p.capacity_mwh);
        p.soc_min = cfg.get_double("battery.soc_min", p.soc_min);
        p.soc_max = cfg.get_double("battery.soc_max", p.soc_max);
        p.p_min_mw = cfg.get_double("battery.p_min_mw", p.p_min_mw);
        p.p_max_mw = cfg.get_double("battery.p_max_mw", p.p_max_mw);
        p.eta_charge = cfg.get_double("battery.eta_charge", p.eta_charge);
        p.eta_discharge = cfg.get_double("battery.eta_discharge", p.eta_discharge);
        p.self_discharge = cfg.get_double("battery.self_discharge", p.self_discharge);
        p.peukert_exponent = cfg.get_double("battery.peukert_exponent", p.peukert_exponent);
        p.cycles_to_failure = cfg.get_double("battery.cycles_to_failure", p.cycles_to_failure);
        p.invest_cost_per_mwh =
            cfg.get_double("battery.invest_cost_per_mwh", p.invest_cost_per_mwh);
        p.dt_hours = cfg.get_double("battery.dt_hours", p.dt_hours);
        p.validate();
        return p;
    }
};

struct BatteryState {
    double soc = 0.5;
    std::size_t step_index = 0;
};

struct EnvObservation {
    double soc = 0.0;
    double current_price = 0.0;
    std::vector<double> forecasts;  // filled by the forecast wrapper
};

struct StepOutcome {
    EnvObservation observation;
    double reward = 0.0;
    double corrected_action = 0.0;
    double grid_revenue = 0.0;
    double degradation_cost = 0.0;
    bool done = false;
};

// corrected actions smaller than this count as idle
inline constexpr double kActivityEpsilonMw = 1e-9;

/// Safety layer: corrects the requested power so that the SOC update stays
/// inside [soc_min, soc_max]. The energy-headroom terms divide by the
/// respective efficiency so the corrected action is feasible under the SOC
/// dynamics.
inline double clamp_action(double action, double soc, const BatteryParams& p) {
    const double soc_eff = soc * (1.0 - p.self_discharge);
    if (action >= 0.0) {
        const double headroom =
            (soc_eff - p.soc_min) * p.capacity_mwh / (p.eta_discharge * p.dt_hours);
        return std::min({action, p.p_max_mw, headroom});
    }
    const double headroom = (soc_eff - p.soc_max) * p.capacity_mwh / (p.eta_charge * p.dt_hours);
    return std::max({action, p.p_min_mw, headroom});
}

struct TransitionResult {
    double corrected_action = 0.0;
    double new_soc = 0.0;
    double grid_revenue = 0.0;
    double degradation_cost = 0.0;
    double reward = 0.0;
};

inline double depth_of_discharge_term(double soc, double kp) { return std::pow(1.0 - soc, kp); }

/// One step of the battery dynamics: clamp, SOC update, grid revenue and
/// depth-of-discharge degradation cost. Shared by the environment, the
/// oracle rollouts and the test oracles.
inline TransitionResult apply_action(double soc, double price, double action,
                                     const BatteryParams& p) {
    TransitionResult r;
    r.corrected_action = clamp_action(action, soc, p);
    const double eta = r.corrected_action > 0.0
                           ? p.eta_discharge
                           : (r.corrected_action < 0.0 ? p.eta_charge : 1.0);
    double new_soc =
        soc * (1.0 - p.self_discharge) - eta * r.corrected_action * p.dt_hours / p.capacity_mwh;
    // absorb float round-off when the clamp lands exactly on a bound
    if (new_soc > p.soc_max && new_soc - p.soc_max < 1e-9) new_soc = p.soc_max;
    if (new_soc < p.soc_min && p.soc_min - new_soc < 1e-9) new_soc = p.soc_min;
    r.new_soc = new_soc;
    r.grid_revenue = price * r.corrected_action * p.dt_hours;
    r.degradation_cost = std::abs(depth_of_discharge_term(new_soc, p.peukert_exponent) -
                                  depth_of_discharge_term(soc, p.peukert_exponent)) /
                         (2.0 * p.cycles_to_failure) * p.total_investment();
    r.reward = r.grid_revenue - r.degradation_cost;
    return r;
}

/// The three-action table for value-based agents: maximum charge, idle,
/// maximum discharge.
inline std::array<double, 3> discretize_actions(const BatteryParams& p) {
    return {p.p_min_mw, 0.0, p.p_max_mw};
}

/// Sum of discounted rewards, gamma^k * r_k.
inline double episode_return(std::span<const double> rewards, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("gamma must be in [0, 1]");
    }
    double total = 0.0, w = 1.0;
    for (double r : rewards) {
        total += w * r;
        w *= gamma;
    }
    return total;
}

/// Episodic battery dispatch environment over a fixed hourly price
/// segment. One step per record; the episode ends after the last record.
class BatteryEnv {
  public:
    BatteryEnv(std::vector<MarketRecord> segment, const BatteryParams& params,
               double initial_soc = 0.5)
        : records_(std::move(segment)), params_(params), initial_soc_(initial_soc) {
        params_.validate();
        if (records_.empty()) {
            throw std::invalid_argument("environment needs a non-empty price segment");
        }
        check_initial_soc(initial_soc_);
        reset();
    }

    BatteryEnv(const MarketSeries& series, IndexRange range, const BatteryParams& params,
               double initial_soc = 0.5)
        : BatteryEnv(slice(series, range), params, initial_soc) {}

    EnvObservation reset() { return reset(initial_soc_); }

    EnvObservation reset(double initial_soc) {
        check_initial_soc(initial_soc);
        state_ = {initial_soc, 0};
        done_ = false;
        return observation();
    }

    StepOutcome step(double action_mw) {
        if (done_) {
            throw std::runtime_error("step() called on a finished episode; call reset()");
        }
        const std::size_t t = state_.step_index;
        const TransitionResult tr = apply_action(state_.soc, records_[t].price, action_mw, params_);
        state_.soc = tr.new_soc;
        state_.step_index = t + 1;
        done_ = state_.step_index >= records_.size();
        StepOutcome out;
        out.observation = observation();
        out.reward = tr.reward;
        out.corrected_action = tr.corrected_action;
        out.grid_revenue = tr.grid_revenue;
        out.degradation_cost = tr.degradation_cost;
        out.done = done_;
        return out;
    }

    bool done() const { return done_; }
    const BatteryState& state() const { return state_; }
    const BatteryParams& params() const { return params_; }
    std::size_t length() const { return records_.size(); }
    double initial_soc() const { return initial_soc_; }
    const MarketRecord& record(std::size_t i) const { return records_.at(i); }
    const std::vector<MarketRecord>& records() const { return records_; }

    /// Price visible at the current step (the last price once finished).
    double current_price() const {
        const std::size_t i = std::min(state_.step_index, records_.size() - 1);
        return records_[i].price;
    }

  private:
    static std::vector<MarketRecord> slice(const MarketSeries& series, IndexRange range) {
        if (range.end > series.size() || range.begin >= range.end) {
            throw std::invalid_argument("invalid series range for environment");
        }
        return {series.records().begin() + static_cast<std::ptrdiff_t>(range.begin),
                series.records().begin() + static_cast<std::ptrdiff_t>(range.end)};
    }

    void check_initial_soc(double soc) const {
        if (!(soc >= params_.soc_min && soc <= params_.soc_max)) {
            throw std::invalid_argument("initial_soc " + std::to_string(soc) +
                                        " outside [soc_min, soc_max]");
        }
    }

    EnvObservation observation() const {
        EnvObservation obs;
        obs.soc = state_.soc;
        obs.current_price = current_price();
        return obs;
    }

    std::vector<MarketRecord> records_;
    BatteryParams params_;
    double initial_soc_;
    BatteryState state_{};
    bool done_ = false;
};

// ---------------------------------------------------------------------------
// Episode traces

struct TraceRow {
    std::size_t step = 0;
    std::int64_t timestamp = 0;
    double price = 0.0;
    double action = 0.0;
    double corrected_action = 0.0;
    double soc = 0.0;
    double grid_revenue = 0.0;
    double degradation = 0.0;
    double reward = 0.0;
};

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
    CsvWriter w(path);
    w.row({"step", "timestamp", "price", "action", "corrected_action", "soc", "grid_revenue",
           "degradation", "reward"});
    for (const auto& r : rows) {
        w.row({std::to_string(r.step), format_iso8601_utc(r.timestamp), fmt_double(r.price),
               fmt_double(r.action), fmt_double(r.corrected_action), fmt_double(r.soc),
               fmt_double(r.grid_revenue), fmt_double(r.degradation), fmt_double(r.reward)});
    }
}

inline std::vector<TraceRow> read_trace_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    std::vector<TraceRow> rows;
    rows.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        if (r.size() != 9) {
            throw std::runtime_error(path + ": trace row needs 9 fields");
        }
        TraceRow row;
        row.step = static_cast<std::size_t>(parse_int(r[0]));
        row.timestamp = parse_iso8601_utc(r[1]);
        row.price = parse_double(r[2]);
        row.action = parse_double(r[3]);
        row.corrected_action = parse_double(r[4]);
        row.soc = parse_double(r[5]);
        row.grid_revenue = parse_double(r[6]);
        row.degradation = parse_double(r[7]);
        row.reward = parse_double(r[8]);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace arblab
