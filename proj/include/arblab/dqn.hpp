#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "arblab/battery.hpp"
#include "arblab/config.hpp"
#include "arblab/dense_net.hpp"
#include "arblab/forecast_wrapper.hpp"
#include "arblab/market_data.hpp"

namespace arblab {

struct Transition {
    std::vector<double> state;
    int action = 0;  // index into the 3-action table
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Fixed-capacity ring buffer; once full, the oldest transitions are
/// overwritten.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity < 1) throw std::invalid_argument("replay capacity must be >= 1");
        storage_.reserve(std::min<std::size_t>(capacity, 1 << 20));
    }

    void push(Transition t) {
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[cursor_] = std::move(t);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return storage_.at(i); }

    /// k distinct indices, uniform without replacement (Floyd's algorithm).
    std::vector<std::size_t> sample_indices(std::size_t k, std::mt19937_64& rng) const {
        if (k > storage_.size()) {
            throw std::invalid_argument("cannot sample more transitions than stored");
        }
        std::unordered_set<std::size_t> chosen;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t j = storage_.size() - k; j < storage_.size(); ++j) {
            std::uniform_int_distribution<std::size_t> dist(0, j);
            std::size_t t = dist(rng);
            if (chosen.count(t)) t = j;
            chosen.insert(t);
            out.push_back(t);
        }
        return out;
    }

  private:
    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t cursor_ = 0;
};

/// Linear epsilon decay from start to end over decay_steps, then flat.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    std::size_t decay_steps = 1;

    double at(std::size_t step) const {
        if (!(start >= 0.0 && start <= 1.0 && end >= 0.0 && end <= 1.0)) {
            throw std::invalid_argument("epsilon must stay in [0, 1]");
        }
        if (decay_steps == 0 || step >= decay_steps) return end;
        const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
        return start + (end - start) * frac;
    }
};

struct DqnConfig {
    double gamma = 0.99;
    double learning_rate = 1e-3;
    std::size_t buffer_capacity = 100000;
    std::size_t batch_size = 64;
    std::size_t sync_interval = 1000;
    std::size_t train_freq = 1;
    std::vector<std::size_t> hidden = {64};
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.2;  // of total training steps
    double reward_scale = 0.01;       // rewards are CAD; keep Q-targets near unity
    double td_clip = 0.0;             // TD-error clip (Huber-style); 0 disables
    Activation hidden_activation = Activation::relu;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0,1]");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (sync_interval < 1) throw std::invalid_argument("sync_interval must be >= 1");
        if (train_freq < 1) throw std::invalid_argument("train_freq must be >= 1");
        if (!(reward_scale > 0.0)) throw std::invalid_argument("reward_scale must be > 0");
    }

    static DqnConfig from_config(const Config& cfg) {
        DqnConfig c;
        c.gamma = cfg.get_double("dqn.gamma", c.gamma);
        c.learning_rate = cfg.get_double("dqn.learning_rate", c.learning_rate);
        c.buffer_capacity =
            static_cast<std::size_t>(cfg.get_int("dqn.buffer_capacity", (std::int64_t)c.buffer_capacity));
        c.batch_size = static_cast<std::size_t>(cfg.get_int("dqn.batch_size", (std::int64_t)c.batch_size));
        c.sync_interval =
            static_cast<std::size_t>(cfg.get_int("dqn.sync_interval", (std::int64_t)c.sync_interval));
        c.train_freq = static_cast<std::size_t>(cfg.get_int("dqn.train_freq", (std::int64_t)c.train_freq));
        if (cfg.has("dqn.hidden")) {
            c.hidden.clear();
            for (auto v : cfg.get_int_list("dqn.hidden")) {
                c.hidden.push_back(static_cast<std::size_t>(v));
            }
        }
        c.eps_start = cfg.get_double("dqn.eps_start", c.eps_start);
        c.eps_end = cfg.get_double("dqn.eps_end", c.eps_end);
        c.eps_decay_fraction = cfg.get_double("dqn.eps_decay_fraction", c.eps_decay_fraction);
        c.reward_scale = cfg.get_double("dqn.reward_scale", c.reward_scale);
        c.td_clip = cfg.get_double("dqn.td_clip", c.td_clip);
        c.hidden_activation =
            activation_from_string(cfg.get_string("dqn.hidden_activation", "relu"));
        c.validate();
        return c;
    }
};

/// DQN agent over the three-action table. Observation vectors arrive in
/// raw units; SOC passes through unscaled while price-like entries are
/// min-max scaled with the training-split price scaler.
class DqnAgent {
  public:
    DqnAgent(std::size_t obs_width, const std::array<double, 3>& action_table,
             const DqnConfig& config, const ScalerParams& price_scaler)
        : config_(config),
          action_table_(action_table),
          scaler_(price_scaler),
          buffer_(config.buffer_capacity) {
        config_.validate();
        std::vector<std::size_t> widths;
        widths.push_back(obs_width);
        for (auto h : config_.hidden) widths.push_back(h);
        widths.push_back(action_table_.size());
        std::vector<Activation> acts(widths.size() - 1, config_.hidden_activation);
        acts.back() = Activation::identity;
        q_net_ = DenseNet::init(widths, acts, config_.seed);
        target_net_ = q_net_;
        adam_.lr = config_.learning_rate;
    }

    /// Raw observation -> network input: SOC as-is, prices scaled.
    std::vector<double> to_input(std::span<const double> obs) const {
        std::vector<double> x(obs.size());
        if (obs.empty()) throw std::invalid_argument("empty observation");
        x[0] = obs[0];
        for (std::size_t i = 1; i < obs.size(); ++i) x[i] = scaler_.transform_price(obs[i]);
        return x;
    }

    int greedy_action(std::span<const double> input) const {
        const auto q = q_net_.forward(input);
        // ties break to the lowest index
        int best = 0;
        for (int a = 1; a < static_cast<int>(q.size()); ++a) {
            if (q[a] > q[best]) best = a;
        }
        return best;
    }

    int select_action(std::span<const double> input, double eps, std::mt19937_64& rng) const {
        if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must be in [0,1]");
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (unit(rng) < eps) {
            std::uniform_int_distribution<int> pick(0, static_cast<int>(action_table_.size()) - 1);
            return pick(rng);
        }
        return greedy_action(input);
    }

    void push_transition(Transition t) { buffer_.push(std::move(t)); }

    /// Bootstrap targets r + gamma * max_a' Q(s', a'; theta-) from the
    /// target network; terminal transitions use r alone.
    std::vector<double> bellman_targets(std::span<const std::size_t> indices) const {
        std::vector<double> targets;
        targets.reserve(indices.size());
        for (std::size_t idx : indices) {
            const Transition& t = buffer_.at(idx);
            double y = t.reward;
            if (!t.done) {
                const auto q_next = target_net_.forward(t.next_state);
                y += config_.gamma * *std::max_element(q_next.begin(), q_next.end());
            }
            targets.push_back(y);
        }
        return targets;
    }

    /// One uniform-batch update of the Q-network (target net untouched).
    /// Returns the batch loss, or nullopt while the buffer is underfilled.
    std::optional<double> train_step(std::mt19937_64& rng) {
        if (buffer_.size() < config_.batch_size) return std::nullopt;
        const auto indices = buffer_.sample_indices(config_.batch_size, rng);
        const auto targets = bellman_targets(indices);
        std::vector<std::vector<double>> inputs, target_rows;
        inputs.reserve(indices.size());
        target_rows.reserve(indices.size());
        double loss = 0.0;
        for (std::size_t k = 0; k < indices.size(); ++k) {
            const Transition& t = buffer_.at(indices[k]);
            auto q = q_net_.forward(t.state);
            double delta = q[static_cast<std::size_t>(t.action)] - targets[k];
            loss += delta * delta;
            // Huber-style error clip: large TD errors get a bounded gradient
            if (config_.td_clip > 0.0) {
                delta = std::clamp(delta, -config_.td_clip, config_.td_clip);
            }
            // error only at the taken action
            q[static_cast<std::size_t>(t.action)] -= delta;
            inputs.push_back(t.state);
            target_rows.push_back(std::move(q));
        }
        const auto back = backward_mse(q_net_, inputs, target_rows);
        adam_.step(q_net_, back.grad);
        return loss / static_cast<double>(indices.size());
    }

    void sync_target() { target_net_ = q_net_; }

    const DenseNet& q_net() const { return q_net_; }
    DenseNet& q_net() { return q_net_; }
    const DenseNet& target_net() const { return target_net_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const DqnConfig& config() const { return config_; }
    const std::array<double, 3>& action_table() const { return action_table_; }
    double action_value(int index) const { return action_table_.at(index); }
    const ScalerParams& scaler() const { return scaler_; }

  private:
    DqnConfig config_;
    std::array<double, 3> action_table_;
    ScalerParams scaler_;
    ReplayBuffer buffer_;
    DenseNet q_net_, target_net_;
    AdamOptimizer adam_;
};

// ---------------------------------------------------------------------------
// Training and evaluation loops

struct DqnTrainResult {
    DqnAgent agent;
    std::vector<double> episode_rewards;  // accumulated undiscounted reward per episode
};

/// Trains for `episodes` full episodes on the wrapped environment.
/// Epsilon advances per global step; the target network syncs every
/// sync_interval steps.
inline DqnTrainResult train_dqn(ForecastWrapper& env, const std::array<double, 3>& action_table,
                                DqnConfig config, std::size_t episodes,
                                const ScalerParams& price_scaler, std::uint64_t seed) {
    if (episodes < 1) throw std::invalid_argument("need at least one episode");
    config.seed = seed;
    DqnAgent agent(env.obs_width(), action_table, config, price_scaler);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    const std::size_t total_steps = episodes * env.length();
    EpsilonSchedule schedule{config.eps_start, config.eps_end,
                             std::max<std::size_t>(
                                 1, static_cast<std::size_t>(config.eps_decay_fraction *
                                                             static_cast<double>(total_steps)))};
    std::vector<double> history;
    history.reserve(episodes);
    std::size_t global_step = 0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        auto obs = env.reset();
        auto state = agent.to_input(obs);
        double total = 0.0;
        while (!env.done()) {
            const double eps = schedule.at(global_step);
            const int action = agent.select_action(state, eps, rng);
            const auto out = env.step(agent.action_value(action));
            auto next_state = agent.to_input(out.obs);
            agent.push_transition(
                {state, action, out.reward * config.reward_scale, next_state, out.done});
            state = std::move(next_state);
            total += out.reward;
            ++global_step;
            if (global_step % config.train_freq == 0) {
                agent.train_step(rng);
            }
            if (global_step % config.sync_interval == 0) {
                agent.sync_target();
            }
        }
        history.push_back(total);
    }
    return {std::move(agent), std::move(history)};
}

struct PolicyEvalResult {
    double total_reward = 0.0;
    std::size_t activity_count = 0;  // steps with |corrected action| > epsilon
    std::vector<TraceRow> trace;
};

/// Greedy rollout of any observation -> action-index policy over one
/// episode, with the full trace.
template <typename Policy>
PolicyEvalResult rollout_policy(Policy&& policy, ForecastWrapper& env,
                                const std::array<double, 3>& action_table) {
    PolicyEvalResult result;
    auto obs = env.reset();
    std::size_t step = 0;
    while (!env.done()) {
        const int action = policy(obs);
        const auto& rec = env.env().record(step);
        const auto out = env.step(action_table.at(static_cast<std::size_t>(action)));
        TraceRow row;
        row.step = step;
        row.timestamp = rec.timestamp;
        row.price = rec.price;
        row.action = action_table.at(static_cast<std::size_t>(action));
        row.corrected_action = out.raw.corrected_action;
        row.soc = out.raw.observation.soc;
        row.grid_revenue = out.raw.grid_revenue;
        row.degradation = out.raw.degradation_cost;
        row.reward = out.reward;
        result.trace.push_back(row);
        result.total_reward += out.reward;
        if (std::abs(out.raw.corrected_action) > kActivityEpsilonMw) ++result.activity_count;
        obs = out.obs;
        ++step;
    }
    return result;
}

/// Greedy (eps = 0) evaluation of a trained agent; read-only.
inline PolicyEvalResult evaluate_policy(const DqnAgent& agent, ForecastWrapper& env) {
    return rollout_policy(
        [&agent](const std::vector<double>& obs) { return agent.greedy_action(agent.to_input(obs)); },
        env, agent.action_table());
}

}  // namespace arblab
