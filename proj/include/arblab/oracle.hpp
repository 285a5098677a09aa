#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "arblab/battery.hpp"
#include "arblab/config.hpp"
#include "arblab/market_data.hpp"

namespace arblab {

// ---------------------------------------------------------------------------
// Receding-horizon genetic algorithm (the perfect-foresight benchmark)

struct GaConfig {
    std::size_t horizon = 24;
    std::size_t population = 50;
    std::size_t generations = 100;
    double crossover_rate = 0.9;
    double mutation_rate = 0.3;   // per-gene probability
    double mutation_std = 0.5;    // MW
    std::size_t tournament = 3;
    std::size_t elitism = 2;
    std::uint64_t seed = 0;
    bool discrete = false;  // restrict genes to the 3-action table

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
        if (population < 2) throw std::invalid_argument("population must be >= 2");
        if (elitism >= population) throw std::invalid_argument("elitism must be < population");
        if (tournament < 1 || tournament > population) {
            throw std::invalid_argument("tournament size must be in [1, population]");
        }
    }

    static GaConfig from_config(const Config& cfg) {
        GaConfig g;
        g.horizon = static_cast<std::size_t>(cfg.get_int("ga.horizon", (std::int64_t)g.horizon));
        g.population = static_cast<std::size_t>(cfg.get_int("ga.population", (std::int64_t)g.population));
        g.generations =
            static_cast<std::size_t>(cfg.get_int("ga.generations", (std::int64_t)g.generations));
        g.crossover_rate = cfg.get_double("ga.crossover_rate", g.crossover_rate);
        g.mutation_rate = cfg.get_double("ga.mutation_rate", g.mutation_rate);
        g.mutation_std = cfg.get_double("ga.mutation_std", g.mutation_std);
        g.tournament = static_cast<std::size_t>(cfg.get_int("ga.tournament", (std::int64_t)g.tournament));
        g.elitism = static_cast<std::size_t>(cfg.get_int("ga.elitism", (std::int64_t)g.elitism));
        g.discrete = cfg.get_bool("ga.discrete", g.discrete);
        g.validate();
        return g;
    }
};

namespace ga {

/// Best of k distinct population members (sampling without replacement,
/// so k = population always returns the global best).
inline std::size_t tournament_select(std::span<const double> fitness, std::size_t k,
                                     std::mt19937_64& rng) {
    const std::size_t n = fitness.size();
    if (k < 1 || k > n) throw std::invalid_argument("tournament size out of range");
    std::size_t best = n;  // sentinel
    std::vector<std::uint8_t> chosen(n, 0);
    for (std::size_t j = n - k; j < n; ++j) {
        std::uniform_int_distribution<std::size_t> dist(0, j);
        std::size_t t = dist(rng);
        if (chosen[t]) t = j;
        chosen[t] = 1;
        if (best == n || fitness[t] > fitness[best]) best = t;
    }
    return best;
}

/// Head of `a` up to a uniform cut, tail of `b` after it.
inline std::vector<double> one_point_crossover(std::span<const double> a,
                                               std::span<const double> b, std::mt19937_64& rng) {
    if (a.size() != b.size()) throw std::invalid_argument("crossover parents differ in length");
    std::vector<double> child(a.begin(), a.end());
    if (a.size() < 2) return child;
    std::uniform_int_distribution<std::size_t> cut_dist(1, a.size() - 1);
    const std::size_t cut = cut_dist(rng);
    for (std::size_t i = cut; i < a.size(); ++i) child[i] = b[i];
    return child;
}

/// Adds N(0, mutation_std) per gene with probability mutation_rate, then
/// clips to [p_min, p_max].
inline void gaussian_mutate(std::vector<double>& genes, const GaConfig& cfg, double p_min,
                            double p_max, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, cfg.mutation_std);
    for (auto& g : genes) {
        if (unit(rng) < cfg.mutation_rate) {
            if (cfg.mutation_std > 0.0) g += noise(rng);
            g = std::clamp(g, p_min, p_max);
        }
    }
}

/// Discrete-mode mutation: resample the gene uniformly from the table.
inline void discrete_mutate(std::vector<double>& genes, const GaConfig& cfg,
                            const std::array<double, 3>& table, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, table.size() - 1);
    for (auto& g : genes) {
        if (unit(rng) < cfg.mutation_rate) g = table[pick(rng)];
    }
}

}  // namespace ga

struct DispatchResult {
    std::vector<double> schedule;  // executed (corrected) actions, one per step
    double total_reward = 0.0;
    std::vector<TraceRow> trace;
};

namespace detail {

inline double rollout_reward(double soc, std::span<const MarketRecord> prices,
                             std::span<const double> actions, const BatteryParams& params) {
    double total = 0.0;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const TransitionResult tr = apply_action(soc, prices[i].price, actions[i], params);
        soc = tr.new_soc;
        total += tr.reward;
    }
    return total;
}

inline double snap_to_table(double g, const std::array<double, 3>& table) {
    double best = table[0];
    for (double t : table) {
        if (std::abs(g - t) < std::abs(g - best)) best = t;
    }
    return best;
}

}  // namespace detail

/// Receding-horizon dispatch with perfect price foresight: at each step a
/// GA optimizes the next `horizon` actions against the true dynamics, the
/// first action executes, and the window shifts by one hour. Each MPC step
/// warm-starts from the previous best sequence; the initial population
/// also carries the all-idle sequence and, in discrete mode, the three
/// constant pure-action sequences.
inline DispatchResult mpc_ga_dispatch(std::span<const MarketRecord> segment,
                                      const BatteryParams& params, const GaConfig& cfg,
                                      double initial_soc = 0.5) {
    cfg.validate();
    params.validate();
    if (segment.empty()) throw std::invalid_argument("empty price segment");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> gene_dist(params.p_min_mw, params.p_max_mw);
    const std::array<double, 3> table = discretize_actions(params);
    std::uniform_int_distribution<std::size_t> table_pick(0, table.size() - 1);

    const std::size_t T = segment.size();
    DispatchResult result;
    double soc = initial_soc;
    std::vector<double> warm;  // previous best, shifted left

    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t len = std::min(cfg.horizon, T - t);
        const std::span<const MarketRecord> window(segment.data() + t, len);

        std::vector<std::vector<double>> pop(cfg.population, std::vector<double>(len, 0.0));
        // member 0: warm start; member 1: all idle; discrete adds the pure actions
        if (!warm.empty()) {
            // shift by one step: element i of the new window corresponds to i+1 of the old
            for (std::size_t i = 0; i < len; ++i) {
                pop[0][i] = (i + 1 < warm.size()) ? warm[i + 1] : 0.0;
            }
        }
        std::size_t fixed = 2;
        if (cfg.discrete) {
            for (std::size_t a = 0; a < table.size() && fixed + a < cfg.population; ++a) {
                pop[fixed + a].assign(len, table[a]);
            }
            fixed += std::min(table.size(), cfg.population - fixed);
        }
        for (std::size_t m = fixed; m < cfg.population; ++m) {
            for (std::size_t i = 0; i < len; ++i) {
                pop[m][i] = cfg.discrete ? table[table_pick(rng)] : gene_dist(rng);
            }
        }
        if (cfg.discrete) {
            for (auto& g : pop[0]) g = detail::snap_to_table(g, table);
        }

        std::vector<double> fitness(cfg.population);
        auto evaluate = [&](void) {
            for (std::size_t m = 0; m < cfg.population; ++m) {
                fitness[m] = detail::rollout_reward(soc, window, pop[m], params);
            }
        };
        evaluate();

        std::vector<std::size_t> order(cfg.population);
        for (std::size_t g = 0; g < cfg.generations; ++g) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&fitness](std::size_t a, std::size_t b) {
                return fitness[a] > fitness[b];
            });
            std::vector<std::vector<double>> next;
            next.reserve(cfg.population);
            for (std::size_t e = 0; e < cfg.elitism; ++e) next.push_back(pop[order[e]]);
            while (next.size() < cfg.population) {
                const std::size_t pa = ga::tournament_select(fitness, cfg.tournament, rng);
                const std::size_t pb = ga::tournament_select(fitness, cfg.tournament, rng);
                std::vector<double> child = unit(rng) < cfg.crossover_rate
                                                ? ga::one_point_crossover(pop[pa], pop[pb], rng)
                                                : pop[pa];
                if (cfg.discrete) {
                    ga::discrete_mutate(child, cfg, table, rng);
                } else {
                    ga::gaussian_mutate(child, cfg, params.p_min_mw, params.p_max_mw, rng);
                }
                next.push_back(std::move(child));
            }
            pop.swap(next);
            evaluate();
        }

        std::size_t best = 0;
        for (std::size_t m = 1; m < cfg.population; ++m) {
            if (fitness[m] > fitness[best]) best = m;
        }
        const TransitionResult tr = apply_action(soc, segment[t].price, pop[best][0], params);
        TraceRow row;
        row.step = t;
        row.timestamp = segment[t].timestamp;
        row.price = segment[t].price;
        row.action = pop[best][0];
        row.corrected_action = tr.corrected_action;
        row.soc = tr.new_soc;
        row.grid_revenue = tr.grid_revenue;
        row.degradation = tr.degradation_cost;
        row.reward = tr.reward;
        result.trace.push_back(row);
        result.schedule.push_back(tr.corrected_action);
        result.total_reward += tr.reward;
        soc = tr.new_soc;
        warm = pop[best];
    }
    return result;
}

// ---------------------------------------------------------------------------
// Exact dynamic programming over the discrete action set

struct DpConfig {
    std::size_t resolution = 601;  // number of SOC grid levels over [soc_min, soc_max]

    static DpConfig from_config(const Config& cfg) {
        DpConfig d;
        d.resolution = static_cast<std::size_t>(cfg.get_int("dp.resolution", (std::int64_t)d.resolution));
        return d;
    }
};

struct DpResult {
    std::vector<double> schedule;  // executed (corrected) actions
    double total_reward = 0.0;     // exact-dynamics reward of the extracted schedule
    double grid_value = 0.0;       // value of the grid-rounded MDP at the start state
    std::vector<TraceRow> trace;
};

/// Backward induction on an evenly spaced SOC grid with the 3-action
/// table. Transitions follow the exact dynamics and the successor SOC is
/// rounded to the nearest grid point. The returned reward replays the
/// greedy schedule through the exact dynamics, so it is achievable in the
/// real environment step for step.
inline DpResult dp_optimal(std::span<const MarketRecord> segment, const BatteryParams& params,
                           const DpConfig& cfg, double initial_soc = 0.5) {
    params.validate();
    if (cfg.resolution < 2) throw std::invalid_argument("dp resolution must be >= 2");
    if (segment.empty()) throw std::invalid_argument("empty price segment");
    const std::size_t R = cfg.resolution;
    const std::size_t T = segment.size();
    const double lo = params.soc_min, hi = params.soc_max;
    const double step = (hi - lo) / static_cast<double>(R - 1);
    const auto grid_soc = [&](std::size_t i) { return lo + step * static_cast<double>(i); };
    const auto nearest = [&](double soc) {
        const double x = (soc - lo) / step;
        const long i = std::lround(x);
        return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(R) - 1));
    };
    const std::array<double, 3> table = discretize_actions(params);

    std::vector<double> value_next(R, 0.0), value_cur(R, 0.0);
    std::vector<std::vector<std::int8_t>> policy(T, std::vector<std::int8_t>(R, 1));
    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t i = 0; i < R; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            std::int8_t best_a = 1;
            for (std::size_t a = 0; a < table.size(); ++a) {
                const TransitionResult tr =
                    apply_action(grid_soc(i), segment[t].price, table[a], params);
                const double v = tr.reward + value_next[nearest(tr.new_soc)];
                if (v > best) {
                    best = v;
                    best_a = static_cast<std::int8_t>(a);
                }
            }
            value_cur[i] = best;
            policy[t][i] = best_a;
        }
        value_next.swap(value_cur);
    }

    DpResult result;
    result.grid_value = value_next[nearest(initial_soc)];
    double soc = initial_soc;
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t a = static_cast<std::size_t>(policy[t][nearest(soc)]);
        const TransitionResult tr = apply_action(soc, segment[t].price, table[a], params);
        TraceRow row;
        row.step = t;
        row.timestamp = segment[t].timestamp;
        row.price = segment[t].price;
        row.action = table[a];
        row.corrected_action = tr.corrected_action;
        row.soc = tr.new_soc;
        row.grid_revenue = tr.grid_revenue;
        row.degradation = tr.degradation_cost;
        row.reward = tr.reward;
        result.trace.push_back(row);
        result.schedule.push_back(tr.corrected_action);
        result.total_reward += tr.reward;
        soc = tr.new_soc;
    }
    return result;
}

}  // namespace arblab
