#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "arblab/dense_net.hpp"
#include "arblab/dqn.hpp"
#include "arblab/forecast_wrapper.hpp"

namespace arblab {

struct CemConfig {
    std::size_t population = 64;
    double elite_fraction = 0.125;
    std::size_t iterations = 100;
    double init_std = 1.0;
    std::vector<std::size_t> hidden = {16};  // policy network hidden widths
    std::uint64_t seed = 0;
    double std_floor = 1e-3;

    std::size_t elite_count() const {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::llround(elite_fraction * static_cast<double>(population))));
    }

    void validate() const {
        if (population < 1) throw std::invalid_argument("population must be >= 1");
        if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
            throw std::invalid_argument("elite_fraction must be in (0, 1]");
        }
        if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    }

    static CemConfig from_config(const Config& cfg) {
        CemConfig c;
        c.population = static_cast<std::size_t>(cfg.get_int("cem.population", (std::int64_t)c.population));
        c.elite_fraction = cfg.get_double("cem.elite_fraction", c.elite_fraction);
        c.iterations = static_cast<std::size_t>(cfg.get_int("cem.iterations", (std::int64_t)c.iterations));
        c.init_std = cfg.get_double("cem.init_std", c.init_std);
        if (cfg.has("cem.hidden")) {
            c.hidden.clear();
            for (auto v : cfg.get_int_list("cem.hidden")) {
                c.hidden.push_back(static_cast<std::size_t>(v));
            }
        }
        c.validate();
        return c;
    }
};

struct CemIterStats {
    std::size_t iteration = 0;   // 1-based
    double best = 0.0;           // best-ever score so far
    double score_mean = 0.0;     // mean of this iteration's finite scores
    double score_std = 0.0;
};

struct CemResult {
    std::vector<double> best_params;
    double best_score = 0.0;
    std::vector<CemIterStats> stats;
    std::vector<double> final_mean, final_std;
};

/// Diagonal-Gaussian cross-entropy method: sample, score, refit mean/std
/// to the elite set, repeat. Candidates with non-finite scores are
/// discarded. Returns the best parameters ever seen.
inline CemResult cem_optimize(const std::function<double(std::span<const double>)>& objective,
                              std::size_t dim, const CemConfig& cfg) {
    cfg.validate();
    if (dim < 1) throw std::invalid_argument("dimension must be >= 1");
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> mean(dim, 0.0), stdv(dim, cfg.init_std);
    CemResult result;
    result.best_score = -std::numeric_limits<double>::infinity();
    bool warned = false;

    std::vector<std::vector<double>> population(cfg.population, std::vector<double>(dim));
    std::vector<double> scores(cfg.population);
    for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
        std::vector<std::size_t> valid;
        for (std::size_t m = 0; m < cfg.population; ++m) {
            for (std::size_t d = 0; d < dim; ++d) {
                population[m][d] = mean[d] + stdv[d] * gauss(rng);
            }
            scores[m] = objective(population[m]);
            if (std::isfinite(scores[m])) {
                valid.push_back(m);
            } else if (!warned) {
                std::cerr << "cem_optimize: discarding candidate with non-finite score\n";
                warned = true;
            }
        }
        CemIterStats st;
        st.iteration = iter;
        if (!valid.empty()) {
            double sum = 0.0;
            for (auto m : valid) sum += scores[m];
            st.score_mean = sum / static_cast<double>(valid.size());
            double var = 0.0;
            for (auto m : valid) {
                var += (scores[m] - st.score_mean) * (scores[m] - st.score_mean);
            }
            st.score_std = std::sqrt(var / static_cast<double>(valid.size()));

            std::sort(valid.begin(), valid.end(),
                      [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
            if (scores[valid.front()] > result.best_score) {
                result.best_score = scores[valid.front()];
                result.best_params = population[valid.front()];
            }
            const std::size_t n_elite = std::min(cfg.elite_count(), valid.size());
            // refit: sampling mean becomes exactly the elite mean
            for (std::size_t d = 0; d < dim; ++d) {
                double m_new = 0.0;
                for (std::size_t e = 0; e < n_elite; ++e) m_new += population[valid[e]][d];
                m_new /= static_cast<double>(n_elite);
                double v_new = 0.0;
                for (std::size_t e = 0; e < n_elite; ++e) {
                    const double diff = population[valid[e]][d] - m_new;
                    v_new += diff * diff;
                }
                mean[d] = m_new;
                stdv[d] = std::max(cfg.std_floor, std::sqrt(v_new / static_cast<double>(n_elite)));
            }
        }
        st.best = result.best_score;
        result.stats.push_back(st);
    }
    result.final_mean = mean;
    result.final_std = stdv;
    if (result.best_params.empty()) {
        throw std::runtime_error("cem_optimize: no candidate produced a finite score");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Policy realization for the battery task

inline std::vector<std::size_t> cem_policy_widths(std::size_t obs_width,
                                                  const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> widths;
    widths.push_back(obs_width);
    for (auto h : hidden) widths.push_back(h);
    widths.push_back(3);
    return widths;
}

inline DenseNet make_cem_policy(std::span<const double> params,
                                const std::vector<std::size_t>& widths) {
    if (params.size() != DenseNet::param_count_for(widths)) {
        throw std::invalid_argument("parameter count does not match policy widths: expected " +
                                    std::to_string(DenseNet::param_count_for(widths)) + ", got " +
                                    std::to_string(params.size()));
    }
    std::vector<Activation> acts(widths.size() - 1, Activation::tanh);
    acts.back() = Activation::identity;
    DenseNet net = DenseNet::init(widths, acts, 0);
    net.set_params(params);
    return net;
}

/// Rolls one episode with the linear-logits policy defined by `params`.
/// Observations are scaled like the DQN state (SOC as-is, prices min-max
/// scaled); the argmax logit picks the action, ties to the lowest index.
inline double cem_policy_eval(std::span<const double> params,
                              const std::vector<std::size_t>& widths, ForecastWrapper& env,
                              const std::array<double, 3>& action_table,
                              const ScalerParams& price_scaler) {
    const DenseNet net = make_cem_policy(params, widths);
    auto scale = [&price_scaler](const std::vector<double>& obs) {
        std::vector<double> x(obs.size());
        x[0] = obs[0];
        for (std::size_t i = 1; i < obs.size(); ++i) x[i] = price_scaler.transform_price(obs[i]);
        return x;
    };
    const auto result = rollout_policy(
        [&](const std::vector<double>& obs) {
            const auto logits = net.forward(scale(obs));
            int best = 0;
            for (int a = 1; a < static_cast<int>(logits.size()); ++a) {
                if (logits[a] > logits[best]) best = a;
            }
            return best;
        },
        env, action_table);
    return result.total_reward;
}

}  // namespace arblab
