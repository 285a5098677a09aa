#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "arblab/forecast_wrapper.hpp"

using namespace arblab;

namespace {

MarketSeries series_from_prices(const std::vector<double>& prices) {
    std::vector<MarketRecord> recs(prices.size());
    const std::int64_t start = days_from_civil(2021, 5, 1) * 86400;
    for (std::size_t i = 0; i < prices.size(); ++i) {
        recs[i].timestamp = start + static_cast<std::int64_t>(i) * kSecondsPerHour;
        recs[i].price = prices[i];
        recs[i].demand = 9000.0;
    }
    return MarketSeries(std::move(recs));
}

WrapperConfig persistence_config(const std::vector<int>& horizons, std::size_t window = 4) {
    WrapperConfig cfg;
    cfg.mode = WrapperMode::predicted;
    cfg.horizons = horizons;
    cfg.window_size = window;
    for (int h : horizons) cfg.forecasters.emplace(h, Forecaster::persistence(h));
    return cfg;
}

}  // namespace

TEST_CASE("mode none: observation is (soc, price)") {
    const auto s = series_from_prices({10.0, 20.0, 30.0});
    const BatteryParams p;
    WrapperConfig cfg;  // mode = none
    ForecastWrapper w(s, s.full_range(), p, cfg, 0.5);
    CHECK(w.obs_width() == 2);
    const auto obs = w.reset();
    REQUIRE(obs.size() == 2);
    CHECK(obs[0] == 0.5);
    CHECK(obs[1] == 10.0);
}

TEST_CASE("mode none: step-for-step identical to the bare environment") {
    const auto s = series_from_prices({30.0, 80.0, 10.0, 60.0, 45.0});
    const BatteryParams p;
    WrapperConfig cfg;
    ForecastWrapper w(s, s.full_range(), p, cfg, 0.5);
    BatteryEnv bare(s, s.full_range(), p, 0.5);
    w.reset();
    bare.reset();
    const std::vector<double> actions = {2.5, -2.5, 0.0, 2.5, -1.0};
    for (double a : actions) {
        const auto ws = w.step(a);
        const auto bs = bare.step(a);
        CHECK(ws.reward == bs.reward);
        CHECK(ws.obs[0] == bs.observation.soc);
        CHECK(ws.obs[1] == bs.observation.current_price);
    }
}

TEST_CASE("perfect mode: appends the true future price") {
    const auto s = series_from_prices({10.0, 20.0, 30.0});
    const BatteryParams p;
    WrapperConfig cfg;
    cfg.mode = WrapperMode::perfect;
    cfg.horizons = {1};
    ForecastWrapper w(s, s.full_range(), p, cfg, 0.5);
    const auto obs = w.reset();
    REQUIRE(obs.size() == 3);
    CHECK(obs[2] == 20.0);  // t = 0, horizon 1
}

TEST_CASE("perfect mode: exhaustive fidelity with end-of-episode repeat") {
    const std::vector<double> prices = {5.0, 15.0, 25.0, 35.0, 45.0, 55.0};
    const auto s = series_from_prices(prices);
    const BatteryParams p;
    WrapperConfig cfg;
    cfg.mode = WrapperMode::perfect;
    cfg.horizons = {1, 3};
    ForecastWrapper w(s, s.full_range(), p, cfg, 0.5);
    auto obs = w.reset();
    for (std::size_t t = 0; t < prices.size(); ++t) {
        REQUIRE(obs.size() == 4);
        CHECK(obs[2] == prices[std::min(t + 1, prices.size() - 1)]);
        CHECK(obs[3] == prices[std::min(t + 3, prices.size() - 1)]);
        if (!w.done()) obs = w.step(0.0).obs;
    }
}

TEST_CASE("predicted mode with persistence forecasters echoes the current price") {
    const auto s = series_from_prices({12.0, 24.0, 36.0, 48.0, 60.0, 72.0});
    const BatteryParams p;
    const auto cfg = persistence_config({1, 2, 3});
    ForecastWrapper w(s, s.full_range(), p, cfg, 0.5);
    auto obs = w.reset();
    while (true) {
        for (std::size_t k = 2; k < obs.size(); ++k) CHECK(obs[k] == obs[1]);
        if (w.done()) break;
        obs = w.step(0.0).obs;
    }
}

TEST_CASE("width constancy across a whole episode") {
    const auto s = series_from_prices(std::vector<double>(40, 33.0));
    const BatteryParams p;
    WrapperConfig cfg;
    cfg.mode = WrapperMode::perfect;
    cfg.horizons = {1, 2, 3, 6, 12, 18, 24};
    ForecastWrapper w(s, s.full_range(), p, cfg, 0.5);
    auto obs = w.reset();
    CHECK(w.obs_width() == 2 + 7);
    while (!w.done()) {
        REQUIRE(obs.size() == 9);
        obs = w.step(2.5).obs;
    }
    REQUIRE(obs.size() == 9);
}

TEST_CASE("causality: future prices cannot influence predictions") {
    std::vector<double> prices(30, 40.0);
    const BatteryParams p;
    const auto cfg = persistence_config({1, 2});

    auto run_and_collect = [&](const std::vector<double>& px) {
        const auto s = series_from_prices(px);
        ForecastWrapper w(s, {0, 10}, p, cfg, 0.5);
        std::vector<std::vector<double>> seen;
        auto obs = w.reset();
        seen.push_back(obs);
        for (int t = 0; t < 5; ++t) seen.push_back(w.step(0.0).obs);
        return seen;
    };
    const auto base = run_and_collect(prices);
    auto poisoned = prices;
    for (std::size_t i = 7; i < poisoned.size(); ++i) poisoned[i] = 1e6;  // sentinel future
    // observations up to t=5 see prices only up to index 6 (episode range is [0,10))
    auto poisoned_run = run_and_collect(poisoned);
    for (std::size_t t = 0; t + 1 < base.size(); ++t) {
        for (std::size_t k = 2; k < base[t].size(); ++k) {
            CHECK(base[t][k] == poisoned_run[t][k]);
        }
    }
}

TEST_CASE("warmup: pre-episode records fill the history") {
    const auto s = series_from_prices({1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
    const auto wh = build_warmup(s, 4, 4);
    CHECK_FALSE(wh.padded);
    REQUIRE(wh.records.size() == 4);
    CHECK(wh.records[0].price == 1.0);
    CHECK(wh.records[3].price == 4.0);
}

TEST_CASE("warmup: no pre-episode records pads with the first record") {
    const auto s = series_from_prices({9.0, 10.0, 11.0});
    const auto wh = build_warmup(s, 0, 24);
    CHECK(wh.padded);
    REQUIRE(wh.records.size() == 24);
    for (const auto& r : wh.records) CHECK(r.price == 9.0);
    // padded timestamps stay on the hourly grid just before the episode
    CHECK(wh.records[23].timestamp == s.record(0).timestamp - kSecondsPerHour);
}

TEST_CASE("warmup: padding flag surfaces through the wrapper") {
    const auto s = series_from_prices(std::vector<double>(30, 5.0));
    const BatteryParams p;
    const auto cfg = persistence_config({1}, 8);
    ForecastWrapper from_start(s, {0, 20}, p, cfg, 0.5);
    CHECK(from_start.padded_warmup());
    ForecastWrapper with_history(s, {10, 30}, p, cfg, 0.5);
    CHECK_FALSE(with_history.padded_warmup());
}

TEST_CASE("configuration errors are raised at construction") {
    const auto s = series_from_prices(std::vector<double>(10, 5.0));
    const BatteryParams p;

    WrapperConfig missing;
    missing.mode = WrapperMode::predicted;
    missing.horizons = {1, 2};
    missing.forecasters.emplace(1, Forecaster::persistence(1));  // horizon 2 missing
    REQUIRE_THROWS_WITH(ForecastWrapper(s, s.full_range(), p, missing, 0.5),
                        Catch::Matchers::ContainsSubstring("horizon 2"));

    WrapperConfig empty;
    empty.mode = WrapperMode::perfect;
    REQUIRE_THROWS_AS(ForecastWrapper(s, s.full_range(), p, empty, 0.5), std::invalid_argument);

    WrapperConfig mismatched;
    mismatched.mode = WrapperMode::predicted;
    mismatched.horizons = {2};
    mismatched.forecasters.emplace(2, Forecaster::persistence(1));  // trained for horizon 1
    REQUIRE_THROWS_AS(ForecastWrapper(s, s.full_range(), p, mismatched, 0.5),
                      std::invalid_argument);
}
