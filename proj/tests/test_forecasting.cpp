#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "arblab/forecasting.hpp"

using namespace arblab;

namespace {

MarketSeries series_from_prices(const std::vector<double>& prices) {
    std::vector<MarketRecord> recs(prices.size());
    const std::int64_t start = days_from_civil(2021, 3, 1) * 86400;
    for (std::size_t i = 0; i < prices.size(); ++i) {
        recs[i].timestamp = start + static_cast<std::int64_t>(i) * kSecondsPerHour;
        recs[i].price = prices[i];
        recs[i].demand = 9000.0;
    }
    return MarketSeries(std::move(recs));
}

}  // namespace

TEST_CASE("persistence: forecast equals the current price") {
    const auto f = Forecaster::persistence(3);
    const auto s = series_from_prices({75.3});
    CHECK(f.predict(s.records()) == 75.3);
}

TEST_CASE("persistence: zero RMSE on a constant series at every horizon") {
    const auto s = series_from_prices(std::vector<double>(60, 42.0));
    for (int h : forecast_horizons()) {
        const auto m = evaluate_forecaster(Forecaster::persistence(h), s, s.full_range());
        CHECK(m.rmse == 0.0);
        CHECK(m.mae == 0.0);
    }
}

TEST_CASE("persistence: spike error shows up h steps apart") {
    std::vector<double> prices(30, 50.0);
    prices[10] = 500.0;
    const auto s = series_from_prices(prices);
    const auto f = Forecaster::persistence(2);
    const auto& recs = s.records();
    // prediction made at t = 8 for t = 10: misses the spike by 450
    CHECK(f.predict(std::span(recs.data(), 9)) == 50.0);
    // prediction made at t = 10 for t = 12: carries the spike forward
    CHECK(f.predict(std::span(recs.data(), 11)) == 500.0);
    const auto m = evaluate_forecaster(f, s, s.full_range());
    // exactly two samples miss by 450 over 28 valid samples
    const double expected_rmse = std::sqrt(2.0 * 450.0 * 450.0 / 28.0);
    CHECK_THAT(m.rmse, Catch::Matchers::WithinRel(expected_rmse, 1e-12));
}

TEST_CASE("fit_ar: recovers an AR(1) coefficient") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> xs(4000);
    xs[0] = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) xs[i] = 0.8 * xs[i - 1] + noise(rng);
    const auto fit = fit_ar(xs, 1, 0);
    REQUIRE(fit.coeffs.size() == 2);
    CHECK_THAT(fit.coeffs[1], Catch::Matchers::WithinAbs(0.8, 0.05));
    CHECK_FALSE(fit.regularized);
}

TEST_CASE("fit_ar: constant series with differencing forecasts the constant") {
    const std::vector<double> xs(50, 17.5);
    const auto fit = fit_ar(xs, 2, 1);
    const auto f = Forecaster::autoregressive(fit, 6);
    const auto s = series_from_prices(std::vector<double>(30, 17.5));
    CHECK_THAT(f.predict(s.records()), Catch::Matchers::WithinAbs(17.5, 1e-6));
}

TEST_CASE("fit_ar: white noise has no autocorrelation") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> xs(5000);
    for (auto& x : xs) x = noise(rng);
    const auto fit = fit_ar(xs, 1, 0);
    CHECK_THAT(fit.coeffs[1], Catch::Matchers::WithinAbs(0.0, 0.05));
}

TEST_CASE("fit_ar: input validation") {
    const std::vector<double> xs(10, 1.0);
    REQUIRE_THROWS_AS(fit_ar(xs, 0, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_ar(xs, 3, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_ar(std::vector<double>{1.0, 2.0}, 3, 0), std::invalid_argument);
}

TEST_CASE("ar rollout: iterated multi-step prediction") {
    // deterministic AR(1): x_t = 0.5 * x_{t-1}, fitted coefficients are exact
    std::vector<double> xs(40);
    xs[0] = 64.0;
    for (std::size_t i = 1; i < xs.size(); ++i) xs[i] = 0.5 * xs[i - 1];
    const auto fit = fit_ar(xs, 1, 0);
    const auto f = Forecaster::autoregressive(fit, 3);
    const auto s = series_from_prices({16.0, 8.0});
    // three iterated halvings from 8
    CHECK_THAT(f.predict(s.records()), Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("neural forecaster: learns a noiseless linear rule") {
    // every sample obeys label = 0.5 * price + 10 exactly, prices in [20, 100]
    std::vector<MarketRecord> recs(200);
    const std::int64_t start = days_from_civil(2021, 3, 1) * 86400;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        recs[i].timestamp = start + static_cast<std::int64_t>(i) * kSecondsPerHour;
        recs[i].price = 20.0 + 80.0 * static_cast<double>(i) / 199.0;
        recs[i].demand = 9000.0;
    }
    MarketSeries s(std::move(recs));
    s.set_split(200, 200);
    const std::vector<Feature> features = {Feature::price};
    const auto scaler = ScalerParams::fit(s, features);

    auto make_dataset = [&](std::size_t begin, std::size_t end) {
        WindowedDataset ds;
        ds.window_size = 1;
        ds.horizon = 1;
        ds.feature_list = features;
        for (std::size_t i = begin; i < end; ++i) {
            const double price = s.price(i);
            ds.features.push_back({scaler.transform(0, price)});
            ds.labels.push_back(0.5 * price + 10.0);
        }
        return ds;
    };
    const auto train = make_dataset(0, 160);
    const auto val = make_dataset(160, 200);

    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.max_epochs = 500;
    cfg.patience = 60;
    cfg.seed = 6;
    NeuralForecasterSpec spec;
    spec.hidden = {16};
    spec.features = features;
    spec.scaler = scaler;
    const auto f = train_neural_forecaster(train, val, cfg, spec);
    CHECK(f.horizon == 1);
    CHECK(evaluate_rmse(f.net, to_sample_set(val)) < 1.0);

    SECTION("deterministic for a fixed seed") {
        const auto g = train_neural_forecaster(train, val, cfg, spec);
        CHECK(g.net.get_params() == f.net.get_params());
    }
}

TEST_CASE("neural forecaster: mismatched datasets rejected") {
    MarketSeries s = series_from_prices(std::vector<double>(120, 10.0));
    s.set_split(80, 110);
    const std::vector<Feature> features = {Feature::price};
    const auto scaler = ScalerParams::fit(s, features);
    const auto h1 = build_windows(s, s.train_range(), features, 4, 1, scaler);
    const auto h2 = build_windows(s, s.validation_range(), features, 4, 2, scaler);
    TrainConfig cfg;
    NeuralForecasterSpec spec;
    spec.scaler = scaler;
    REQUIRE_THROWS_AS(train_neural_forecaster(h1, h2, cfg, spec), std::invalid_argument);
}

TEST_CASE("metrics: two-sample hand case") {
    const std::vector<double> truth = {100.0, 200.0};
    const std::vector<double> pred = {110.0, 180.0};
    const auto m = metrics_from_pairs(truth, pred);
    CHECK_THAT(m.mae, Catch::Matchers::WithinAbs(15.0, 1e-9));
    CHECK_THAT(m.mape, Catch::Matchers::WithinAbs(0.10, 1e-9));
    CHECK_THAT(m.rmse, Catch::Matchers::WithinAbs(std::sqrt((100.0 + 400.0) / 2.0), 1e-9));
    CHECK(m.mape_excluded == 0);
}

TEST_CASE("metrics: perfect predictions score zero") {
    const std::vector<double> v = {10.0, -5.0, 80.0};
    const auto m = metrics_from_pairs(v, v);
    CHECK(m.rmse == 0.0);
    CHECK(m.mae == 0.0);
    CHECK(m.mape == 0.0);
}

TEST_CASE("metrics: near-zero truth excluded from MAPE only") {
    const std::vector<double> truth = {0.0};
    const std::vector<double> pred = {5.0};
    const auto m = metrics_from_pairs(truth, pred);
    CHECK(m.mape_excluded == 1);
    CHECK(m.mape == 0.0);
    CHECK(m.mae == 5.0);
    CHECK(m.rmse == 5.0);
}

TEST_CASE("evaluate: empty split rejected") {
    const auto s = series_from_prices(std::vector<double>(10, 5.0));
    REQUIRE_THROWS_AS(
        evaluate_forecaster(Forecaster::persistence(24), s, s.full_range()),
        std::invalid_argument);
}

TEST_CASE("select_best: argmin with tie-breaking") {
    // mean-reverting series so persistence is beatable in principle
    const auto s = generate_mean_reverting(600, 3);
    const IndexRange val{300, 600};

    SECTION("single candidate per horizon is the identity") {
        const std::vector<Forecaster> cands = {Forecaster::persistence(1)};
        const auto best = select_best(cands, s, val);
        REQUIRE(best.count(1) == 1);
        CHECK(best.at(1).forecaster.kind == ForecasterKind::persistence);
    }

    SECTION("lower validation RMSE wins") {
        const auto prices = s.prices();
        const std::span<const double> train(prices.data(), 300);
        std::vector<Forecaster> cands = {Forecaster::persistence(1),
                                         Forecaster::autoregressive(fit_ar(train, 2, 0), 1)};
        const auto best = select_best(cands, s, val);
        const auto mp = evaluate_forecaster(cands[0], s, val);
        const auto ma = evaluate_forecaster(cands[1], s, val);
        CHECK(best.at(1).validation.rmse == std::min(mp.rmse, ma.rmse));
        // persistence floor: the winner is never worse than persistence
        CHECK(best.at(1).validation.rmse <= mp.rmse);
    }

    SECTION("exact tie prefers fewer parameters") {
        // AR random walk (x_{t+1} = x_t) predicts exactly like persistence
        ArFit walk;
        walk.order = 1;
        walk.diff = 0;
        walk.coeffs = {0.0, 1.0};
        const auto ar_walk = Forecaster::autoregressive(walk, 1);
        const auto best = select_best({ar_walk, Forecaster::persistence(1)}, s, val);
        CHECK(best.at(1).forecaster.kind == ForecasterKind::persistence);
        CHECK(best.at(1).forecaster.param_count() == 0);
    }
}

TEST_CASE("selection floor: winner is never worse than persistence, any horizon") {
    const auto s = generate_mean_reverting(800, 5);
    const IndexRange val{400, 800};
    const auto prices = s.prices();
    const std::span<const double> train(prices.data(), 400);
    std::vector<Forecaster> candidates;
    for (int h : forecast_horizons()) candidates.push_back(Forecaster::persistence(h));
    const auto ar = fit_ar(train, 3, 0);
    for (int h : forecast_horizons()) candidates.push_back(Forecaster::autoregressive(ar, h));
    const auto best = select_best(candidates, s, val);
    REQUIRE(best.size() == forecast_horizons().size());
    for (int h : forecast_horizons()) {
        const auto floor = evaluate_forecaster(Forecaster::persistence(h), s, val);
        CHECK(best.at(h).validation.rmse <= floor.rmse);
    }
}

TEST_CASE("no leakage: deleting the test split does not change training") {
    auto full = generate_mean_reverting(500, 11);
    full.set_split(300, 400);  // test = [400, 500)
    std::vector<MarketRecord> trimmed_recs(full.records().begin(), full.records().begin() + 400);
    MarketSeries trimmed(std::move(trimmed_recs));
    trimmed.set_split(300, 400);

    const std::vector<Feature> features = {Feature::price};
    const auto scaler_a = ScalerParams::fit(full, features);
    const auto scaler_b = ScalerParams::fit(trimmed, features);
    TrainConfig cfg;
    cfg.max_epochs = 15;
    cfg.patience = 15;
    cfg.seed = 2;
    NeuralForecasterSpec spec;
    spec.hidden = {8};
    spec.features = features;

    spec.scaler = scaler_a;
    const auto fa = train_neural_forecaster(
        build_windows(full, full.train_range(), features, 6, 1, scaler_a),
        build_windows(full, full.validation_range(), features, 6, 1, scaler_a), cfg, spec);
    spec.scaler = scaler_b;
    const auto fb = train_neural_forecaster(
        build_windows(trimmed, trimmed.train_range(), features, 6, 1, scaler_b),
        build_windows(trimmed, trimmed.validation_range(), features, 6, 1, scaler_b), cfg, spec);
    CHECK(fa.net.get_params() == fb.net.get_params());
}

TEST_CASE("checkpoint: all three kinds round trip") {
    const auto s = generate_mean_reverting(300, 21);
    const auto prices = s.prices();

    auto roundtrip = [](const Forecaster& f) {
        std::stringstream ss;
        f.save(ss);
        return Forecaster::load(ss);
    };

    const auto p = roundtrip(Forecaster::persistence(6));
    CHECK(p.kind == ForecasterKind::persistence);
    CHECK(p.horizon == 6);

    const auto ar = Forecaster::autoregressive(fit_ar(prices, 3, 1), 12);
    const auto ar2 = roundtrip(ar);
    CHECK(ar2.ar.coeffs == ar.ar.coeffs);
    CHECK(ar2.ar.diff == 1);
    CHECK(ar2.predict(s.records()) == ar.predict(s.records()));

    MarketSeries ms = generate_mean_reverting(400, 22);
    ms.set_split(250, 350);
    const std::vector<Feature> features = {Feature::price, Feature::hour_sin, Feature::hour_cos};
    const auto scaler = ScalerParams::fit(ms, features);
    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.patience = 5;
    NeuralForecasterSpec spec;
    spec.hidden = {8};
    spec.features = features;
    spec.scaler = scaler;
    const auto nf = train_neural_forecaster(
        build_windows(ms, ms.train_range(), features, 6, 2, scaler),
        build_windows(ms, ms.validation_range(), features, 6, 2, scaler), cfg, spec);
    const auto nf2 = roundtrip(nf);
    CHECK(nf2.net.get_params() == nf.net.get_params());
    CHECK(nf2.predict(ms.records()) == nf.predict(ms.records()));
}

TEST_CASE("invalid horizon rejected") {
    REQUIRE_THROWS_AS(Forecaster::persistence(5), std::invalid_argument);
}

TEST_CASE("checkpoint: corrupt input rejected") {
    std::stringstream wrong_magic("something v1\nkind persistence\n");
    REQUIRE_THROWS_AS(Forecaster::load(wrong_magic), std::runtime_error);

    std::stringstream truncated("forecaster v1\nkind ar\nhorizon 3\nwindow 2\n"
                                "smoothing_alpha 0\nlabels_scaled 0\nfeatures price\n"
                                "scaler 0\nar 2 0 0 3\n1.0\n");  // promises 3 coeffs, has 1
    REQUIRE_THROWS_AS(Forecaster::load(truncated), std::exception);
}
