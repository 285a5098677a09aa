#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arblab/dense_net.hpp"
#include "arblab/market_data.hpp"

namespace arblab {

inline const std::vector<int>& forecast_horizons() {
    static const std::vector<int> h = {1, 2, 3, 6, 12, 18, 24};
    return h;
}

inline bool is_valid_horizon(int h) {
    const auto& hs = forecast_horizons();
    return std::find(hs.begin(), hs.end(), h) != hs.end();
}

enum class ForecasterKind { persistence, ar, neural };

inline std::string to_string(ForecasterKind k) {
    switch (k) {
        case ForecasterKind::persistence: return "persistence";
        case ForecasterKind::ar: return "ar";
        case ForecasterKind::neural: return "neural";
    }
    throw std::invalid_argument("unknown forecaster kind");
}

inline ForecasterKind forecaster_kind_from_string(const std::string& s) {
    if (s == "persistence") return ForecasterKind::persistence;
    if (s == "ar") return ForecasterKind::ar;
    if (s == "neural") return ForecasterKind::neural;
    throw std::invalid_argument("unknown forecaster kind '" + s + "'");
}

// MAPE denominator guard: samples with |truth| <= this are excluded and counted
inline constexpr double kMapeDenomGuard = 1.0;

struct ForecastMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    double mape = 0.0;  // fraction, e.g. 0.10 for 10%
    std::size_t samples = 0;
    std::size_t mape_excluded = 0;
};

// ---------------------------------------------------------------------------
// Autoregression by least squares (with optional first differencing)

struct ArFit {
    std::vector<double> coeffs;  // [intercept, phi_1 .. phi_p] on the (differenced) series
    int order = 0;
    int diff = 0;
    bool regularized = false;  // normal equations needed the ridge fallback
};

namespace detail {

// solve A x = b by Gaussian elimination with partial pivoting; false if singular
inline bool solve_linear(std::vector<std::vector<double>> a, std::vector<double> b,
                         std::vector<double>& x) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-12) return false;
        std::swap(a[pivot], a[col]);
        std::swap(b[pivot], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t row = n; row-- > 0;) {
        double sum = b[row];
        for (std::size_t c = row + 1; c < n; ++c) sum -= a[row][c] * x[c];
        x[row] = sum / a[row][row];
    }
    return true;
}

}  // namespace detail

/// Least-squares AR(p) fit of the one-step predictor, optionally on the
/// first-differenced series. Singular normal equations fall back to a
/// ridge (1e-8) solve with a warning on stderr.
inline ArFit fit_ar(std::span<const double> prices, int order, int diff) {
    if (order < 1) throw std::invalid_argument("AR order must be >= 1");
    if (diff != 0 && diff != 1) throw std::invalid_argument("diff must be 0 or 1");
    if (prices.size() <= static_cast<std::size_t>(order + diff + 1)) {
        throw std::invalid_argument("series too short for AR(" + std::to_string(order) +
                                    ") with d=" + std::to_string(diff));
    }
    std::vector<double> series(prices.begin(), prices.end());
    if (diff == 1) {
        std::vector<double> d(series.size() - 1);
        for (std::size_t i = 0; i + 1 < series.size(); ++i) d[i] = series[i + 1] - series[i];
        series = std::move(d);
    }
    const std::size_t p = static_cast<std::size_t>(order);
    const std::size_t rows = series.size() - p;
    const std::size_t cols = p + 1;  // intercept + lags
    // normal equations X'X beta = X'y
    std::vector<std::vector<double>> xtx(cols, std::vector<double>(cols, 0.0));
    std::vector<double> xty(cols, 0.0);
    std::vector<double> row(cols);
    for (std::size_t t = p; t < series.size(); ++t) {
        row[0] = 1.0;
        for (std::size_t j = 0; j < p; ++j) row[1 + j] = series[t - 1 - j];
        const double y = series[t];
        for (std::size_t i = 0; i < cols; ++i) {
            xty[i] += row[i] * y;
            for (std::size_t j = 0; j < cols; ++j) xtx[i][j] += row[i] * row[j];
        }
    }
    (void)rows;
    ArFit fit;
    fit.order = order;
    fit.diff = diff;
    if (!detail::solve_linear(xtx, xty, fit.coeffs)) {
        std::cerr << "fit_ar: singular normal equations, solving with ridge 1e-8\n";
        for (std::size_t i = 0; i < cols; ++i) xtx[i][i] += 1e-8;
        if (!detail::solve_linear(xtx, xty, fit.coeffs)) {
            throw std::runtime_error("fit_ar: ridge-regularized solve failed");
        }
        fit.regularized = true;
    }
    return fit;
}

/// Iterated multi-step AR rollout from the most recent prices.
/// `recent` must hold at least order + diff observations, newest last.
inline double ar_predict(const ArFit& fit, std::span<const double> recent, int horizon) {
    const std::size_t need = static_cast<std::size_t>(fit.order + fit.diff);
    if (recent.size() < need) {
        throw std::invalid_argument("ar_predict needs at least order + diff recent prices");
    }
    std::vector<double> lags;  // newest first, on the working (differenced) series
    if (fit.diff == 1) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(fit.order); ++i) {
            const std::size_t k = recent.size() - 1 - i;
            lags.push_back(recent[k] - recent[k - 1]);
        }
    } else {
        for (std::size_t i = 0; i < static_cast<std::size_t>(fit.order); ++i) {
            lags.push_back(recent[recent.size() - 1 - i]);
        }
    }
    double level = recent.back();
    double value = level;
    for (int h = 0; h < horizon; ++h) {
        double next = fit.coeffs[0];
        for (int j = 0; j < fit.order; ++j) next += fit.coeffs[1 + j] * lags[j];
        lags.insert(lags.begin(), next);
        lags.pop_back();
        if (fit.diff == 1) {
            level += next;
            value = level;
        } else {
            value = next;
        }
    }
    return value;
}

// ---------------------------------------------------------------------------
// Forecaster: uniform point-forecast interface over the three kinds

/// A frozen per-horizon price forecaster. predict() consumes the raw
/// record history (newest last, at least window_size records) and returns
/// one price in CAD/MWh.
class Forecaster {
  public:
    ForecasterKind kind = ForecasterKind::persistence;
    int horizon = 1;
    std::size_t window_size = 1;
    std::vector<Feature> features = {Feature::price};
    ScalerParams scaler;
    double smoothing_alpha = 0.0;
    bool labels_scaled = false;
    ArFit ar;
    DenseNet net;

    static Forecaster persistence(int horizon) {
        check_horizon(horizon);
        Forecaster f;
        f.kind = ForecasterKind::persistence;
        f.horizon = horizon;
        f.window_size = 1;
        return f;
    }

    static Forecaster autoregressive(const ArFit& fit, int horizon) {
        check_horizon(horizon);
        Forecaster f;
        f.kind = ForecasterKind::ar;
        f.horizon = horizon;
        f.ar = fit;
        f.window_size = static_cast<std::size_t>(fit.order + fit.diff);
        return f;
    }

    double predict(std::span<const MarketRecord> history) const {
        if (history.size() < window_size) {
            throw std::invalid_argument("forecaster needs " + std::to_string(window_size) +
                                        " records of history, got " +
                                        std::to_string(history.size()));
        }
        switch (kind) {
            case ForecasterKind::persistence:
                return history.back().price;
            case ForecasterKind::ar: {
                std::vector<double> prices(history.size());
                for (std::size_t i = 0; i < history.size(); ++i) prices[i] = history[i].price;
                return ar_predict(ar, prices, horizon);
            }
            case ForecasterKind::neural: {
                const auto input = build_input(history);
                const double out = net.forward(input)[0];
                return labels_scaled ? scaler.inverse(price_index(), out) : out;
            }
        }
        throw std::invalid_argument("unknown forecaster kind");
    }

    std::size_t param_count() const {
        switch (kind) {
            case ForecasterKind::persistence: return 0;
            case ForecasterKind::ar: return ar.coeffs.size();
            case ForecasterKind::neural: return net.param_count();
        }
        return 0;
    }

    void save(std::ostream& out) const {
        out << "forecaster v1\n";
        out << "kind " << to_string(kind) << '\n';
        out << "horizon " << horizon << '\n';
        out << "window " << window_size << '\n';
        out << "smoothing_alpha " << fmt_double(smoothing_alpha) << '\n';
        out << "labels_scaled " << (labels_scaled ? 1 : 0) << '\n';
        out << "features";
        for (auto f : features) out << ' ' << arblab::to_string(f);
        out << '\n';
        out << "scaler " << (scaler.fitted() ? scaler.features().size() : 0) << '\n';
        if (scaler.fitted()) {
            for (std::size_t i = 0; i < scaler.features().size(); ++i) {
                out << arblab::to_string(scaler.features()[i]) << ' '
                    << fmt_double(scaler.feature_min(i)) << ' ' << fmt_double(scaler.feature_max(i))
                    << '\n';
            }
        }
        if (kind == ForecasterKind::ar) {
            out << "ar " << ar.order << ' ' << ar.diff << ' ' << (ar.regularized ? 1 : 0) << ' '
                << ar.coeffs.size() << '\n';
            for (double c : ar.coeffs) out << fmt_double(c) << '\n';
        } else if (kind == ForecasterKind::neural) {
            save_net(out, net);
        }
    }

    static Forecaster load(std::istream& in) {
        std::string magic, version;
        in >> magic >> version;
        if (magic != "forecaster" || version != "v1") {
            throw std::runtime_error("not a forecaster v1 checkpoint");
        }
        Forecaster f;
        std::string tag, value;
        in >> tag >> value;
        expect_tag(tag, "kind");
        f.kind = forecaster_kind_from_string(value);
        in >> tag >> f.horizon;
        expect_tag(tag, "horizon");
        in >> tag >> f.window_size;
        expect_tag(tag, "window");
        in >> tag >> value;
        expect_tag(tag, "smoothing_alpha");
        f.smoothing_alpha = parse_double(value);
        int flag = 0;
        in >> tag >> flag;
        expect_tag(tag, "labels_scaled");
        f.labels_scaled = flag != 0;
        in >> tag;
        expect_tag(tag, "features");
        f.features.clear();
        while (in >> value) {
            if (value == "scaler") break;
            f.features.push_back(feature_from_string(value));
        }
        std::size_t scaler_n = 0;
        in >> scaler_n;
        if (scaler_n > 0) {
            std::vector<Feature> sf;
            std::vector<double> mins, maxs;
            for (std::size_t i = 0; i < scaler_n; ++i) {
                std::string fname, lo, hi;
                in >> fname >> lo >> hi;
                sf.push_back(feature_from_string(fname));
                mins.push_back(parse_double(lo));
                maxs.push_back(parse_double(hi));
            }
            f.scaler.set_raw(std::move(sf), std::move(mins), std::move(maxs));
        }
        if (f.kind == ForecasterKind::ar) {
            std::size_t n = 0;
            int reg = 0;
            in >> tag >> f.ar.order >> f.ar.diff >> reg >> n;
            expect_tag(tag, "ar");
            f.ar.regularized = reg != 0;
            f.ar.coeffs.resize(n);
            for (auto& c : f.ar.coeffs) {
                if (!(in >> value)) {
                    throw std::runtime_error("forecaster checkpoint truncated");
                }
                c = parse_double(value);
            }
        } else if (f.kind == ForecasterKind::neural) {
            f.net = load_net(in);
        }
        check_horizon(f.horizon);
        return f;
    }

  private:
    static void check_horizon(int h) {
        if (!is_valid_horizon(h)) {
            throw std::invalid_argument("horizon " + std::to_string(h) +
                                        " not in {1,2,3,6,12,18,24}");
        }
    }

    static void expect_tag(const std::string& got, const std::string& want) {
        if (got != want) {
            throw std::runtime_error("forecaster checkpoint: expected '" + want + "', got '" +
                                     got + "'");
        }
    }

    std::size_t price_index() const {
        const int idx = scaler.index_of(Feature::price);
        if (idx < 0) throw std::runtime_error("forecaster scaler lacks a price feature");
        return static_cast<std::size_t>(idx);
    }

    // feature window over the last window_size records, scaled like training
    std::vector<double> build_input(std::span<const MarketRecord> history) const {
        std::vector<double> smoothed;
        if (smoothing_alpha > 0.0) {
            std::vector<double> prices(history.size());
            for (std::size_t i = 0; i < history.size(); ++i) prices[i] = history[i].price;
            smoothed = ewma_smooth(prices, smoothing_alpha);
        }
        std::vector<double> input;
        input.reserve(window_size * features.size());
        const std::size_t start = history.size() - window_size;
        for (std::size_t i = start; i < history.size(); ++i) {
            const auto& rec = history[i];
            const double sp = smoothing_alpha > 0.0 ? smoothed[i] : rec.price;
            for (std::size_t f = 0; f < features.size(); ++f) {
                input.push_back(scaler.transform(f, feature_value(rec, features[f], sp)));
            }
        }
        return input;
    }
};

// ---------------------------------------------------------------------------
// Neural forecaster training

struct NeuralForecasterSpec {
    std::vector<std::size_t> hidden = {64};
    std::vector<Feature> features = {Feature::price};
    ScalerParams scaler;
    double smoothing_alpha = 0.0;
};

inline SampleSet to_sample_set(const WindowedDataset& ds) {
    SampleSet s;
    s.inputs = ds.features;
    s.targets.reserve(ds.labels.size());
    for (double l : ds.labels) s.targets.push_back({l});
    return s;
}

/// Trains a direct per-horizon neural point forecaster (one output node)
/// on a windowed dataset, early-stopping on validation RMSE.
inline Forecaster train_neural_forecaster(const WindowedDataset& train, const WindowedDataset& val,
                                          const TrainConfig& cfg,
                                          const NeuralForecasterSpec& spec) {
    if (train.horizon != val.horizon || train.window_size != val.window_size) {
        throw std::invalid_argument("train/validation datasets disagree on horizon or window");
    }
    if (!is_valid_horizon(static_cast<int>(train.horizon))) {
        throw std::invalid_argument("dataset horizon " + std::to_string(train.horizon) +
                                    " not in {1,2,3,6,12,18,24}");
    }
    if (train.labels_scaled != val.labels_scaled) {
        throw std::invalid_argument("train/validation datasets disagree on label scaling");
    }
    if (train.features.empty()) throw std::invalid_argument("empty training dataset");
    std::vector<std::size_t> widths;
    widths.push_back(train.features.front().size());
    for (auto h : spec.hidden) widths.push_back(h);
    widths.push_back(1);
    std::vector<Activation> acts(widths.size() - 1, Activation::relu);
    acts.back() = Activation::identity;
    DenseNet net = DenseNet::init(widths, acts, cfg.seed);
    const FitResult fitres = fit(std::move(net), to_sample_set(train), to_sample_set(val), cfg);

    Forecaster f;
    f.kind = ForecasterKind::neural;
    f.horizon = static_cast<int>(train.horizon);
    f.window_size = train.window_size;
    f.features = spec.features;
    f.scaler = spec.scaler;
    f.smoothing_alpha = spec.smoothing_alpha;
    f.labels_scaled = train.labels_scaled;
    f.net = fitres.net;
    return f;
}

// ---------------------------------------------------------------------------
// Evaluation and model selection

/// RMSE / MAE / MAPE over (truth, prediction) pairs. MAPE is averaged only
/// over samples with |truth| > 1 CAD/MWh; the excluded count is reported
/// alongside.
inline ForecastMetrics metrics_from_pairs(std::span<const double> truths,
                                          std::span<const double> preds) {
    if (truths.empty() || truths.size() != preds.size()) {
        throw std::invalid_argument("metrics need matching non-empty truth/prediction lists");
    }
    double sse = 0.0, sae = 0.0, sape = 0.0;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const double err = preds[i] - truths[i];
        sse += err * err;
        sae += std::abs(err);
        if (std::abs(truths[i]) > kMapeDenomGuard) {
            sape += std::abs(err) / std::abs(truths[i]);
        } else {
            ++excluded;
        }
    }
    const double n = static_cast<double>(truths.size());
    ForecastMetrics m;
    m.samples = truths.size();
    m.mape_excluded = excluded;
    m.rmse = std::sqrt(sse / n);
    m.mae = sae / n;
    m.mape = truths.size() > excluded
                 ? sape / static_cast<double>(truths.size() - excluded)
                 : 0.0;
    return m;
}

/// Walks a split, predicting price[t + horizon] from records up to t.
inline ForecastMetrics evaluate_forecaster(const Forecaster& f, const MarketSeries& series,
                                           IndexRange range) {
    if (range.end > series.size() || range.begin > range.end) {
        throw std::invalid_argument("evaluation range out of bounds");
    }
    if (range.size() < f.window_size + static_cast<std::size_t>(f.horizon)) {
        throw std::invalid_argument("evaluation split too short");
    }
    const auto& records = series.records();
    std::vector<double> truths, preds;
    const std::size_t first_t = range.begin + f.window_size - 1;
    const std::size_t last_t = range.end - 1 - static_cast<std::size_t>(f.horizon);
    for (std::size_t t = first_t; t <= last_t; ++t) {
        const std::span<const MarketRecord> history(records.data() + range.begin,
                                                    t - range.begin + 1);
        preds.push_back(f.predict(history));
        truths.push_back(series.price(t + static_cast<std::size_t>(f.horizon)));
    }
    return metrics_from_pairs(truths, preds);
}

struct SelectedForecaster {
    Forecaster forecaster;
    ForecastMetrics validation;
};

/// Per-horizon argmin of validation RMSE. Exact ties prefer fewer
/// parameters, then the simpler kind (persistence < ar < neural).
inline std::map<int, SelectedForecaster> select_best(const std::vector<Forecaster>& candidates,
                                                     const MarketSeries& series,
                                                     IndexRange validation_range) {
    std::map<int, SelectedForecaster> best;
    for (const auto& cand : candidates) {
        const auto metrics = evaluate_forecaster(cand, series, validation_range);
        auto it = best.find(cand.horizon);
        if (it == best.end()) {
            best.emplace(cand.horizon, SelectedForecaster{cand, metrics});
            continue;
        }
        const auto& cur = it->second;
        const bool better =
            metrics.rmse < cur.validation.rmse ||
            (metrics.rmse == cur.validation.rmse &&
             (cand.param_count() < cur.forecaster.param_count() ||
              (cand.param_count() == cur.forecaster.param_count() &&
               static_cast<int>(cand.kind) < static_cast<int>(cur.forecaster.kind))));
        if (better) it->second = SelectedForecaster{cand, metrics};
    }
    return best;
}

}  // namespace arblab
