#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arblab/csv.hpp"
#include "arblab/time_util.hpp"

namespace arblab {

/// One hourly market observation: wholesale price (CAD/MWh, may be
/// negative) and system demand (MW).
struct MarketRecord {
    std::int64_t timestamp = 0;  // epoch seconds, UTC, on the hourly grid
    double price = 0.0;
    double demand = 0.0;
};

/// Chronological [train, validation, test] partition by record index:
/// train = [0, train_end), validation = [train_end, val_end),
/// test = [val_end, size).
struct SplitIndices {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
};

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

class MarketSeries {
  public:
    explicit MarketSeries(std::vector<MarketRecord> records) : records_(std::move(records)) {
        for (std::size_t i = 0; i < records_.size(); ++i) {
            if (!std::isfinite(records_[i].price) || !std::isfinite(records_[i].demand)) {
                throw std::invalid_argument("non-finite value at record " + std::to_string(i));
            }
            if (i > 0 &&
                records_[i].timestamp != records_[i - 1].timestamp + kSecondsPerHour) {
                throw std::invalid_argument(
                    "timestamps must increase by exactly one hour; violated at " +
                    format_iso8601_utc(records_[i].timestamp));
            }
        }
        split_ = {records_.size(), records_.size()};
    }

    std::size_t size() const { return records_.size(); }
    const std::vector<MarketRecord>& records() const { return records_; }
    const MarketRecord& record(std::size_t i) const { return records_.at(i); }
    double price(std::size_t i) const { return records_.at(i).price; }

    std::vector<double> prices() const {
        std::vector<double> out(records_.size());
        for (std::size_t i = 0; i < records_.size(); ++i) out[i] = records_[i].price;
        return out;
    }

    void set_split(std::size_t train_end, std::size_t val_end) {
        if (train_end > val_end || val_end > records_.size()) {
            throw std::invalid_argument("split indices must satisfy train_end <= val_end <= size");
        }
        split_ = {train_end, val_end};
    }

    /// Split by fractions of the series length, e.g. (0.7, 0.85).
    void set_split_fractions(double train_frac, double val_frac) {
        if (!(train_frac >= 0.0 && train_frac <= val_frac && val_frac <= 1.0)) {
            throw std::invalid_argument("split fractions must satisfy 0 <= train <= val <= 1");
        }
        set_split(static_cast<std::size_t>(train_frac * records_.size()),
                  static_cast<std::size_t>(val_frac * records_.size()));
    }

    const SplitIndices& split() const { return split_; }
    IndexRange train_range() const { return {0, split_.train_end}; }
    IndexRange validation_range() const { return {split_.train_end, split_.val_end}; }
    IndexRange test_range() const { return {split_.val_end, records_.size()}; }
    IndexRange full_range() const { return {0, records_.size()}; }

  private:
    std::vector<MarketRecord> records_;
    SplitIndices split_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

struct IngestOptions {
    bool fill_gaps = false;  // forward-fill missing hours instead of rejecting
    std::string timestamp_column = "timestamp";
    std::string price_column = "price";
    std::string demand_column = "demand";
};

/// Reads an hourly market CSV (header required; extra columns ignored).
/// Rows are sorted by timestamp if needed. Duplicate timestamps are
/// rejected; gaps are rejected unless opts.fill_gaps repeats the previous
/// record through the missing hours.
inline MarketSeries ingest_csv(const std::string& path, const IngestOptions& opts = {}) {
    CsvTable table = read_csv(path);
    const int tcol = table.column(opts.timestamp_column);
    const int pcol = table.column(opts.price_column);
    const int dcol = table.column(opts.demand_column);
    if (tcol < 0 || pcol < 0 || dcol < 0) {
        throw std::runtime_error(path + ": header must contain '" + opts.timestamp_column +
                                 "', '" + opts.price_column + "', '" + opts.demand_column + "'");
    }
    std::vector<MarketRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t lineno = r + 2;  // header is line 1
        const std::size_t need = static_cast<std::size_t>(std::max({tcol, pcol, dcol})) + 1;
        if (row.size() < need) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected at least " +
                                     std::to_string(need) + " fields, got " +
                                     std::to_string(row.size()));
        }
        MarketRecord rec;
        try {
            rec.timestamp = parse_iso8601_utc(row[tcol]);
            rec.price = parse_double(row[pcol]);
            rec.demand = parse_double(row[dcol]);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        records.push_back(rec);
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const MarketRecord& a, const MarketRecord& b) {
                         return a.timestamp < b.timestamp;
                     });
    std::vector<MarketRecord> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        if (!out.empty()) {
            const std::int64_t prev = out.back().timestamp;
            if (rec.timestamp == prev) {
                throw std::runtime_error(path + ": duplicate timestamp " +
                                         format_iso8601_utc(rec.timestamp));
            }
            if (rec.timestamp % kSecondsPerHour != prev % kSecondsPerHour) {
                throw std::runtime_error(path + ": timestamp " +
                                         format_iso8601_utc(rec.timestamp) +
                                         " is off the hourly grid");
            }
            std::int64_t expected = prev + kSecondsPerHour;
            if (rec.timestamp > expected && !opts.fill_gaps) {
                throw std::runtime_error(path + ": gap before " +
                                         format_iso8601_utc(rec.timestamp) +
                                         " (enable fill_gaps to forward-fill)");
            }
            while (expected < rec.timestamp) {
                MarketRecord fill = out.back();
                fill.timestamp = expected;
                out.push_back(fill);
                expected += kSecondsPerHour;
            }
        }
        out.push_back(rec);
    }
    return MarketSeries(std::move(out));
}

inline void write_series_csv(const std::string& path, const MarketSeries& series) {
    CsvWriter w(path);
    w.row({"timestamp", "price", "demand"});
    for (const auto& rec : series.records()) {
        w.row({format_iso8601_utc(rec.timestamp), fmt_double(rec.price), fmt_double(rec.demand)});
    }
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Stand-in for the non-redistributable hourly market data: a daily price
/// sinusoid with uniform noise and randomly injected spikes of 5-20x the
/// base price.
struct SyntheticConfig {
    std::size_t length_hours = 8760;
    std::uint64_t seed = 0;
    double spike_rate = 0.0;  // probability per hour
    double base_mean = 60.0;
    double daily_amplitude = 25.0;
    double noise_scale = 5.0;  // uniform noise in [-noise_scale, noise_scale]
    double spike_min_mult = 5.0;
    double spike_max_mult = 20.0;
    std::size_t spike_duration_hours = 1;  // each spike event multiplies this many hours
    double dip_rate = 0.0;  // probability/hour of a near-zero price event (price / mult)
    double demand_mean = 9500.0;
    double demand_amplitude = 800.0;
    double demand_noise = 150.0;
    std::int64_t start_timestamp = days_from_civil(2021, 1, 1) * 86400;
};

struct SyntheticSeries {
    MarketSeries series;
    std::vector<std::uint8_t> spike_mask;  // 1 where a spike was injected
};

inline SyntheticSeries generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.length_hours < 1) {
        throw std::invalid_argument("length_hours must be >= 1");
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<MarketRecord> records(cfg.length_hours);
    std::vector<std::uint8_t> mask(cfg.length_hours, 0);
    std::size_t spike_left = 0;
    double active_mult = 1.0;
    bool active_dip = false;
    for (std::size_t i = 0; i < cfg.length_hours; ++i) {
        const std::int64_t ts = cfg.start_timestamp + static_cast<std::int64_t>(i) * kSecondsPerHour;
        const int h = hour_of_day(ts);
        const double phase = 2.0 * std::numbers::pi * h / 24.0;
        // same number of rng draws per hour regardless of spike outcome
        const double noise = (2.0 * unit(rng) - 1.0) * cfg.noise_scale;
        const double spike_draw = unit(rng);
        const double spike_mult =
            cfg.spike_min_mult + unit(rng) * (cfg.spike_max_mult - cfg.spike_min_mult);
        const double demand_noise = (2.0 * unit(rng) - 1.0) * cfg.demand_noise;
        double price = cfg.base_mean + cfg.daily_amplitude * std::sin(phase) + noise;
        if (spike_left == 0) {
            if (spike_draw < cfg.spike_rate) {
                spike_left = std::max<std::size_t>(1, cfg.spike_duration_hours);
                active_dip = false;
                active_mult = spike_mult;
            } else if (spike_draw < cfg.spike_rate + cfg.dip_rate) {
                spike_left = std::max<std::size_t>(1, cfg.spike_duration_hours);
                active_dip = true;
                active_mult = spike_mult;
            }
        }
        if (spike_left > 0) {
            price = active_dip ? price / active_mult : price * active_mult;
            mask[i] = 1;
            --spike_left;
        }
        records[i].timestamp = ts;
        records[i].price = price;
        records[i].demand =
            cfg.demand_mean + cfg.demand_amplitude * std::sin(phase - 0.8) + demand_noise;
    }
    return {MarketSeries(std::move(records)), std::move(mask)};
}

inline SyntheticSeries generate_synthetic(std::size_t length_hours, std::uint64_t seed,
                                          double spike_rate) {
    SyntheticConfig cfg;
    cfg.length_hours = length_hours;
    cfg.seed = seed;
    cfg.spike_rate = spike_rate;
    return generate_synthetic(cfg);
}

/// AR(1) mean-reverting price series: x_t = mu + phi*(x_{t-1} - mu) + noise.
inline MarketSeries generate_mean_reverting(std::size_t length_hours, std::uint64_t seed,
                                            double mu = 60.0, double phi = 0.95,
                                            double noise_std = 8.0) {
    if (length_hours < 1) {
        throw std::invalid_argument("length_hours must be >= 1");
    }
    if (!(phi >= 0.0 && phi < 1.0)) {
        throw std::invalid_argument("phi must be in [0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    std::vector<MarketRecord> records(length_hours);
    const std::int64_t start = days_from_civil(2021, 1, 1) * 86400;
    double x = mu;
    for (std::size_t i = 0; i < length_hours; ++i) {
        records[i].timestamp = start + static_cast<std::int64_t>(i) * kSecondsPerHour;
        records[i].price = x;
        records[i].demand = 9500.0;
        x = mu + phi * (x - mu) + noise(rng);
    }
    return MarketSeries(std::move(records));
}

// ---------------------------------------------------------------------------
// Features and scaling

enum class Feature { price, demand, hour_sin, hour_cos };

inline std::string to_string(Feature f) {
    switch (f) {
        case Feature::price: return "price";
        case Feature::demand: return "demand";
        case Feature::hour_sin: return "hour_sin";
        case Feature::hour_cos: return "hour_cos";
    }
    throw std::invalid_argument("unknown feature");
}

inline Feature feature_from_string(const std::string& s) {
    if (s == "price") return Feature::price;
    if (s == "demand") return Feature::demand;
    if (s == "hour_sin") return Feature::hour_sin;
    if (s == "hour_cos") return Feature::hour_cos;
    throw std::invalid_argument("unknown feature '" + s + "'");
}

struct HourEncoding {
    double sin_part;
    double cos_part;
};

/// Cyclic encoding of the hour of day: (sin(2*pi*h/24), cos(2*pi*h/24)).
inline HourEncoding encode_hour(std::int64_t timestamp) {
    const double h = hour_of_day(timestamp);
    const double phase = 2.0 * std::numbers::pi * h / 24.0;
    return {std::sin(phase), std::cos(phase)};
}

/// Exponentially weighted moving average with s_0 = x_0 and
/// s_t = alpha*x_t + (1-alpha)*s_{t-1}.
inline std::vector<double> ewma_smooth(std::span<const double> xs, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("alpha must be in (0, 1]");
    }
    std::vector<double> out(xs.size());
    if (xs.empty()) return out;
    out[0] = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) {
        out[i] = alpha * xs[i] + (1.0 - alpha) * out[i - 1];
    }
    return out;
}

inline double feature_value(const MarketRecord& rec, Feature f, double smoothed_price) {
    switch (f) {
        case Feature::price: return smoothed_price;
        case Feature::demand: return rec.demand;
        case Feature::hour_sin: return encode_hour(rec.timestamp).sin_part;
        case Feature::hour_cos: return encode_hour(rec.timestamp).cos_part;
    }
    throw std::invalid_argument("unknown feature");
}

/// Per-feature min-max scaler to [-1, 1], fitted on the training split only.
class ScalerParams {
  public:
    ScalerParams() = default;

    static ScalerParams fit(const MarketSeries& series, const std::vector<Feature>& features,
                            double smoothing_alpha = 0.0) {
        const IndexRange range = series.train_range();
        if (range.size() == 0) {
            throw std::invalid_argument("cannot fit scaler: empty training split");
        }
        std::vector<double> smoothed;
        if (smoothing_alpha > 0.0) smoothed = ewma_smooth(series.prices(), smoothing_alpha);
        ScalerParams s;
        s.features_ = features;
        s.min_.assign(features.size(), std::numeric_limits<double>::infinity());
        s.max_.assign(features.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = range.begin; i < range.end; ++i) {
            const auto& rec = series.record(i);
            const double sp = smoothing_alpha > 0.0 ? smoothed[i] : rec.price;
            for (std::size_t f = 0; f < features.size(); ++f) {
                const double v = feature_value(rec, features[f], sp);
                s.min_[f] = std::min(s.min_[f], v);
                s.max_[f] = std::max(s.max_[f], v);
            }
        }
        s.fitted_ = true;
        return s;
    }

    bool fitted() const { return fitted_; }
    const std::vector<Feature>& features() const { return features_; }
    double feature_min(std::size_t f) const { return min_.at(f); }
    double feature_max(std::size_t f) const { return max_.at(f); }

    int index_of(Feature f) const {
        for (std::size_t i = 0; i < features_.size(); ++i) {
            if (features_[i] == f) return static_cast<int>(i);
        }
        return -1;
    }

    /// Maps value into [-1, 1] on the training range. Degenerate features
    /// (max == min) map to 0. No clipping of out-of-range inputs.
    double transform(std::size_t f, double value) const {
        check_fitted();
        const double lo = min_.at(f), hi = max_.at(f);
        if (hi <= lo) return 0.0;
        return -1.0 + 2.0 * (value - lo) / (hi - lo);
    }

    double inverse(std::size_t f, double scaled) const {
        check_fitted();
        const double lo = min_.at(f), hi = max_.at(f);
        if (hi <= lo) return lo;
        return lo + (scaled + 1.0) * 0.5 * (hi - lo);
    }

    std::vector<double> transform_row(std::span<const double> values) const {
        check_fitted();
        if (values.size() != features_.size()) {
            throw std::invalid_argument("scaler row width mismatch");
        }
        std::vector<double> out(values.size());
        for (std::size_t f = 0; f < values.size(); ++f) out[f] = transform(f, values[f]);
        return out;
    }

    /// Scales a price with the fitted price feature; requires price among
    /// the fitted features.
    double transform_price(double price) const {
        const int idx = index_of(Feature::price);
        if (idx < 0) {
            throw std::runtime_error("scaler was not fitted with a price feature");
        }
        return transform(static_cast<std::size_t>(idx), price);
    }

    // checkpoint support
    void set_raw(std::vector<Feature> features, std::vector<double> mins,
                 std::vector<double> maxs) {
        if (features.size() != mins.size() || mins.size() != maxs.size()) {
            throw std::invalid_argument("scaler raw size mismatch");
        }
        features_ = std::move(features);
        min_ = std::move(mins);
        max_ = std::move(maxs);
        fitted_ = !features_.empty();
    }

  private:
    void check_fitted() const {
        if (!fitted_) {
            throw std::runtime_error("scaler not fitted");
        }
    }

    bool fitted_ = false;
    std::vector<Feature> features_;
    std::vector<double> min_, max_;
};

// ---------------------------------------------------------------------------
// Sliding-window supervised datasets

/// Flattened sliding windows of scaled features with scalar future-price
/// labels. Labels stay in raw price units unless scale_labels was set; the
/// choice is recorded in labels_scaled.
struct WindowedDataset {
    std::vector<std::vector<double>> features;  // window_size * feature_count each
    std::vector<double> labels;
    std::size_t window_size = 0;
    std::size_t horizon = 0;
    bool labels_scaled = false;
    std::vector<Feature> feature_list;
};

struct WindowOptions {
    double smoothing_alpha = 0.0;  // 0 = off; applied to the price feature only
    bool scale_labels = false;
};

inline WindowedDataset build_windows(const MarketSeries& series, IndexRange range,
                                     const std::vector<Feature>& features,
                                     std::size_t window_size, std::size_t horizon,
                                     const ScalerParams& scaler, const WindowOptions& opts = {}) {
    if (window_size < 1 || horizon < 1) {
        throw std::invalid_argument("window_size and horizon must be >= 1");
    }
    if (range.end > series.size() || range.begin > range.end) {
        throw std::invalid_argument("window range out of bounds");
    }
    const std::size_t n = range.size();
    if (n < window_size + horizon) {
        throw std::invalid_argument("series too short: need at least window_size + horizon = " +
                                    std::to_string(window_size + horizon) + " records, got " +
                                    std::to_string(n));
    }
    std::vector<double> smoothed;
    if (opts.smoothing_alpha > 0.0) {
        // causal filter over the full series; windows then slice it
        smoothed = ewma_smooth(series.prices(), opts.smoothing_alpha);
    }
    WindowedDataset ds;
    ds.window_size = window_size;
    ds.horizon = horizon;
    ds.labels_scaled = opts.scale_labels;
    ds.feature_list = features;
    const std::size_t count = n - window_size - horizon + 1;
    ds.features.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t start = range.begin + s;
        std::vector<double> row;
        row.reserve(window_size * features.size());
        for (std::size_t i = 0; i < window_size; ++i) {
            const auto& rec = series.record(start + i);
            const double sp = opts.smoothing_alpha > 0.0 ? smoothed[start + i] : rec.price;
            for (std::size_t f = 0; f < features.size(); ++f) {
                row.push_back(scaler.transform(f, feature_value(rec, features[f], sp)));
            }
        }
        ds.features.push_back(std::move(row));
        const double label = series.price(start + window_size - 1 + horizon);
        ds.labels.push_back(opts.scale_labels ? scaler.transform_price(label) : label);
    }
    return ds;
}

inline WindowedDataset build_windows(const MarketSeries& series,
                                     const std::vector<Feature>& features, std::size_t window_size,
                                     std::size_t horizon, const ScalerParams& scaler,
                                     const WindowOptions& opts = {}) {
    return build_windows(series, series.full_range(), features, window_size, horizon, scaler,
                         opts);
}

}  // namespace arblab
