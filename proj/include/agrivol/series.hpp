#pragma once

// Monthly series transforms: returns, rolling statistics, bands, smoothing,
// and trend tests.

#include "agrivol/calendar.hpp"
#include "agrivol/error.hpp"
#include "agrivol/normal.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace agrivol {

enum class WindowAlignment {
    trailing,  // value at month t summarizes t-w+1 .. t
    centered,  // value at month t summarizes t-(w-1)/2 .. t+w/2
};

enum class WidthRule {
    k_sigma,           // mean +/- k * std
    log_sigma_factor,  // mean * exp(+/- k * std(ln x))
};

enum class TrendDirection { increasing, decreasing, none };

[[nodiscard]] inline const char* to_string(TrendDirection d) noexcept {
    switch (d) {
        case TrendDirection::increasing: return "increasing";
        case TrendDirection::decreasing: return "decreasing";
        case TrendDirection::none: return "none";
    }
    return "none";
}

struct TrendResult {
    long s_statistic = 0;
    double variance_s = 0.0;
    double z_score = 0.0;
    double p_value = 1.0;
    TrendDirection direction = TrendDirection::none;
};

struct BandSeries {
    MonthlySeries center;
    MonthlySeries lower;
    MonthlySeries upper;
    int window = 0;
    WidthRule width_rule = WidthRule::k_sigma;
};

struct LinearTrend {
    double slope = 0.0;      // per month
    double intercept = 0.0;  // value at index 0
};

/// r_t = ln p_t - ln p_{t-1}. Output starts one month after the input.
[[nodiscard]] inline MonthlySeries log_returns(const MonthlySeries& prices) {
    require(prices.size() >= 2, ErrorKind::insufficient_data,
            "log returns need at least 2 prices, got " + std::to_string(prices.size()));
    std::vector<double> out;
    out.reserve(prices.size() - 1);
    for (std::size_t i = 0; i < prices.size(); ++i) {
        if (!(prices[i] > 0.0) || !std::isfinite(prices[i])) {
            fail(ErrorKind::domain, "non-positive price " + std::to_string(prices[i]) + " at month " +
                                        prices.month_at(i).to_string() + " (index " +
                                        std::to_string(i + 1) + ")");
        }
        if (i > 0) out.push_back(std::log(prices[i]) - std::log(prices[i - 1]));
    }
    return {prices.start().next(), std::move(out), "dimensionless"};
}

namespace detail {

inline long window_offset(int window, WindowAlignment align) noexcept {
    return align == WindowAlignment::trailing ? window - 1 : (window - 1) / 2;
}

}  // namespace detail

/// Rolling mean and sample (n-1) standard deviation. Each window is summed
/// directly so the result does not drift over long series.
[[nodiscard]] inline std::pair<MonthlySeries, MonthlySeries> rolling_mean_std(
    const MonthlySeries& series, int window, WindowAlignment align = WindowAlignment::trailing) {
    require(window >= 2, ErrorKind::argument, "rolling window must be >= 2");
    require(series.size() >= static_cast<std::size_t>(window), ErrorKind::insufficient_data,
            "rolling window " + std::to_string(window) + " exceeds series length " +
                std::to_string(series.size()));
    const auto w = static_cast<std::size_t>(window);
    const std::size_t count = series.size() - w + 1;
    std::vector<double> means(count), stds(count);
    const auto& x = series.values();
    for (std::size_t j = 0; j < count; ++j) {
        double sum = 0.0;
        for (std::size_t i = j; i < j + w; ++i) sum += x[i];
        const double mean = sum / static_cast<double>(w);
        double ss = 0.0;
        for (std::size_t i = j; i < j + w; ++i) ss += (x[i] - mean) * (x[i] - mean);
        means[j] = mean;
        stds[j] = std::sqrt(ss / static_cast<double>(w - 1));
    }
    const MonthStamp first = series.start().plus(detail::window_offset(window, align));
    return {MonthlySeries(first, std::move(means), series.unit()),
            MonthlySeries(first, std::move(stds), series.unit())};
}

/// Rolling envelope. `k_sigma` gives Bollinger-style bands; `log_sigma_factor`
/// gives multiplicative bands suited to skewed positive data such as rainfall.
[[nodiscard]] inline BandSeries band(const MonthlySeries& series, int window, WidthRule rule, double k,
                                     WindowAlignment align = WindowAlignment::trailing) {
    require(k > 0.0, ErrorKind::argument, "band multiplier k must be positive");
    auto [mean, sd] = rolling_mean_std(series, window, align);
    std::vector<double> lo(mean.size()), hi(mean.size());
    if (rule == WidthRule::k_sigma) {
        for (std::size_t i = 0; i < mean.size(); ++i) {
            lo[i] = mean[i] - k * sd[i];
            hi[i] = mean[i] + k * sd[i];
        }
    } else {
        std::vector<double> logs(series.size());
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (!(series[i] > 0.0)) {
                fail(ErrorKind::domain, "log-sigma band needs positive values; got " +
                                            std::to_string(series[i]) + " at " +
                                            series.month_at(i).to_string());
            }
            logs[i] = std::log(series[i]);
        }
        auto log_sd = rolling_mean_std(series.with_values(std::move(logs)), window, align).second;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double f = std::exp(k * log_sd[i]);
            lo[i] = mean[i] / f;
            hi[i] = mean[i] * f;
        }
    }
    BandSeries out{mean, mean.with_values(std::move(lo)), mean.with_values(std::move(hi)), window, rule};
    return out;
}

/// Mann-Kendall monotone trend test with tie-corrected variance and a
/// continuity-corrected two-sided normal p-value.
[[nodiscard]] inline TrendResult mann_kendall(const MonthlySeries& series, double alpha = 0.05) {
    const std::size_t n = series.size();
    require(n >= 4, ErrorKind::insufficient_data,
            "Mann-Kendall needs at least 4 observations, got " + std::to_string(n));
    const auto& x = series.values();
    long s = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            s += (x[j] > x[i]) - (x[j] < x[i]);
        }
    }
    std::vector<double> sorted(x);
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j;
    }
    const double nd = static_cast<double>(n);
    TrendResult r;
    r.s_statistic = s;
    r.variance_s = (nd * (nd - 1.0) * (2.0 * nd + 5.0) - tie_term) / 18.0;
    if (s > 0 && r.variance_s > 0.0) {
        r.z_score = (static_cast<double>(s) - 1.0) / std::sqrt(r.variance_s);
    } else if (s < 0 && r.variance_s > 0.0) {
        r.z_score = (static_cast<double>(s) + 1.0) / std::sqrt(r.variance_s);
    }
    r.p_value = std::min(1.0, 2.0 * norm_cdf(-std::fabs(r.z_score)));
    if (r.p_value < alpha) {
        r.direction = s > 0 ? TrendDirection::increasing : TrendDirection::decreasing;
    }
    return r;
}

/// OLS line through (t, x_t), t = 0..n-1.
[[nodiscard]] inline LinearTrend ols_trend(const MonthlySeries& series) {
    const std::size_t n = series.size();
    require(n >= 2, ErrorKind::insufficient_data, "linear trend needs at least 2 observations");
    const double tbar = (static_cast<double>(n) - 1.0) / 2.0;
    double xbar = 0.0;
    for (double v : series.values()) xbar += v;
    xbar /= static_cast<double>(n);
    double sxy = 0.0, stt = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double dt = static_cast<double>(t) - tbar;
        sxy += dt * (series[t] - xbar);
        stt += dt * dt;
    }
    const double slope = sxy / stt;
    return {slope, xbar - slope * tbar};
}

/// Centered moving average; near the ends the window shrinks symmetrically so
/// the output keeps the input calendar.
[[nodiscard]] inline MonthlySeries smooth(const MonthlySeries& series, int window) {
    require(window >= 1 && window % 2 == 1, ErrorKind::argument,
            "smoothing window must be odd, got " + std::to_string(window));
    const auto n = static_cast<long>(series.size());
    const long half = window / 2;
    std::vector<double> out(series.size());
    for (long i = 0; i < n; ++i) {
        const long h = std::min({half, i, n - 1 - i});
        double sum = 0.0;
        for (long j = i - h; j <= i + h; ++j) sum += series[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = sum / static_cast<double>(2 * h + 1);
    }
    return series.with_values(std::move(out));
}

/// Sample variance (n-1 divisor).
[[nodiscard]] inline double sample_variance(const std::vector<double>& x) {
    require(x.size() >= 2, ErrorKind::insufficient_data, "variance needs at least 2 values");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(x.size() - 1);
}

}  // namespace agrivol
