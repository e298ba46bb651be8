#pragma once

// Black-Scholes valuation of European options and the MSP-linked premium
// series built from monthly volatility forecasts.

#include "agrivol/calendar.hpp"
#include "agrivol/error.hpp"
#include "agrivol/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace agrivol::pricing {

inline constexpr double kVolFloor = 1e-6;

struct Inputs {
    double spot = 0.0;      // S0
    double strike = 0.0;    // K
    double rate = 0.0;      // continuously compounded, per annum
    double vol = 0.0;       // annualized
    double maturity = 1.0;  // years
};

struct Quote {
    double price = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    Inputs inputs;
};

namespace detail {

inline void validate(const Inputs& in) {
    require(std::isfinite(in.spot) && in.spot > 0.0, ErrorKind::argument, "spot must be positive");
    require(std::isfinite(in.strike) && in.strike > 0.0, ErrorKind::argument, "strike must be positive");
    require(std::isfinite(in.maturity) && in.maturity > 0.0, ErrorKind::argument, "maturity must be positive");
    require(std::isfinite(in.rate), ErrorKind::argument, "rate must be finite");
    require(std::isfinite(in.vol) && in.vol >= 0.0, ErrorKind::argument, "volatility must be >= 0");
}

/// d1, d2; for zero volatility they are +/-inf by the sign of the forward moneyness.
inline std::pair<double, double> d_terms(const Inputs& in) {
    const double sqrt_t = std::sqrt(in.maturity);
    const double drift = std::log(in.spot / in.strike) + in.rate * in.maturity;
    if (in.vol == 0.0) {
        const double inf = std::numeric_limits<double>::infinity();
        const double d = drift > 0.0 ? inf : (drift < 0.0 ? -inf : 0.0);
        return {d, d};
    }
    const double d1 = (drift + 0.5 * in.vol * in.vol * in.maturity) / (in.vol * sqrt_t);
    return {d1, d1 - in.vol * sqrt_t};
}

inline Quote finish(double price, const Inputs& in, std::pair<double, double> d) {
    if (!std::isfinite(price)) fail(ErrorKind::numeric, "non-finite option price");
    return {price, d.first, d.second, in};
}

}  // namespace detail

/// European put: P = K e^{-rT} N(-d2) - S0 N(-d1). Zero volatility gives the
/// discounted intrinsic value.
[[nodiscard]] inline Quote bs_put(const Inputs& in) {
    detail::validate(in);
    const double disc_k = in.strike * std::exp(-in.rate * in.maturity);
    const auto d = detail::d_terms(in);
    if (in.vol == 0.0) return detail::finish(std::max(disc_k - in.spot, 0.0), in, d);
    return detail::finish(disc_k * norm_cdf(-d.second) - in.spot * norm_cdf(-d.first), in, d);
}

/// European call: C = S0 N(d1) - K e^{-rT} N(d2).
[[nodiscard]] inline Quote bs_call(const Inputs& in) {
    detail::validate(in);
    const double disc_k = in.strike * std::exp(-in.rate * in.maturity);
    const auto d = detail::d_terms(in);
    if (in.vol == 0.0) return detail::finish(std::max(in.spot - disc_k, 0.0), in, d);
    return detail::finish(in.spot * norm_cdf(d.first) - disc_k * norm_cdf(d.second), in, d);
}

[[nodiscard]] inline double annualize_vol(double sigma_monthly) {
    require(sigma_monthly >= 0.0, ErrorKind::argument, "monthly volatility must be >= 0");
    return sigma_monthly * std::sqrt(12.0);
}

[[nodiscard]] inline double deannualize_vol(double sigma_annual) {
    require(sigma_annual >= 0.0, ErrorKind::argument, "annual volatility must be >= 0");
    return sigma_annual / std::sqrt(12.0);
}

struct PremiumSeries {
    MonthRange months;
    std::string scenario;
    std::vector<Quote> quotes;
    std::vector<std::string> phases;  // one per month, may be empty
    std::vector<double> vol_monthly;
};

/// One put quote per month with S0 = spot_t, K = msp_t, sigma = annualized
/// vol_t. Volatility is taken as given; flooring happens upstream.
[[nodiscard]] inline PremiumSeries premium_series(const MonthlySeries& spot, const MonthlySeries& msp,
                                                  const MonthlySeries& vol, double rate, double maturity_years,
                                                  std::string scenario = "", std::vector<std::string> phases = {}) {
    auto aligned = [&](const MonthlySeries& s, const char* name) {
        require(s.range() == spot.range() && !s.empty(), ErrorKind::argument,
                std::string("premium inputs misaligned: series '") + name + "' covers " + s.start().to_string() +
                    ".." + s.end().to_string() + " but spot covers " + spot.start().to_string() + ".." +
                    spot.end().to_string());
    };
    require(!spot.empty(), ErrorKind::argument, "premium inputs misaligned: series 'spot' is empty");
    aligned(msp, "msp");
    aligned(vol, "vol");
    require(phases.empty() || phases.size() == spot.size(), ErrorKind::argument,
            "premium inputs misaligned: series 'phase' length differs from spot");
    PremiumSeries out;
    out.months = spot.range();
    out.scenario = std::move(scenario);
    out.phases = std::move(phases);
    out.vol_monthly = vol.values();
    out.quotes.reserve(spot.size());
    for (std::size_t t = 0; t < spot.size(); ++t) {
        out.quotes.push_back(bs_put({spot[t], msp[t], rate, annualize_vol(vol[t]), maturity_years}));
    }
    return out;
}

}  // namespace agrivol::pricing
