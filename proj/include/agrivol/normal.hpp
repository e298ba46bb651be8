#pragma once

#include <cmath>
#include <numbers>

namespace agrivol {

/// Standard normal CDF via the complementary error function. std::erfc is
/// accurate to a few ulp across the whole real line, including both tails.
[[nodiscard]] inline double norm_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

[[nodiscard]] inline double norm_pdf(double x) noexcept {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// ln of the N(0, variance) density at x.
[[nodiscard]] inline double normal_logpdf(double x, double variance) noexcept {
    return -0.5 * (std::log(2.0 * std::numbers::pi) + std::log(variance) + x * x / variance);
}

}  // namespace agrivol
