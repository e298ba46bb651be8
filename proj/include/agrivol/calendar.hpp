#pragma once

#include "agrivol/error.hpp"

#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdio>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace agrivol {

/// A calendar month. Ordered by (year, month).
struct MonthStamp {
    int year = 2000;
    int month = 1;  // 1..12

    friend constexpr auto operator<=>(const MonthStamp&, const MonthStamp&) = default;

    /// Months since year 0; convenient for arithmetic.
    [[nodiscard]] constexpr long ordinal() const noexcept {
        return static_cast<long>(year) * 12 + (month - 1);
    }

    [[nodiscard]] static constexpr MonthStamp from_ordinal(long ordinal) noexcept {
        long y = ordinal >= 0 ? ordinal / 12 : -((-ordinal + 11) / 12);
        return MonthStamp{static_cast<int>(y), static_cast<int>(ordinal - y * 12) + 1};
    }

    [[nodiscard]] constexpr MonthStamp plus(long months) const noexcept {
        return from_ordinal(ordinal() + months);
    }

    [[nodiscard]] constexpr MonthStamp next() const noexcept { return plus(1); }

    /// Signed number of months from `other` to *this.
    [[nodiscard]] constexpr long minus(const MonthStamp& other) const noexcept {
        return ordinal() - other.ordinal();
    }

    [[nodiscard]] std::string to_string() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }

    /// Parses `YYYY-MM`.
    [[nodiscard]] static MonthStamp parse(std::string_view text) {
        auto trim = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
            return s;
        };
        text = trim(text);
        const auto dash = text.find('-');
        MonthStamp m{0, 0};
        if (dash == std::string_view::npos || dash == 0 || dash + 1 >= text.size()) {
            fail(ErrorKind::data, "unparseable month '" + std::string(text) + "' (expected YYYY-MM)");
        }
        auto year_part = text.substr(0, dash);
        auto month_part = text.substr(dash + 1);
        auto r1 = std::from_chars(year_part.data(), year_part.data() + year_part.size(), m.year);
        auto r2 = std::from_chars(month_part.data(), month_part.data() + month_part.size(), m.month);
        if (r1.ec != std::errc{} || r1.ptr != year_part.data() + year_part.size() ||
            r2.ec != std::errc{} || r2.ptr != month_part.data() + month_part.size() ||
            m.month < 1 || m.month > 12) {
            fail(ErrorKind::data, "unparseable month '" + std::string(text) + "' (expected YYYY-MM)");
        }
        return m;
    }
};

/// Inclusive range of months.
struct MonthRange {
    MonthStamp first;
    MonthStamp last;

    [[nodiscard]] constexpr std::size_t size() const noexcept {
        return last < first ? 0 : static_cast<std::size_t>(last.minus(first) + 1);
    }
    [[nodiscard]] constexpr bool contains(const MonthStamp& m) const noexcept {
        return !(m < first) && !(last < m);
    }
    friend constexpr bool operator==(const MonthRange&, const MonthRange&) = default;
};

/// Contiguous monthly observations starting at `start()`.
///
/// There are no gaps by construction: element i belongs to month start + i.
class MonthlySeries {
public:
    MonthlySeries() = default;

    MonthlySeries(MonthStamp start, std::vector<double> values, std::string unit = "")
        : start_(start), values_(std::move(values)), unit_(std::move(unit)) {}

    [[nodiscard]] MonthStamp start() const noexcept { return start_; }
    [[nodiscard]] MonthStamp end() const noexcept {
        return start_.plus(static_cast<long>(values_.size()) - 1);
    }
    [[nodiscard]] MonthRange range() const noexcept { return {start_, end()}; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
    [[nodiscard]] const std::string& unit() const noexcept { return unit_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }

    [[nodiscard]] MonthStamp month_at(std::size_t i) const noexcept {
        return start_.plus(static_cast<long>(i));
    }

    [[nodiscard]] bool contains(const MonthStamp& m) const noexcept {
        return !empty() && range().contains(m);
    }

    [[nodiscard]] double at(const MonthStamp& m) const {
        require(contains(m), ErrorKind::argument, "month " + m.to_string() + " outside series");
        return values_[static_cast<std::size_t>(m.minus(start_))];
    }

    /// Sub-series over the inclusive month range.
    [[nodiscard]] MonthlySeries slice(MonthStamp first, MonthStamp last) const {
        require(contains(first) && contains(last) && !(last < first), ErrorKind::argument,
                "slice " + first.to_string() + ".." + last.to_string() + " outside series " +
                    start_.to_string() + ".." + end().to_string());
        const auto b = static_cast<std::ptrdiff_t>(first.minus(start_));
        const auto e = static_cast<std::ptrdiff_t>(last.minus(start_)) + 1;
        return {first, std::vector<double>(values_.begin() + b, values_.begin() + e), unit_};
    }

    /// Same calendar and unit, new values.
    [[nodiscard]] MonthlySeries with_values(std::vector<double> values) const {
        return {start_, std::move(values), unit_};
    }

    friend bool operator==(const MonthlySeries&, const MonthlySeries&) = default;

private:
    MonthStamp start_{};
    std::vector<double> values_;
    std::string unit_;
};

}  // namespace agrivol
