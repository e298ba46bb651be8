#pragma once

// CSV readers for prices, MSP and regional climate ensembles, plus the
// ensemble, anomaly and calendar-alignment helpers that turn them into
// gap-free monthly panels.

#include "agrivol/calendar.hpp"
#include "agrivol/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace agrivol::ingest {

namespace fs = std::filesystem;

struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based, per row

    [[nodiscard]] std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    }

    [[nodiscard]] std::size_t column(const std::string& name) const {
        const auto c = find(name);
        if (!c) fail(ErrorKind::data, path + ": missing required column '" + name + "'");
        return *c;
    }

    [[nodiscard]] std::string where(std::size_t row) const {
        return path + ":" + std::to_string(line_numbers[row]);
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Comma split with double-quote support ("" escapes a quote).
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace detail

[[nodiscard]] inline CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    CsvTable t;
    t.path = path.string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            fail(ErrorKind::data, t.path + ":" + std::to_string(lineno) + ": expected " +
                                      std::to_string(t.header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty()) fail(ErrorKind::data, t.path + ": empty file");
    if (t.rows.empty()) fail(ErrorKind::data, t.path + ": no data rows");
    return t;
}

[[nodiscard]] inline double parse_number(const std::string& s, const std::string& where) {
    if (s.empty()) fail(ErrorKind::data, where + ": empty numeric field");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
        fail(ErrorKind::data, where + ": cannot parse number '" + s + "'");
    }
    return v;
}

[[nodiscard]] inline MonthStamp parse_month(const std::string& s, const std::string& where) {
    try {
        return MonthStamp::parse(s);
    } catch (const Error& e) {
        fail(ErrorKind::data, where + ": " + e.what());
    }
}

/// Months strictly between consecutive keys that are absent.
[[nodiscard]] inline std::vector<MonthStamp> missing_months(const std::vector<MonthStamp>& sorted) {
    std::vector<MonthStamp> gaps;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        for (MonthStamp m = sorted[i - 1].next(); m < sorted[i]; m = m.next()) gaps.push_back(m);
    return gaps;
}

namespace detail {

inline std::string month_list(const std::vector<MonthStamp>& months, std::size_t limit = 12) {
    std::string s;
    for (std::size_t i = 0; i < months.size() && i < limit; ++i) s += (i ? ", " : "") + months[i].to_string();
    if (months.size() > limit) s += ", ... (" + std::to_string(months.size()) + " total)";
    return s;
}

}  // namespace detail

struct PriceOptions {
    bool average_duplicates = false;
    std::string unit = "INR/quintal";
};

/// `month,price[,market]`. Rows may come in any order; the result is gap-free
/// or the read fails.
[[nodiscard]] inline MonthlySeries read_price_csv(const fs::path& path, const PriceOptions& opt = {}) {
    const CsvTable t = read_csv(path);
    const std::size_t cm = t.column("month");
    const std::size_t cp = t.column("price");
    std::map<MonthStamp, std::vector<double>> by_month;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const MonthStamp m = parse_month(t.rows[r][cm], t.where(r));
        const double p = parse_number(t.rows[r][cp], t.where(r));
        if (!(p > 0.0)) fail(ErrorKind::data, t.where(r) + ": price must be positive, got " + t.rows[r][cp]);
        auto& bucket = by_month[m];
        if (!bucket.empty() && !opt.average_duplicates) {
            fail(ErrorKind::data, t.where(r) + ": duplicate month " + m.to_string() +
                                      " (enable duplicate averaging to merge)");
        }
        bucket.push_back(p);
    }
    std::vector<MonthStamp> keys;
    std::vector<double> values;
    for (const auto& [m, ps] : by_month) {
        keys.push_back(m);
        double s = 0.0;
        for (double p : ps) s += p;
        values.push_back(s / static_cast<double>(ps.size()));
    }
    const auto gaps = missing_months(keys);
    if (!gaps.empty()) fail(ErrorKind::data, t.path + ": gaps in price series: " + detail::month_list(gaps));
    return {keys.front(), std::move(values), opt.unit};
}

/// `effective_month,msp` expanded by forward fill over `calendar`.
[[nodiscard]] inline MonthlySeries read_msp_csv(const fs::path& path, const MonthRange& calendar,
                                                const std::string& unit = "INR/quintal") {
    const CsvTable t = read_csv(path);
    const std::size_t cm = t.column("effective_month");
    const std::size_t cv = t.column("msp");
    std::map<MonthStamp, double> revisions;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const MonthStamp m = parse_month(t.rows[r][cm], t.where(r));
        const double v = parse_number(t.rows[r][cv], t.where(r));
        if (!(v > 0.0)) fail(ErrorKind::data, t.where(r) + ": MSP must be positive");
        if (!revisions.emplace(m, v).second) fail(ErrorKind::data, t.where(r) + ": duplicate effective month " + m.to_string());
    }
    if (revisions.begin()->first > calendar.first) {
        fail(ErrorKind::data, t.path + ": no MSP record at or before " + calendar.first.to_string() +
                                  " (first is " + revisions.begin()->first.to_string() + ")");
    }
    std::vector<double> out;
    out.reserve(calendar.size());
    auto it = revisions.begin();
    double current = it->second;
    for (MonthStamp m = calendar.first; m <= calendar.last; m = m.next()) {
        while (it != revisions.end() && it->first <= m) current = (it++)->second;
        out.push_back(current);
    }
    return {calendar.first, std::move(out), unit};
}

enum class Variable { tasmax, tasmin, tas, pr };
enum class Scenario { historical, ssp245, ssp585 };

[[nodiscard]] inline const char* to_string(Variable v) noexcept {
    switch (v) {
        case Variable::tasmax: return "tasmax";
        case Variable::tasmin: return "tasmin";
        case Variable::tas: return "tas";
        case Variable::pr: return "pr";
    }
    return "?";
}

[[nodiscard]] inline const char* to_string(Scenario s) noexcept {
    switch (s) {
        case Scenario::historical: return "historical";
        case Scenario::ssp245: return "SSP2-4.5";
        case Scenario::ssp585: return "SSP5-8.5";
    }
    return "?";
}

[[nodiscard]] inline std::optional<Variable> parse_variable(const std::string& s) {
    for (Variable v : {Variable::tasmax, Variable::tasmin, Variable::tas, Variable::pr})
        if (s == to_string(v)) return v;
    return std::nullopt;
}

[[nodiscard]] inline std::optional<Scenario> parse_scenario(const std::string& s) {
    for (Scenario v : {Scenario::historical, Scenario::ssp245, Scenario::ssp585})
        if (s == to_string(v)) return v;
    return std::nullopt;
}

[[nodiscard]] inline const char* unit_of(Variable v) noexcept { return v == Variable::pr ? "mm/month" : "degC"; }

struct ClimateRecord {
    MonthStamp month;
    Variable variable = Variable::tasmax;
    Scenario scenario = Scenario::historical;
    std::string model;
    double value = 0.0;
};

struct ClimateData {
    std::vector<ClimateRecord> records;
    std::vector<std::string> warnings;
};

inline constexpr MonthRange kHistoricalSpan{{1970, 1}, {2015, 12}};
inline constexpr MonthRange kProjectionSpan{{2015, 1}, {2100, 12}};

/// `month,variable,scenario,model,value`.
[[nodiscard]] inline ClimateData read_climate_csv(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t cm = t.column("month"), cvar = t.column("variable"), cs = t.column("scenario"),
                      cmod = t.column("model"), cval = t.column("value");
    ClimateData out;
    out.records.reserve(t.rows.size());
    std::map<std::tuple<int, int, std::string, MonthStamp>, std::size_t> seen;
    std::size_t hist_outside = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        ClimateRecord rec;
        rec.month = parse_month(row[cm], t.where(r));
        const auto var = parse_variable(row[cvar]);
        if (!var) fail(ErrorKind::data, t.where(r) + ": unknown variable '" + row[cvar] + "' (expected tasmax, tasmin, tas or pr)");
        const auto scen = parse_scenario(row[cs]);
        if (!scen) fail(ErrorKind::data, t.where(r) + ": unknown scenario '" + row[cs] + "' (expected historical, SSP2-4.5 or SSP5-8.5)");
        rec.variable = *var;
        rec.scenario = *scen;
        rec.model = row[cmod];
        if (rec.model.empty()) fail(ErrorKind::data, t.where(r) + ": empty model label");
        rec.value = parse_number(row[cval], t.where(r));
        if (rec.scenario == Scenario::historical) {
            if (!kHistoricalSpan.contains(rec.month)) ++hist_outside;
        } else if (!kProjectionSpan.contains(rec.month)) {
            fail(ErrorKind::data, t.where(r) + ": " + std::string(to_string(rec.scenario)) + " month " +
                                      rec.month.to_string() + " outside 2015-01..2100-12");
        }
        const auto key = std::make_tuple(static_cast<int>(rec.variable), static_cast<int>(rec.scenario), rec.model, rec.month);
        if (!seen.emplace(key, r).second) {
            fail(ErrorKind::data, t.where(r) + ": duplicate record for " + rec.model + " " + row[cvar] + " " + row[cs] +
                                      " " + rec.month.to_string());
        }
        out.records.push_back(std::move(rec));
    }
    if (hist_outside > 0) {
        out.warnings.push_back(std::to_string(hist_outside) + " historical record(s) fall outside 1970-01..2015-12");
    }
    return out;
}

struct EnsembleSeries {
    MonthlySeries mean;
    std::vector<int> member_count;  // per month
    std::vector<std::string> models;
};

/// Unweighted per-month mean over every member reporting that month.
[[nodiscard]] inline EnsembleSeries ensemble_mean(const std::vector<ClimateRecord>& records, Variable variable,
                                                  Scenario scenario) {
    std::map<MonthStamp, std::pair<double, int>> acc;
    std::map<std::string, int> models;
    for (const auto& r : records) {
        if (r.variable != variable || r.scenario != scenario) continue;
        auto& a = acc[r.month];
        a.first += r.value;
        ++a.second;
        models[r.model] = 1;
    }
    const std::string label = std::string(to_string(variable)) + "/" + to_string(scenario);
    if (acc.empty()) fail(ErrorKind::data, "no ensemble members for " + label);
    std::vector<MonthStamp> keys;
    for (const auto& kv : acc) keys.push_back(kv.first);
    const auto gaps = missing_months(keys);
    if (!gaps.empty()) fail(ErrorKind::data, "no member reports " + label + " for " + detail::month_list(gaps));
    EnsembleSeries out;
    std::vector<double> v;
    for (const auto& [m, a] : acc) {
        v.push_back(a.first / a.second);
        out.member_count.push_back(a.second);
    }
    out.mean = MonthlySeries(keys.front(), std::move(v), unit_of(variable));
    for (const auto& kv : models) out.models.push_back(kv.first);
    return out;
}

enum class AnomalyMode { additive, multiplicative };

/// Departure from the per-calendar-month baseline climatology. The
/// multiplicative mode returns value / climatology - 1.
[[nodiscard]] inline MonthlySeries anomalies(const MonthlySeries& series, const MonthRange& baseline,
                                             AnomalyMode mode = AnomalyMode::additive) {
    require(baseline.size() >= 12, ErrorKind::argument, "anomaly baseline must cover at least 12 months");
    require(series.contains(baseline.first) && series.contains(baseline.last), ErrorKind::argument,
            "anomaly baseline " + baseline.first.to_string() + ".." + baseline.last.to_string() +
                " is not inside the series " + series.start().to_string() + ".." + series.end().to_string());
    double sum[12] = {};
    int count[12] = {};
    for (MonthStamp m = baseline.first; m <= baseline.last; m = m.next()) {
        sum[m.month - 1] += series.at(m);
        ++count[m.month - 1];
    }
    double clim[12];
    for (int i = 0; i < 12; ++i) clim[i] = sum[i] / count[i];
    std::vector<double> out(series.size());
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double c = clim[series.month_at(t).month - 1];
        if (mode == AnomalyMode::additive) {
            out[t] = series[t] - c;
        } else {
            require(c != 0.0, ErrorKind::domain, "zero climatology in multiplicative anomaly");
            out[t] = series[t] / c - 1.0;
        }
    }
    return series.with_values(std::move(out));
}

struct AlignmentReport {
    MonthRange common;
    std::vector<std::string> names;
    std::vector<long> dropped_before;  // months trimmed from the front of each series
    std::vector<long> dropped_after;
};

struct AlignedPanel {
    std::vector<MonthlySeries> series;
    AlignmentReport report;
};

/// Trims every series to the intersection of their calendars.
[[nodiscard]] inline AlignedPanel align_panel(const std::vector<MonthlySeries>& series,
                                              std::vector<std::string> names = {}, long min_months = 24) {
    require(series.size() >= 2, ErrorKind::argument, "alignment needs at least two series");
    if (names.empty())
        for (std::size_t i = 0; i < series.size(); ++i) names.push_back("series[" + std::to_string(i) + "]");
    require(names.size() == series.size(), ErrorKind::argument, "one name per series is required");
    MonthStamp first = series[0].start(), last = series[0].end();
    for (const auto& s : series) {
        first = std::max(first, s.start());
        last = std::min(last, s.end());
    }
    if (last < first) fail(ErrorKind::data, "calendars of the panel do not overlap");
    const long n = last.minus(first) + 1;
    if (n < min_months) {
        fail(ErrorKind::data, "panel overlap " + first.to_string() + ".." + last.to_string() + " is only " +
                                  std::to_string(n) + " months (need " + std::to_string(min_months) + ")");
    }
    AlignedPanel out;
    out.report.common = {first, last};
    out.report.names = std::move(names);
    for (const auto& s : series) {
        out.series.push_back(s.slice(first, last));
        out.report.dropped_before.push_back(first.minus(s.start()));
        out.report.dropped_after.push_back(s.end().minus(last));
    }
    return out;
}

inline constexpr MonthStamp kScenarioBoundary{2015, 1};

/// Historical values before `boundary`, scenario values from `boundary` on.
[[nodiscard]] inline MonthlySeries join_scenario(const MonthlySeries& historical, const MonthlySeries& scenario,
                                                 MonthStamp boundary = kScenarioBoundary) {
    require(historical.start() < boundary && historical.end() >= boundary.plus(-1), ErrorKind::data,
            "historical climate must cover the months before " + boundary.to_string());
    require(scenario.start() <= boundary && scenario.end() >= boundary, ErrorKind::data,
            "scenario climate must start by " + boundary.to_string());
    std::vector<double> v = historical.slice(historical.start(), boundary.plus(-1)).values();
    const auto tail = scenario.slice(boundary, scenario.end()).values();
    v.insert(v.end(), tail.begin(), tail.end());
    return {historical.start(), std::move(v), historical.unit()};
}

struct BundleManifest {
    std::string crop;
    std::string state;
    std::map<std::string, std::string> units;
    std::map<std::string, std::string> provenance;
    std::string prices = "prices.csv";
    std::string msp = "msp.csv";
    std::string climate = "climate.csv";
};

/// Reads `manifest.json` from a dataset bundle directory.
[[nodiscard]] inline BundleManifest read_bundle_manifest(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    std::ifstream in(p);
    if (!in) fail(ErrorKind::io, "cannot open " + p.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, p.string() + ": " + e.what());
    }
    BundleManifest m;
    try {
        m.crop = j.at("crop").get<std::string>();
        m.state = j.at("state").get<std::string>();
        if (j.contains("units")) m.units = j.at("units").get<std::map<std::string, std::string>>();
        if (j.contains("provenance")) m.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
        if (j.contains("files")) {
            const auto& f = j.at("files");
            m.prices = f.value("prices", m.prices);
            m.msp = f.value("msp", m.msp);
            m.climate = f.value("climate", m.climate);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, p.string() + ": " + e.what());
    }
    return m;
}

}  // namespace agrivol::ingest
