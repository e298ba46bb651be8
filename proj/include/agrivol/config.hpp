#pragma once

// Pipeline configuration: JSON schema, defaults, validation.

#include "agrivol/calendar.hpp"
#include "agrivol/egarch.hpp"
#include "agrivol/error.hpp"
#include "agrivol/ingest.hpp"
#include "agrivol/sarimax.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agrivol {

namespace fs = std::filesystem;

inline constexpr int kConfigVersion = 1;

enum class SpotPolicy { hold_last, linear_trend, path };
enum class MspPolicy { hold_last, growth };

[[nodiscard]] inline const char* to_string(SpotPolicy p) noexcept {
    switch (p) {
        case SpotPolicy::hold_last: return "hold-last";
        case SpotPolicy::linear_trend: return "linear-trend";
        case SpotPolicy::path: return "path";
    }
    return "hold-last";
}

[[nodiscard]] inline const char* to_string(MspPolicy p) noexcept {
    return p == MspPolicy::growth ? "growth" : "hold-last";
}

struct ExogSpec {
    ingest::Variable variable = ingest::Variable::tasmax;
    bool anomaly = false;
    ingest::AnomalyMode mode = ingest::AnomalyMode::additive;

    [[nodiscard]] std::string name() const { return ingest::to_string(variable); }
};

struct PricingConfig {
    double rate = 0.07;
    double maturity_years = 1.0;
    SpotPolicy spot_policy = SpotPolicy::hold_last;
    fs::path spot_path;  // for SpotPolicy::path
    MspPolicy msp_policy = MspPolicy::hold_last;
    double msp_growth = 0.0;  // per year, for MspPolicy::growth
};

struct BandConfig {
    int price_window = 20;
    double price_k = 2.0;
    int climate_window = 12;
    double temperature_k = 1.0;
    double precipitation_k = 1.0;
};

struct PipelineConfig {
    fs::path source;  // config file, for messages
    fs::path prices, msp, climate;
    std::string crop, state;
    bool average_duplicate_prices = false;

    egarch::Orders egarch_orders{1, 1, 1};
    bool egarch_auto = false;
    int egarch_max_order = 2;

    sarimax::Orders sarimax_orders{};
    bool sarimax_auto = false;
    sarimax::OrderGrid sarimax_grid{};
    bool log_dependent = false;

    double validation_fraction = 0.2;
    std::vector<ExogSpec> exog{{ingest::Variable::tasmax}, {ingest::Variable::pr}};
    MonthRange baseline{{1970, 1}, {2014, 12}};
    MonthStamp scenario_boundary = ingest::kScenarioBoundary;
    std::vector<std::string> scenarios{"SSP2-4.5", "SSP5-8.5"};
    PricingConfig pricing;
    BandConfig bands;
    int smoothing_window = 25;
    MonthStamp horizon_end{2100, 12};
    fs::path output_dir = "out";
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<std::string> exog_names() const {
        std::vector<std::string> out;
        for (const auto& e : exog) out.push_back(e.name());
        return out;
    }
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_error(const fs::path& src, const std::string& msg) {
    fail(ErrorKind::config, src.string() + ": " + msg);
}

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where,
                       const fs::path& src) {
    if (!j.is_object()) config_error(src, where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) config_error(src, "unknown key '" + k + "' in " + where);
    }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

/// Either a single order or an inclusive [lo, hi] pair; malformed input
/// yields an invalid range that validation rejects.
inline sarimax::OrderRange order_range(const json& j) {
    if (j.is_number_integer()) return {j.get<int>(), j.get<int>()};
    const auto v = j.get<std::vector<int>>();
    return v.size() == 2 ? sarimax::OrderRange{v[0], v[1]} : sarimax::OrderRange{-1, -1};
}

inline MonthStamp month_field(const json& j, const std::string& key, const fs::path& src) {
    try {
        return MonthStamp::parse(j.get<std::string>());
    } catch (const Error&) {
        config_error(src, key + " must be a YYYY-MM month");
    }
}

inline void parse_dataset(const json& d, const fs::path& base, PipelineConfig& c) {
    check_keys(d, {"bundle", "prices", "msp", "climate", "average_duplicate_prices"}, "dataset", c.source);
    if (d.contains("bundle")) {
        const fs::path dir = resolve(base, d.at("bundle").get<std::string>());
        if (!fs::is_directory(dir)) config_error(c.source, "dataset bundle directory not found: " + dir.string());
        ingest::BundleManifest m;
        try {
            m = ingest::read_bundle_manifest(dir);
        } catch (const Error& e) {
            config_error(c.source, e.what());
        }
        c.prices = dir / m.prices;
        c.msp = dir / m.msp;
        c.climate = dir / m.climate;
        c.crop = m.crop;
        c.state = m.state;
    }
    if (d.contains("prices")) c.prices = resolve(base, d.at("prices").get<std::string>());
    if (d.contains("msp")) c.msp = resolve(base, d.at("msp").get<std::string>());
    if (d.contains("climate")) c.climate = resolve(base, d.at("climate").get<std::string>());
    c.average_duplicate_prices = d.value("average_duplicate_prices", false);
}

inline void parse_exog(const json& e, PipelineConfig& c) {
    check_keys(e, {"variables", "transform", "anomaly_mode", "baseline"}, "exog", c.source);
    auto transform = [&](const json& j, ExogSpec& spec) {
        const std::string t = j.get<std::string>();
        if (t == "raw") spec.anomaly = false;
        else if (t == "anomaly") spec.anomaly = true;
        else config_error(c.source, "exog transform must be 'raw' or 'anomaly', got '" + t + "'");
    };
    auto mode = [&](const json& j, ExogSpec& spec) {
        const std::string m = j.get<std::string>();
        if (m == "additive") spec.mode = ingest::AnomalyMode::additive;
        else if (m == "multiplicative") spec.mode = ingest::AnomalyMode::multiplicative;
        else config_error(c.source, "anomaly_mode must be 'additive' or 'multiplicative', got '" + m + "'");
    };
    ExogSpec defaults;
    if (e.contains("transform")) transform(e.at("transform"), defaults);
    if (e.contains("anomaly_mode")) mode(e.at("anomaly_mode"), defaults);
    if (e.contains("variables")) {
        c.exog.clear();
        for (const auto& v : e.at("variables")) {
            ExogSpec spec = defaults;
            const json name = v.is_object() ? v.at("name") : v;
            const auto var = ingest::parse_variable(name.get<std::string>());
            if (!var) config_error(c.source, "unknown exog variable '" + name.get<std::string>() + "'");
            spec.variable = *var;
            if (v.is_object()) {
                check_keys(v, {"name", "transform", "anomaly_mode"}, "exog variable", c.source);
                if (v.contains("transform")) transform(v.at("transform"), spec);
                if (v.contains("anomaly_mode")) mode(v.at("anomaly_mode"), spec);
            }
            for (const auto& prev : c.exog)
                if (prev.variable == spec.variable) config_error(c.source, "exog variable listed twice: " + spec.name());
            c.exog.push_back(spec);
        }
    } else {
        for (auto& spec : c.exog) {
            spec.anomaly = defaults.anomaly;
            spec.mode = defaults.mode;
        }
    }
    if (e.contains("baseline")) {
        const auto& b = e.at("baseline");
        check_keys(b, {"first", "last"}, "exog.baseline", c.source);
        c.baseline = {month_field(b.at("first"), "exog.baseline.first", c.source),
                      month_field(b.at("last"), "exog.baseline.last", c.source)};
    }
}

inline void parse_pricing(const json& p, const fs::path& base, PipelineConfig& c) {
    check_keys(p, {"rate", "maturity_years", "spot_policy", "spot_path", "msp_policy", "msp_growth"}, "pricing",
               c.source);
    auto& pr = c.pricing;
    pr.rate = p.value("rate", pr.rate);
    pr.maturity_years = p.value("maturity_years", pr.maturity_years);
    const std::string sp = p.value("spot_policy", std::string("hold-last"));
    if (sp == "hold-last") pr.spot_policy = SpotPolicy::hold_last;
    else if (sp == "linear-trend") pr.spot_policy = SpotPolicy::linear_trend;
    else if (sp == "path") pr.spot_policy = SpotPolicy::path;
    else config_error(c.source, "pricing.spot_policy must be hold-last, linear-trend or path");
    if (p.contains("spot_path")) pr.spot_path = resolve(base, p.at("spot_path").get<std::string>());
    const std::string mp = p.value("msp_policy", std::string("hold-last"));
    if (mp == "hold-last") pr.msp_policy = MspPolicy::hold_last;
    else if (mp == "growth") pr.msp_policy = MspPolicy::growth;
    else config_error(c.source, "pricing.msp_policy must be hold-last or growth");
    pr.msp_growth = p.value("msp_growth", pr.msp_growth);
}

inline void validate(const PipelineConfig& c) {
    const auto& src = c.source;
    if (c.prices.empty() || c.msp.empty() || c.climate.empty())
        config_error(src, "dataset must name prices, msp and climate files (directly or through a bundle)");
    for (const auto& [label, path] : {std::pair{"prices", c.prices}, {"msp", c.msp}, {"climate", c.climate}}) {
        if (!fs::is_regular_file(path)) config_error(src, std::string(label) + " file not found: " + path.string());
    }
    if (c.egarch_orders.p < 1 || c.egarch_orders.o < 0 || c.egarch_orders.q < 1 || c.egarch_orders.p > 3 ||
        c.egarch_orders.o > 3 || c.egarch_orders.q > 3)
        config_error(src, "egarch orders must satisfy 1 <= p,q <= 3 and 0 <= o <= 3");
    if (c.egarch_max_order < 1 || c.egarch_max_order > 3) config_error(src, "egarch.max_order must be in 1..3");
    try {
        c.sarimax_orders.validate();
    } catch (const Error& e) {
        config_error(src, e.what());
    }
    if (c.sarimax_orders.s != 12) config_error(src, "sarimax seasonal period must be 12 for monthly data");
    if (!(c.validation_fraction > 0.0 && c.validation_fraction <= 0.5))
        config_error(src, "validation_fraction must lie in (0, 0.5]");
    if (c.exog.empty()) config_error(src, "at least one exog variable is required");
    if (c.baseline.last < c.baseline.first || c.baseline.size() < 12)
        config_error(src, "exog.baseline must span at least 12 months");
    if (c.scenarios.empty()) config_error(src, "at least one scenario is required");
    std::set<std::string> seen;
    for (const auto& s : c.scenarios) {
        if (s != "SSP2-4.5" && s != "SSP5-8.5") config_error(src, "scenario must be SSP2-4.5 or SSP5-8.5, got '" + s + "'");
        if (!seen.insert(s).second) config_error(src, "scenario listed twice: " + s);
    }
    const auto& p = c.pricing;
    if (!(p.maturity_years > 0.0) || !std::isfinite(p.rate)) config_error(src, "pricing needs maturity_years > 0 and a finite rate");
    if (p.spot_policy == SpotPolicy::path && !fs::is_regular_file(p.spot_path))
        config_error(src, "pricing.spot_path file not found: " + p.spot_path.string());
    if (!(p.msp_growth > -1.0) || !std::isfinite(p.msp_growth)) config_error(src, "pricing.msp_growth must exceed -1");
    if (c.smoothing_window < 1 || c.smoothing_window % 2 == 0) config_error(src, "smoothing_window must be a positive odd number");
    if (c.bands.price_window < 2 || c.bands.climate_window < 2) config_error(src, "band windows must be >= 2");
    if (!(c.bands.price_k > 0 && c.bands.temperature_k > 0 && c.bands.precipitation_k > 0))
        config_error(src, "band multipliers must be positive");
    if (c.horizon_end > ingest::kProjectionSpan.last) config_error(src, "horizon_end cannot pass 2100-12");
}

}  // namespace detail

/// Parses and validates a JSON configuration. Relative paths resolve against
/// the directory holding the config file. Every failure is a config error.
[[nodiscard]] inline PipelineConfig load_config(const fs::path& path) {
    using detail::json;
    PipelineConfig c;
    c.source = path;
    std::ifstream in(path);
    if (!in) detail::config_error(path, "cannot open config file");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        detail::config_error(path, std::string("invalid JSON: ") + e.what());
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    try {
        detail::check_keys(j,
                           {"config_version", "dataset", "crop", "state", "egarch", "sarimax", "validation_fraction",
                            "exog", "scenarios", "scenario_boundary", "pricing", "bands", "smoothing_window",
                            "horizon_end", "output_dir", "seed"},
                           "config", path);
        if (!j.contains("config_version")) detail::config_error(path, "missing config_version");
        if (j.at("config_version").get<int>() != kConfigVersion)
            detail::config_error(path, "unsupported config_version " + j.at("config_version").dump() +
                                           " (expected " + std::to_string(kConfigVersion) + ")");
        if (!j.contains("dataset")) detail::config_error(path, "missing dataset section");
        detail::parse_dataset(j.at("dataset"), base, c);
        c.crop = j.value("crop", c.crop);
        c.state = j.value("state", c.state);

        if (j.contains("egarch")) {
            const auto& e = j.at("egarch");
            detail::check_keys(e, {"orders", "auto", "max_order"}, "egarch", path);
            if (e.contains("orders")) {
                const auto& o = e.at("orders");
                detail::check_keys(o, {"p", "o", "q"}, "egarch.orders", path);
                c.egarch_orders = {o.value("p", 1), o.value("o", 1), o.value("q", 1)};
            }
            c.egarch_auto = e.value("auto", c.egarch_auto);
            c.egarch_max_order = e.value("max_order", c.egarch_max_order);
        }
        if (j.contains("sarimax")) {
            const auto& s = j.at("sarimax");
            detail::check_keys(s, {"orders", "auto", "grid", "log_dependent"}, "sarimax", path);
            if (s.contains("orders")) {
                const auto& o = s.at("orders");
                detail::check_keys(o, {"p", "m", "q", "P", "M", "Q", "s"}, "sarimax.orders", path);
                auto& so = c.sarimax_orders;
                so = {o.value("p", so.p), o.value("m", so.m), o.value("q", so.q), o.value("P", so.P),
                      o.value("M", so.M), o.value("Q", so.Q), o.value("s", so.s)};
            }
            c.sarimax_auto = s.value("auto", c.sarimax_auto);
            c.log_dependent = s.value("log_dependent", c.log_dependent);
            if (s.contains("grid")) {
                const auto& g = s.at("grid");
                detail::check_keys(g, {"p", "m", "q", "P", "M", "Q"}, "sarimax.grid", path);
                auto& gr = c.sarimax_grid;
                if (g.contains("p")) gr.p = detail::order_range(g.at("p"));
                if (g.contains("m")) gr.m = detail::order_range(g.at("m"));
                if (g.contains("q")) gr.q = detail::order_range(g.at("q"));
                if (g.contains("P")) gr.P = detail::order_range(g.at("P"));
                if (g.contains("M")) gr.M = detail::order_range(g.at("M"));
                if (g.contains("Q")) gr.Q = detail::order_range(g.at("Q"));
                auto ok = [](sarimax::OrderRange r, int cap) { return r.lo >= 0 && r.lo <= r.hi && r.hi <= cap; };
                if (!(ok(gr.p, 2) && ok(gr.q, 2) && ok(gr.P, 2) && ok(gr.Q, 2) && ok(gr.m, 1) && ok(gr.M, 1)))
                    detail::config_error(path, "sarimax.grid ranges must be [lo, hi] with p,q,P,Q <= 2 and m,M <= 1");
            }
        }
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        if (j.contains("exog")) detail::parse_exog(j.at("exog"), c);
        if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
        if (j.contains("scenario_boundary"))
            c.scenario_boundary = detail::month_field(j.at("scenario_boundary"), "scenario_boundary", path);
        if (j.contains("pricing")) detail::parse_pricing(j.at("pricing"), base, c);
        if (j.contains("bands")) {
            const auto& b = j.at("bands");
            detail::check_keys(b, {"price_window", "price_k", "climate_window", "temperature_k", "precipitation_k"},
                               "bands", path);
            c.bands.price_window = b.value("price_window", c.bands.price_window);
            c.bands.price_k = b.value("price_k", c.bands.price_k);
            c.bands.climate_window = b.value("climate_window", c.bands.climate_window);
            c.bands.temperature_k = b.value("temperature_k", c.bands.temperature_k);
            c.bands.precipitation_k = b.value("precipitation_k", c.bands.precipitation_k);
        }
        c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
        if (j.contains("horizon_end")) c.horizon_end = detail::month_field(j.at("horizon_end"), "horizon_end", path);
        if (j.contains("output_dir")) c.output_dir = detail::resolve(base, j.at("output_dir").get<std::string>());
        else c.output_dir = detail::resolve(base, "out");
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        detail::config_error(path, std::string("bad value: ") + e.what());
    }
    detail::validate(c);
    return c;
}

}  // namespace agrivol
