#pragma once

// Stage orchestration. Every stage reads its inputs from the artifacts of
// upstream stages under the output directory and writes its own, so stages
// can be run one at a time or chained by run().

#include "agrivol/calendar.hpp"
#include "agrivol/config.hpp"
#include "agrivol/egarch.hpp"
#include "agrivol/error.hpp"
#include "agrivol/ingest.hpp"
#include "agrivol/pricing.hpp"
#include "agrivol/sarimax.hpp"
#include "agrivol/serialize.hpp"
#include "agrivol/series.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agrivol::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline const std::vector<std::string> kStages{"ingest", "trend", "fit-egarch", "fit-sarimax", "forecast", "price",
                                              "report"};

/// Process exit status for a failure category.
[[nodiscard]] inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config:
        case ErrorKind::argument: return 2;
        case ErrorKind::data:
        case ErrorKind::io:
        case ErrorKind::missing_upstream: return 3;
        case ErrorKind::numeric:
        case ErrorKind::fit:
        case ErrorKind::domain:
        case ErrorKind::insufficient_data: return 4;
    }
    return 4;
}

/// "SSP2-4.5" -> "ssp245", used in file names.
[[nodiscard]] inline std::string slug(const std::string& scenario) {
    std::string out;
    for (char ch : scenario)
        if (std::isalnum(static_cast<unsigned char>(ch))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

struct Paths {
    fs::path root;

    [[nodiscard]] fs::path panel() const { return root / "ingest" / "panel.json"; }
    [[nodiscard]] fs::path trend() const { return root / "trend" / "trend.csv"; }
    [[nodiscard]] fs::path egarch() const { return root / "egarch" / "model.json"; }
    [[nodiscard]] fs::path sarimax(const std::string& s) const { return root / "sarimax" / (slug(s) + ".json"); }
    [[nodiscard]] fs::path forecast(const std::string& s) const { return root / "forecast" / (slug(s) + ".csv"); }
    [[nodiscard]] fs::path premiums(const std::string& s) const { return root / "price" / ("premiums_" + slug(s) + ".csv"); }
    [[nodiscard]] fs::path figures() const { return root / "figures"; }
    [[nodiscard]] fs::path report() const { return root / "run_report.json"; }
    [[nodiscard]] fs::path manifest() const { return root / "manifest.json"; }
};

inline const std::vector<std::string> kArtifactDirs{"ingest", "trend", "egarch", "sarimax", "forecast", "price", "figures"};

struct Context {
    PipelineConfig config;
    Paths paths;
    std::vector<std::string> scenarios;  // active subset of config.scenarios
};

struct RunOptions {
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scenario;
};

[[nodiscard]] inline Context make_context(PipelineConfig config, const RunOptions& opt = {}) {
    if (opt.out) config.output_dir = *opt.out;
    if (opt.seed) config.seed = *opt.seed;
    Context ctx{config, {config.output_dir}, config.scenarios};
    if (opt.scenario) {
        if (std::find(config.scenarios.begin(), config.scenarios.end(), *opt.scenario) == config.scenarios.end())
            fail(ErrorKind::config, "scenario '" + *opt.scenario + "' is not configured");
        ctx.scenarios = {*opt.scenario};
    }
    return ctx;
}

namespace detail {

inline void need(const fs::path& artifact, const std::string& stage) {
    if (!fs::is_regular_file(artifact)) {
        fail(ErrorKind::missing_upstream,
             "missing " + artifact.string() + "; run the '" + stage + "' stage first");
    }
}

inline json load(const fs::path& artifact, const std::string& stage) {
    need(artifact, stage);
    return io::read_json(artifact);
}

/// Ensemble-mean climate entry of the panel.
struct ClimateEntry {
    std::string variable;
    std::string scenario;
    MonthlySeries series;
};

struct Panel {
    MonthlySeries prices;
    MonthlySeries msp;
    std::vector<ClimateEntry> climate;
    std::map<std::string, std::vector<MonthlySeries>> exog;  // per scenario, in config order
    std::map<std::string, MonthRange> common;               // aligned calendar per scenario
};

inline Panel read_panel(const Paths& paths) {
    const json j = load(paths.panel(), "ingest");
    Panel p;
    try {
        p.prices = io::series_from_json(j.at("prices"));
        p.msp = io::series_from_json(j.at("msp"));
        for (const auto& c : j.at("climate"))
            p.climate.push_back({c.at("variable").get<std::string>(), c.at("scenario").get<std::string>(),
                                 io::series_from_json(c.at("series"))});
        for (const auto& [scen, cols] : j.at("exog").items())
            for (const auto& c : cols) p.exog[scen].push_back(io::series_from_json(c.at("series")));
        for (const auto& [scen, a] : j.at("alignment").items())
            p.common[scen] = {MonthStamp::parse(a.at("first").get<std::string>()),
                              MonthStamp::parse(a.at("last").get<std::string>())};
    } catch (const json::exception& e) {
        fail(ErrorKind::data, paths.panel().string() + ": " + e.what());
    }
    return p;
}

inline const std::vector<MonthlySeries>& panel_exog(const Panel& p, const std::string& scenario, const Paths& paths) {
    const auto it = p.exog.find(scenario);
    if (it == p.exog.end())
        fail(ErrorKind::missing_upstream, paths.panel().string() + " has no exog for " + scenario +
                                              "; rerun the 'ingest' stage");
    return it->second;
}

inline sarimax::ExogColumns slice_all(const std::vector<MonthlySeries>& cols, MonthStamp first, MonthStamp last) {
    sarimax::ExogColumns out;
    for (const auto& c : cols) {
        if (!c.contains(first) || !c.contains(last))
            fail(ErrorKind::data, "exog series " + c.start().to_string() + ".." + c.end().to_string() +
                                      " does not cover " + first.to_string() + ".." + last.to_string());
        out.push_back(c.slice(first, last));
    }
    return out;
}

inline MonthlySeries egarch_sigma(const Paths& paths) {
    const json j = load(paths.egarch(), "fit-egarch");
    try {
        return io::series_from_json(j.at("sigma"));
    } catch (const json::exception& e) {
        fail(ErrorKind::data, paths.egarch().string() + ": " + e.what());
    }
}

/// Per-scenario modelling sample: EGARCH sigma on the aligned calendar.
struct Sample {
    MonthlySeries sigma;
    MonthlySeries y;  // sigma or ln sigma
    sarimax::ExogColumns exog;
};

inline Sample sample_for(const Context& ctx, const Panel& panel, const MonthlySeries& sigma, const std::string& scen) {
    const auto it = panel.common.find(scen);
    if (it == panel.common.end())
        fail(ErrorKind::missing_upstream, "panel has no alignment for " + scen + "; rerun the 'ingest' stage");
    const MonthStamp first = std::max(it->second.first, sigma.start());
    const MonthStamp last = std::min(it->second.last, sigma.end());
    if (last < first) fail(ErrorKind::data, "EGARCH volatility and the climate panel do not overlap for " + scen);
    Sample s;
    s.sigma = sigma.slice(first, last);
    s.y = s.sigma;
    if (ctx.config.log_dependent) {
        std::vector<double> v = s.sigma.values();
        for (double& x : v) {
            require(x > 0.0, ErrorKind::domain, "log-dependent SARIMAX needs positive EGARCH volatility");
            x = std::log(x);
        }
        s.y = s.sigma.with_values(std::move(v));
    }
    s.exog = slice_all(panel_exog(panel, scen, ctx.paths), first, last);
    return s;
}

struct Split {
    MonthRange train;
    MonthRange validation;
};

inline Split split_sample(const MonthlySeries& y, double fraction) {
    const auto n = static_cast<long>(y.size());
    const long n_val = std::max(1L, std::lround(fraction * static_cast<double>(n)));
    const long n_train = n - n_val;
    require(n_train >= 36, ErrorKind::insufficient_data,
            "training sample has " + std::to_string(n_train) + " months; at least 36 are needed");
    const MonthStamp cut = y.start().plus(n_train);
    return {{y.start(), cut.plus(-1)}, {cut, y.end()}};
}

inline std::pair<MonthlySeries, sarimax::ExogColumns> window(const Sample& s, MonthRange r) {
    return {s.y.slice(r.first, r.last), slice_all(s.exog, r.first, r.last)};
}

struct Row {
    MonthStamp month;
    std::string phase;
    double egarch_sigma = 0.0;  // NaN in the forecast phase
    double predicted = 0.0;
    double se = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

inline std::vector<Row> read_forecast(const Paths& paths, const std::string& scen) {
    need(paths.forecast(scen), "forecast");
    const auto t = ingest::read_csv(paths.forecast(scen));
    const std::size_t cm = t.column("month"), cp = t.column("phase"), cs = t.column("egarch_sigma"),
                      cy = t.column("predicted"), cse = t.column("se"), cl = t.column("lower68"),
                      cu = t.column("upper68");
    std::vector<Row> rows;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& c = t.rows[r];
        Row row;
        row.month = ingest::parse_month(c[cm], t.where(r));
        row.phase = c[cp];
        row.egarch_sigma = c[cs].empty() ? std::nan("") : ingest::parse_number(c[cs], t.where(r));
        row.predicted = ingest::parse_number(c[cy], t.where(r));
        row.se = ingest::parse_number(c[cse], t.where(r));
        row.lower = ingest::parse_number(c[cl], t.where(r));
        row.upper = ingest::parse_number(c[cu], t.where(r));
        if (!rows.empty() && !(row.month == rows.back().month.next()))
            fail(ErrorKind::data, t.where(r) + ": forecast months are not contiguous");
        rows.push_back(row);
    }
    if (rows.empty()) fail(ErrorKind::data, t.path + ": no forecast rows");
    return rows;
}

inline void check_finite(const std::vector<double>& v, const std::string& what) {
    for (double x : v)
        if (!std::isfinite(x)) fail(ErrorKind::numeric, what + " contains a non-finite value");
}

inline MonthlySeries as_sigma(const MonthlySeries& y, bool log_dependent) {
    if (!log_dependent) return y;
    std::vector<double> v = y.values();
    for (double& x : v) x = std::exp(x);
    return y.with_values(std::move(v));
}

}  // namespace detail

// ---------------------------------------------------------------- stages

inline void stage_ingest(const Context& ctx) {
    const auto& cfg = ctx.config;
    const MonthlySeries prices = ingest::read_price_csv(cfg.prices, {cfg.average_duplicate_prices, "INR/quintal"});
    const MonthlySeries msp = ingest::read_msp_csv(cfg.msp, prices.range());
    const ingest::ClimateData climate = ingest::read_climate_csv(cfg.climate);

    std::set<std::pair<int, int>> present;
    for (const auto& r : climate.records) present.insert({static_cast<int>(r.variable), static_cast<int>(r.scenario)});

    std::vector<ingest::Scenario> scenarios{ingest::Scenario::historical};
    for (const auto& s : cfg.scenarios) scenarios.push_back(*ingest::parse_scenario(s));

    json j;
    j["crop"] = cfg.crop;
    j["state"] = cfg.state;
    j["sources"] = {{"prices", cfg.prices.filename().string()},
                    {"msp", cfg.msp.filename().string()},
                    {"climate", cfg.climate.filename().string()}};
    j["prices"] = io::to_json(prices);
    j["msp"] = io::to_json(msp);
    j["warnings"] = climate.warnings;

    std::map<std::pair<int, int>, MonthlySeries> ens;
    json clim = json::array();
    for (int v = 0; v <= static_cast<int>(ingest::Variable::pr); ++v) {
        for (const auto scen : scenarios) {
            if (!present.count({v, static_cast<int>(scen)})) continue;
            const auto var = static_cast<ingest::Variable>(v);
            const auto e = ingest::ensemble_mean(climate.records, var, scen);
            ens[{v, static_cast<int>(scen)}] = e.mean;
            clim.push_back({{"variable", ingest::to_string(var)},
                            {"scenario", ingest::to_string(scen)},
                            {"models", e.models},
                            {"member_count", e.member_count},
                            {"series", io::to_json(e.mean)}});
        }
    }
    j["climate"] = clim;

    json exog = json::object(), alignment = json::object();
    for (const auto& label : cfg.scenarios) {
        const auto scen = *ingest::parse_scenario(label);
        json cols = json::array();
        std::vector<MonthlySeries> panel{prices};
        std::vector<std::string> names{"price"};
        for (const auto& spec : cfg.exog) {
            const int v = static_cast<int>(spec.variable);
            const auto hist = ens.find({v, static_cast<int>(ingest::Scenario::historical)});
            const auto proj = ens.find({v, static_cast<int>(scen)});
            if (hist == ens.end() || proj == ens.end())
                fail(ErrorKind::data, cfg.climate.string() + ": no " + spec.name() + " records for " +
                                          (hist == ens.end() ? std::string("historical") : label));
            MonthlySeries joined = ingest::join_scenario(hist->second, proj->second, cfg.scenario_boundary);
            if (spec.anomaly) joined = ingest::anomalies(joined, cfg.baseline, spec.mode);
            cols.push_back({{"name", spec.name()},
                            {"transform", spec.anomaly ? "anomaly" : "raw"},
                            {"anomaly_mode", spec.mode == ingest::AnomalyMode::additive ? "additive" : "multiplicative"},
                            {"series", io::to_json(joined)}});
            panel.push_back(joined);
            names.push_back(spec.name());
        }
        const auto aligned = ingest::align_panel(panel, names);
        json dropped_before = json::object(), dropped_after = json::object();
        for (std::size_t i = 0; i < names.size(); ++i) {
            dropped_before[names[i]] = aligned.report.dropped_before[i];
            dropped_after[names[i]] = aligned.report.dropped_after[i];
        }
        exog[label] = cols;
        alignment[label] = {{"first", aligned.report.common.first.to_string()},
                            {"last", aligned.report.common.last.to_string()},
                            {"dropped_before", dropped_before},
                            {"dropped_after", dropped_after}};
    }
    j["exog"] = exog;
    j["alignment"] = alignment;
    j["scenario_boundary"] = {{"month", cfg.scenario_boundary.to_string()}, {"assigned_to", "scenario"}};
    io::write_json(ctx.paths.panel(), j);
}

inline void stage_trend(const Context& ctx) {
    const auto panel = detail::read_panel(ctx.paths);
    io::CsvWriter csv({"variable", "scenario", "first", "last", "n", "s_statistic", "variance_s", "z_score", "p_value",
                       "direction", "slope_per_decade"});
    auto emit = [&](const std::string& var, const std::string& scen, const MonthlySeries& s) {
        const auto mk = mann_kendall(s);
        const auto ols = ols_trend(s);
        csv.row({var, scen, s.start().to_string(), s.end().to_string(), std::to_string(s.size()),
                 std::to_string(mk.s_statistic), io::num(mk.variance_s), io::num(mk.z_score), io::num(mk.p_value),
                 to_string(mk.direction), io::num(ols.slope * 120.0)});
    };
    emit("price", "observed", panel.prices);
    for (const auto& c : panel.climate) emit(c.variable, c.scenario, c.series);
    csv.save(ctx.paths.trend());
}

inline void stage_fit_egarch(const Context& ctx) {
    const auto panel = detail::read_panel(ctx.paths);
    const MonthlySeries returns = log_returns(panel.prices);
    const auto& cfg = ctx.config;
    const egarch::Orders orders =
        cfg.egarch_auto ? egarch::select_orders(returns, cfg.egarch_max_order) : cfg.egarch_orders;
    const egarch::Fit f = egarch::fit(returns, orders);
    json j = io::to_json(f, returns);
    j["auto"] = cfg.egarch_auto;
    io::write_json(ctx.paths.egarch(), j);
}

inline void stage_fit_sarimax(const Context& ctx) {
    const auto panel = detail::read_panel(ctx.paths);
    const MonthlySeries sigma = detail::egarch_sigma(ctx.paths);
    const auto& cfg = ctx.config;
    for (const auto& scen : ctx.scenarios) {
        const auto sample = detail::sample_for(ctx, panel, sigma, scen);
        const auto split = detail::split_sample(sample.y, cfg.validation_fraction);
        const auto [y_train, x_train] = detail::window(sample, split.train);
        const auto [y_val, x_val] = detail::window(sample, split.validation);

        sarimax::FitOptions opt;
        opt.exog_names = cfg.exog_names();
        const sarimax::Orders orders =
            cfg.sarimax_auto ? sarimax::select_orders(y_train, x_train, cfg.sarimax_grid, opt) : cfg.sarimax_orders;
        const sarimax::Model model = sarimax::fit(y_train, x_train, orders, opt);

        const auto ext = sarimax::extend(model, y_val, x_val);
        const auto pred = sarimax::predict_in_sample(ext, sarimax::Phase::validation);
        double abs_err = 0.0;
        std::size_t inside = 0;
        for (MonthStamp m = split.validation.first; m <= split.validation.last; m = m.next()) {
            const double mu = pred.mean.at(m), se = pred.se.at(m), y = sample.y.at(m);
            const double level = cfg.log_dependent ? std::exp(mu) : mu;
            abs_err += std::fabs(level - sample.sigma.at(m));
            if (std::fabs(y - mu) <= se) ++inside;
        }
        const auto n_val = static_cast<double>(split.validation.size());

        json j;
        j["scenario"] = scen;
        j["log_dependent"] = cfg.log_dependent;
        j["auto"] = cfg.sarimax_auto;
        j["split"] = {{"fraction", cfg.validation_fraction},
                      {"train_first", split.train.first.to_string()},
                      {"train_last", split.train.last.to_string()},
                      {"validation_first", split.validation.first.to_string()},
                      {"validation_last", split.validation.last.to_string()}};
        j["validation"] = {{"months", split.validation.size()},
                           {"mae", abs_err / n_val},
                           {"coverage68", static_cast<double>(inside) / n_val}};
        j["model"] = io::to_json(model);
        io::write_json(ctx.paths.sarimax(scen), j);
    }
}

inline void stage_forecast(const Context& ctx) {
    const auto panel = detail::read_panel(ctx.paths);
    const MonthlySeries sigma = detail::egarch_sigma(ctx.paths);
    const auto& cfg = ctx.config;
    for (const auto& scen : ctx.scenarios) {
        const json j = detail::load(ctx.paths.sarimax(scen), "fit-sarimax");
        sarimax::Model model;
        detail::Split split;
        bool log_dep = false;
        try {
            model = io::sarimax_model_from_json(j.at("model"));
            log_dep = j.at("log_dependent").get<bool>();
            const auto& s = j.at("split");
            split.train = {MonthStamp::parse(s.at("train_first").get<std::string>()),
                           MonthStamp::parse(s.at("train_last").get<std::string>())};
            split.validation = {MonthStamp::parse(s.at("validation_first").get<std::string>()),
                                MonthStamp::parse(s.at("validation_last").get<std::string>())};
        } catch (const json::exception& e) {
            fail(ErrorKind::data, ctx.paths.sarimax(scen).string() + ": " + e.what());
        }
        if (log_dep != cfg.log_dependent)
            fail(ErrorKind::missing_upstream, ctx.paths.sarimax(scen).string() +
                                                  " was fitted with a different log_dependent setting; rerun 'fit-sarimax'");
        const auto sample = detail::sample_for(ctx, panel, sigma, scen);
        require(sample.y.contains(split.validation.last) && sample.y.contains(split.train.first), ErrorKind::data,
                ctx.paths.sarimax(scen).string() + " does not match the current panel; rerun 'fit-sarimax'");
        const auto [y_val, x_val] = detail::window(sample, split.validation);
        const auto ext = sarimax::extend(model, y_val, x_val);

        const MonthStamp first_future = ext.history.end().next();
        if (cfg.horizon_end < first_future)
            fail(ErrorKind::config, "horizon_end " + cfg.horizon_end.to_string() + " precedes the first forecast month " +
                                        first_future.to_string());
        const int horizon = static_cast<int>(cfg.horizon_end.minus(first_future) + 1);
        const auto x_future = detail::slice_all(detail::panel_exog(panel, scen, ctx.paths), first_future, cfg.horizon_end);

        const auto hist = sarimax::predict_in_sample(model, sarimax::Phase::historical);
        const auto val = sarimax::predict_in_sample(ext, sarimax::Phase::validation);
        const auto fut = sarimax::forecast(ext, x_future, horizon);

        io::CsvWriter csv({"month", "phase", "egarch_sigma", "predicted", "se", "lower68", "upper68"});
        auto emit = [&](MonthStamp m, const char* phase, double mu, double se, bool observed) {
            if (!std::isfinite(mu) || !std::isfinite(se))
                fail(ErrorKind::numeric, "non-finite SARIMAX prediction for " + scen + " at " + m.to_string());
            const double pred = log_dep ? std::exp(mu) : mu;
            const double lo = log_dep ? std::exp(mu - se) : mu - se;
            const double hi = log_dep ? std::exp(mu + se) : mu + se;
            csv.row({m.to_string(), phase, observed ? io::num(sample.sigma.at(m)) : std::string{}, io::num(pred),
                     io::num(se), io::num(lo), io::num(hi)});
        };
        for (std::size_t t = 0; t < hist.mean.size(); ++t)
            if (!std::isnan(hist.mean[t])) emit(hist.mean.month_at(t), "historical", hist.mean[t], hist.se[t], true);
        for (MonthStamp m = split.validation.first; m <= split.validation.last; m = m.next())
            emit(m, "validation", val.mean.at(m), val.se.at(m), true);
        for (std::size_t t = 0; t < fut.mean.size(); ++t)
            emit(fut.mean.month_at(t), "forecast", fut.mean[t], fut.se[t], false);
        csv.save(ctx.paths.forecast(scen));
    }
}

namespace detail {

inline MonthlySeries spot_path(const PipelineConfig& cfg, const MonthlySeries& prices, MonthRange months) {
    std::vector<double> v;
    v.reserve(months.size());
    std::optional<MonthlySeries> user;
    LinearTrend trend;
    if (cfg.pricing.spot_policy == SpotPolicy::path)
        user = ingest::read_price_csv(cfg.pricing.spot_path);
    if (cfg.pricing.spot_policy == SpotPolicy::linear_trend) {
        std::vector<double> logs = prices.values();
        for (double& x : logs) x = std::log(x);
        trend = ols_trend(prices.with_values(std::move(logs)));
    }
    for (MonthStamp m = months.first; m <= months.last; m = m.next()) {
        if (prices.contains(m)) {
            v.push_back(prices.at(m));
            continue;
        }
        switch (cfg.pricing.spot_policy) {
            case SpotPolicy::hold_last: v.push_back(prices.values().back()); break;
            case SpotPolicy::linear_trend:
                v.push_back(std::exp(trend.intercept + trend.slope * static_cast<double>(m.minus(prices.start()))));
                break;
            case SpotPolicy::path:
                if (!user->contains(m))
                    fail(ErrorKind::data, cfg.pricing.spot_path.string() + " has no spot price for " + m.to_string());
                v.push_back(user->at(m));
                break;
        }
    }
    return {months.first, std::move(v), prices.unit()};
}

/// Observed MSP inside the sample; afterwards either held or grown by the
/// configured annual rate on each anniversary of the last revision.
inline MonthlySeries msp_path(const PipelineConfig& cfg, const MonthlySeries& msp, MonthRange months) {
    MonthStamp revision = msp.start();
    for (std::size_t t = 1; t < msp.size(); ++t)
        if (msp[t] != msp[t - 1]) revision = msp.month_at(t);
    const double last = msp.values().back();
    std::vector<double> v;
    v.reserve(months.size());
    for (MonthStamp m = months.first; m <= months.last; m = m.next()) {
        if (msp.contains(m)) {
            v.push_back(msp.at(m));
        } else if (cfg.pricing.msp_policy == MspPolicy::hold_last) {
            v.push_back(last);
        } else {
            const long since_revision = m.minus(revision) / 12;
            const long before_end = msp.end().minus(revision) / 12;
            v.push_back(last * std::pow(1.0 + cfg.pricing.msp_growth, static_cast<double>(since_revision - before_end)));
        }
    }
    return {months.first, std::move(v), msp.unit()};
}

}  // namespace detail

inline void stage_price(const Context& ctx) {
    const auto panel = detail::read_panel(ctx.paths);
    const auto& cfg = ctx.config;
    for (const auto& scen : ctx.scenarios) {
        const auto rows = detail::read_forecast(ctx.paths, scen);
        const MonthRange months{rows.front().month, rows.back().month};
        std::vector<double> vol;
        std::vector<std::string> phases;
        std::vector<bool> clamped;
        for (const auto& r : rows) {
            const bool low = !(r.predicted >= pricing::kVolFloor);
            vol.push_back(low ? pricing::kVolFloor : r.predicted);
            clamped.push_back(low);
            phases.push_back(r.phase);
        }
        const auto spot = detail::spot_path(cfg, panel.prices, months);
        const auto msp = detail::msp_path(cfg, panel.msp, months);
        const auto ps = pricing::premium_series(spot, msp, MonthlySeries(months.first, vol, "monthly"), cfg.pricing.rate,
                                                cfg.pricing.maturity_years, scen, phases);
        io::CsvWriter csv({"month", "scenario", "phase", "spot", "msp", "vol_monthly", "vol_annual", "premium", "d1",
                           "d2", "vol_clamped"});
        for (std::size_t t = 0; t < ps.quotes.size(); ++t) {
            const auto& q = ps.quotes[t];
            detail::check_finite({q.price, q.d1, q.d2}, "premium for " + scen + " at " + spot.month_at(t).to_string());
            csv.row({spot.month_at(t).to_string(), scen, phases[t], io::num(spot[t]), io::num(msp[t]), io::num(vol[t]),
                     io::num(q.inputs.vol), io::num(q.price), io::num(q.d1), io::num(q.d2), clamped[t] ? "1" : "0"});
        }
        csv.save(ctx.paths.premiums(scen));
    }
}

inline void stage_report(const Context& ctx) {
    const auto& cfg = ctx.config;
    const auto panel = detail::read_panel(ctx.paths);
    const json eg = detail::load(ctx.paths.egarch(), "fit-egarch");
    std::map<std::string, std::vector<detail::Row>> forecasts;
    std::map<std::string, ingest::CsvTable> premiums;
    for (const auto& scen : ctx.scenarios) {
        forecasts[scen] = detail::read_forecast(ctx.paths, scen);
        detail::need(ctx.paths.premiums(scen), "price");
        premiums[scen] = ingest::read_csv(ctx.paths.premiums(scen));
    }
    const fs::path dir = ctx.paths.figures();

    {
        const auto b = band(panel.prices, cfg.bands.price_window, WidthRule::k_sigma, cfg.bands.price_k);
        io::CsvWriter csv({"month", "price", "mean", "lower", "upper"});
        for (std::size_t t = 0; t < b.center.size(); ++t) {
            const MonthStamp m = b.center.month_at(t);
            csv.row({m.to_string(), io::num(panel.prices.at(m)), io::num(b.center[t]), io::num(b.lower[t]),
                     io::num(b.upper[t])});
        }
        csv.save(dir / "fig1_price_bands.csv");
    }
    {
        io::CsvWriter csv({"variable", "scenario", "month", "value", "mean", "lower", "upper", "width_rule"});
        for (const auto& c : panel.climate) {
            const bool precip = c.variable == "pr";
            const auto rule = precip ? WidthRule::log_sigma_factor : WidthRule::k_sigma;
            const double k = precip ? cfg.bands.precipitation_k : cfg.bands.temperature_k;
            const auto b = band(c.series, cfg.bands.climate_window, rule, k, WindowAlignment::centered);
            for (std::size_t t = 0; t < b.center.size(); ++t) {
                const MonthStamp m = b.center.month_at(t);
                csv.row({c.variable, c.scenario, m.to_string(), io::num(c.series.at(m)), io::num(b.center[t]),
                         io::num(b.lower[t]), io::num(b.upper[t]), precip ? "log-sigma-factor" : "k-sigma"});
            }
        }
        csv.save(dir / "fig2_climate_bands.csv");
    }
    {
        MonthlySeries returns, sigma;
        try {
            returns = io::series_from_json(eg.at("returns"));
            sigma = io::series_from_json(eg.at("sigma"));
        } catch (const json::exception& e) {
            fail(ErrorKind::data, ctx.paths.egarch().string() + ": " + e.what());
        }
        io::CsvWriter csv({"month", "price", "log_return", "egarch_sigma"});
        for (std::size_t t = 0; t < returns.size(); ++t) {
            const MonthStamp m = returns.month_at(t);
            csv.row({m.to_string(), io::num(panel.prices.at(m)), io::num(returns[t]), io::num(sigma.at(m))});
        }
        csv.save(dir / "fig3_returns_volatility.csv");
    }
    for (const auto& scen : ctx.scenarios) {
        const auto& rows = forecasts[scen];
        std::vector<double> pred;
        for (const auto& r : rows) pred.push_back(r.predicted);
        const auto smoothed = smooth(MonthlySeries(rows.front().month, pred), cfg.smoothing_window);
        io::CsvWriter csv({"month", "phase", "egarch_sigma", "predicted", "lower68", "upper68", "smoothed"});
        for (std::size_t t = 0; t < rows.size(); ++t) {
            const auto& r = rows[t];
            csv.row({r.month.to_string(), r.phase, io::num(r.egarch_sigma), io::num(r.predicted), io::num(r.lower),
                     io::num(r.upper), io::num(smoothed[t])});
        }
        csv.save(dir / ("fig4_sarimax_forecast_" + slug(scen) + ".csv"));
    }
    {
        struct Cell {
            std::string phase, premium, smoothed, clamped;
        };
        std::map<MonthStamp, std::map<std::size_t, Cell>> by_month;
        for (std::size_t s = 0; s < ctx.scenarios.size(); ++s) {
            const auto& t = premiums[ctx.scenarios[s]];
            const std::size_t cm = t.column("month"), cp = t.column("phase"), cpr = t.column("premium"),
                              cc = t.column("vol_clamped");
            std::vector<double> v;
            for (std::size_t r = 0; r < t.rows.size(); ++r) v.push_back(ingest::parse_number(t.rows[r][cpr], t.where(r)));
            if (v.empty()) fail(ErrorKind::data, t.path + ": no premium rows");
            const MonthStamp first = ingest::parse_month(t.rows.front()[cm], t.where(0));
            const auto sm = smooth(MonthlySeries(first, v), cfg.smoothing_window);
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                const MonthStamp m = ingest::parse_month(t.rows[r][cm], t.where(r));
                if (!(m == sm.month_at(r))) fail(ErrorKind::data, t.where(r) + ": premium months are not contiguous");
                by_month[m][s] = {t.rows[r][cp], io::num(v[r]), io::num(sm[r]), t.rows[r][cc]};
            }
        }
        io::CsvWriter csv({"month", "scenario", "phase", "premium", "smoothed", "vol_clamped"});
        for (const auto& [m, cells] : by_month)
            for (const auto& [s, c] : cells) csv.row({m.to_string(), ctx.scenarios[s], c.phase, c.premium, c.smoothed, c.clamped});
        csv.save(dir / "fig5_premiums.csv");
    }
}

// ---------------------------------------------------------------- driver

struct StageRecord {
    std::string name;
    std::string status;  // ok | failed | skipped
    double seconds = 0.0;
};

struct ManifestEntry {
    std::string path;  // relative to the output directory, '/' separated
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunReport {
    std::string status = "ok";
    std::vector<StageRecord> stages;
    std::vector<ManifestEntry> manifest;
    json models = json::object();
    std::string failed_stage;
    std::optional<ErrorKind> error_kind;
    std::string error;
    fs::path output_dir;

    [[nodiscard]] bool ok() const noexcept { return !error_kind.has_value(); }
};

/// Every artifact under the stage directories, sorted by relative path.
[[nodiscard]] inline std::vector<ManifestEntry> collect_manifest(const fs::path& root) {
    std::vector<ManifestEntry> out;
    for (const auto& d : kArtifactDirs) {
        const fs::path dir = root / d;
        if (!fs::is_directory(dir)) continue;
        for (const auto& e : fs::recursive_directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            out.push_back({fs::relative(e.path(), root).generic_string(), io::sha256_file(e.path()), e.file_size()});
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    return out;
}

namespace detail {

inline json manifest_json(const std::vector<ManifestEntry>& files) {
    json arr = json::array();
    for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return arr;
}

inline json model_summaries(const Context& ctx) {
    json out = json::object();
    if (fs::is_regular_file(ctx.paths.egarch())) {
        const json e = io::read_json(ctx.paths.egarch());
        out["egarch"] = {{"orders", e.at("orders")}, {"params", e.at("params")}, {"aic", e.at("aic")},
                         {"converged", e.at("converged")}};
    }
    for (const auto& scen : ctx.config.scenarios) {
        if (!fs::is_regular_file(ctx.paths.sarimax(scen))) continue;
        const json s = io::read_json(ctx.paths.sarimax(scen));
        const auto& m = s.at("model");
        out["sarimax"][scen] = {{"orders", m.at("orders")},    {"exog_names", m.at("exog_names")},
                                {"gamma_raw", m.at("gamma_raw")}, {"gamma_se_raw", m.at("gamma_se_raw")},
                                {"aic", m.at("aic")},          {"converged", m.at("converged")},
                                {"validation", s.at("validation")}};
    }
    return out;
}

inline void run_one(const Context& ctx, const std::string& stage) {
    if (stage == "ingest") stage_ingest(ctx);
    else if (stage == "trend") stage_trend(ctx);
    else if (stage == "fit-egarch") stage_fit_egarch(ctx);
    else if (stage == "fit-sarimax") stage_fit_sarimax(ctx);
    else if (stage == "forecast") stage_forecast(ctx);
    else if (stage == "price") stage_price(ctx);
    else if (stage == "report") stage_report(ctx);
    else fail(ErrorKind::argument, "unknown stage '" + stage + "'");
}

}  // namespace detail

/// Runs the named stages in order ("run" expands to all of them), then writes
/// run_report.json and manifest.json. Stage failures are captured in the
/// report rather than thrown; a full run starts from clean stage directories.
[[nodiscard]] inline RunReport execute(const Context& ctx, const std::string& command) {
    std::vector<std::string> stages;
    if (command == "run") stages = kStages;
    else if (std::find(kStages.begin(), kStages.end(), command) != kStages.end()) stages = {command};
    else fail(ErrorKind::argument, "unknown subcommand '" + command + "'");

    RunReport rep;
    rep.output_dir = ctx.paths.root;
    std::error_code ec;
    fs::create_directories(ctx.paths.root, ec);
    if (ec || !fs::is_directory(ctx.paths.root))
        fail(ErrorKind::io, "cannot create output directory " + ctx.paths.root.string());
    if (command == "run")
        for (const auto& d : kArtifactDirs) fs::remove_all(ctx.paths.root / d);
    fs::remove(ctx.paths.manifest(), ec);

    for (const auto& stage : stages) {
        if (rep.error_kind) {
            rep.stages.push_back({stage, "skipped", 0.0});
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        std::string status = "ok";
        try {
            detail::run_one(ctx, stage);
        } catch (const Error& e) {
            rep.error_kind = e.kind();
            rep.error = e.what();
        } catch (const json::exception& e) {
            rep.error_kind = ErrorKind::data;
            rep.error = e.what();
        }
        if (rep.error_kind) {
            status = "failed";
            rep.status = "failed";
            rep.failed_stage = stage;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rep.stages.push_back({stage, status, secs});
    }

    rep.manifest = collect_manifest(ctx.paths.root);
    try {
        rep.models = detail::model_summaries(ctx);
    } catch (const std::exception&) {
        rep.models = json::object();
    }
    json stages_json = json::array();
    for (const auto& s : rep.stages) stages_json.push_back({{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}});
    const auto& cfg = ctx.config;
    json report = {{"status", rep.status},
                   {"command", command},
                   {"config", cfg.source.string()},
                   {"crop", cfg.crop},
                   {"state", cfg.state},
                   {"seed", cfg.seed},
                   {"scenarios", ctx.scenarios},
                   {"stages", stages_json},
                   {"models", rep.models},
                   {"pricing",
                    {{"rate", cfg.pricing.rate},
                     {"maturity_years", cfg.pricing.maturity_years},
                     {"spot_policy", to_string(cfg.pricing.spot_policy)},
                     {"msp_policy", to_string(cfg.pricing.msp_policy)},
                     {"msp_growth", cfg.pricing.msp_growth},
                     {"vol_floor", pricing::kVolFloor}}},
                   {"scenario_boundary", {{"month", cfg.scenario_boundary.to_string()}, {"assigned_to", "scenario"}}},
                   {"complete", rep.ok()},
                   {"manifest", detail::manifest_json(rep.manifest)}};
    if (!rep.ok()) {
        report["failed_stage"] = rep.failed_stage;
        report["error"] = {{"kind", std::string(to_string(*rep.error_kind))}, {"message", rep.error}};
    }
    io::write_json(ctx.paths.report(), report);
    io::write_json(ctx.paths.manifest(), {{"complete", rep.ok()}, {"files", detail::manifest_json(rep.manifest)}});
    return rep;
}

/// Loads the config, applies overrides and runs every stage.
[[nodiscard]] inline RunReport run_pipeline(const fs::path& config_path, const RunOptions& opt = {}) {
    return execute(make_context(load_config(config_path), opt), "run");
}

}  // namespace agrivol::pipeline
