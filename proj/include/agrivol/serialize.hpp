#pragma once

// JSON and CSV persistence for stage artifacts, plus content hashing.

#include "agrivol/calendar.hpp"
#include "agrivol/egarch.hpp"
#include "agrivol/error.hpp"
#include "agrivol/sarimax.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace agrivol::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Reads a number that may have been written as null (NaN on output).
[[nodiscard]] inline double number_from_json(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

[[nodiscard]] inline std::vector<double> numbers_from_json(const json& j) {
    std::vector<double> out;
    for (const auto& v : j) out.push_back(number_from_json(v));
    return out;
}

[[nodiscard]] inline json to_json(const MonthlySeries& s) {
    return {{"start", s.start().to_string()}, {"unit", s.unit()}, {"values", s.values()}};
}

[[nodiscard]] inline MonthlySeries series_from_json(const json& j) {
    return {MonthStamp::parse(j.at("start").get<std::string>()), numbers_from_json(j.at("values")),
            j.value("unit", std::string{})};
}

[[nodiscard]] inline json to_json(const egarch::Fit& f, const MonthlySeries& returns) {
    return {{"orders", {{"p", f.orders.p}, {"o", f.orders.o}, {"q", f.orders.q}}},
            {"params", {{"nu", f.params.nu}, {"kappa", f.params.kappa}, {"delta", f.params.delta}, {"phi", f.params.phi}}},
            {"init_logvar", f.init_logvar},
            {"loglik", f.loglik},
            {"aic", f.aic},
            {"n_obs", f.n_obs},
            {"converged", f.converged},
            {"termination", f.termination},
            {"sigma", to_json(f.sigma)},
            {"returns", to_json(returns)}};
}

[[nodiscard]] inline json to_json(const sarimax::Orders& o) {
    return {{"p", o.p}, {"m", o.m}, {"q", o.q}, {"P", o.P}, {"M", o.M}, {"Q", o.Q}, {"s", o.s}};
}

[[nodiscard]] inline sarimax::Orders sarimax_orders_from_json(const json& j) {
    sarimax::Orders o;
    o.p = j.value("p", o.p);
    o.m = j.value("m", o.m);
    o.q = j.value("q", o.q);
    o.P = j.value("P", o.P);
    o.M = j.value("M", o.M);
    o.Q = j.value("Q", o.Q);
    o.s = j.value("s", o.s);
    return o;
}

[[nodiscard]] inline json to_json(const sarimax::Params& p) {
    return {{"ar", p.ar}, {"ma", p.ma}, {"sar", p.sar}, {"sma", p.sma},
            {"gamma", p.gamma}, {"intercept", p.intercept}, {"sigma2", p.sigma2}};
}

[[nodiscard]] inline sarimax::Params sarimax_params_from_json(const json& j) {
    sarimax::Params p;
    p.ar = numbers_from_json(j.at("ar"));
    p.ma = numbers_from_json(j.at("ma"));
    p.sar = numbers_from_json(j.at("sar"));
    p.sma = numbers_from_json(j.at("sma"));
    p.gamma = numbers_from_json(j.at("gamma"));
    p.intercept = number_from_json(j.at("intercept"));
    p.sigma2 = number_from_json(j.at("sigma2"));
    return p;
}

/// Model with its conditioning sample, enough to rebuild it exactly.
[[nodiscard]] inline json to_json(const sarimax::Model& m) {
    json exog = json::array();
    for (const auto& c : m.history_exog) exog.push_back(to_json(c));
    return {{"orders", to_json(m.orders)},
            {"params_standardized", to_json(m.params)},
            {"gamma_raw", m.gamma_raw},
            {"intercept_raw", m.intercept_raw},
            {"gamma_se", m.gamma_se},
            {"gamma_se_raw", m.gamma_se_raw},
            {"exog_names", m.exog_names},
            {"exog_mean", m.exog_mean},
            {"exog_scale", m.exog_scale},
            {"loglik", m.loglik},
            {"aic", m.aic},
            {"n_obs", m.n_obs},
            {"converged", m.converged},
            {"termination", m.termination},
            {"history", to_json(m.history)},
            {"history_exog", exog}};
}

[[nodiscard]] inline sarimax::Model sarimax_model_from_json(const json& j) {
    sarimax::Model m;
    m.orders = sarimax_orders_from_json(j.at("orders"));
    m.params = sarimax_params_from_json(j.at("params_standardized"));
    m.gamma_raw = numbers_from_json(j.at("gamma_raw"));
    m.intercept_raw = number_from_json(j.at("intercept_raw"));
    m.gamma_se = numbers_from_json(j.at("gamma_se"));
    m.gamma_se_raw = numbers_from_json(j.at("gamma_se_raw"));
    m.exog_names = j.at("exog_names").get<std::vector<std::string>>();
    m.exog_mean = numbers_from_json(j.at("exog_mean"));
    m.exog_scale = numbers_from_json(j.at("exog_scale"));
    m.loglik = number_from_json(j.at("loglik"));
    m.aic = number_from_json(j.at("aic"));
    m.n_obs = j.at("n_obs").get<std::size_t>();
    m.converged = j.at("converged").get<bool>();
    m.termination = j.at("termination").get<std::string>();
    m.history = series_from_json(j.at("history"));
    for (const auto& c : j.at("history_exog")) m.history_exog.push_back(series_from_json(c));
    return m;
}

inline void ensure_parent(const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

[[nodiscard]] inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::data, path.string() + ": " + e.what());
    }
}

/// Fixed-format number for CSV cells: 12 significant digits, empty for NaN.
[[nodiscard]] inline std::string num(double v) {
    if (std::isnan(v)) return {};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

    void row(const std::vector<std::string>& cells) {
        require(cells.size() == columns_, ErrorKind::argument, "CSV row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ << ',';
            text_ << cells[i];
        }
        text_ << '\n';
    }

    [[nodiscard]] std::string str() const { return text_.str(); }
    void save(const fs::path& path) const { write_text(path, str()); }

private:
    std::size_t columns_;
    std::ostringstream text_;
};

[[nodiscard]] inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        fail(ErrorKind::io, "SHA-256 initialisation failed");
    }
    char buf[1 << 15];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

}  // namespace agrivol::io
