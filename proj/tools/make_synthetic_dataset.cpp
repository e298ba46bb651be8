// Writes the bundled synthetic dataset: monthly wheat prices whose volatility
// follows regional maximum temperature, annual MSP revisions, and a four-member
// climate ensemble (tasmax, pr) for the historical period and two scenarios.
// SSP5-8.5 warms faster than SSP2-4.5 from 2030-01 on; before that the two
// projections are identical because members share their internal variability
// across scenarios.

#include "agrivol/calendar.hpp"
#include "agrivol/serialize.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using agrivol::MonthStamp;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr MonthStamp kClimateStart{1970, 1};
constexpr MonthStamp kProjectionStart{2015, 1};
constexpr MonthStamp kClimateEnd{2100, 12};
constexpr MonthStamp kDivergence{2030, 1};
constexpr MonthStamp kPriceStart{2001, 10};
constexpr MonthStamp kPriceEnd{2024, 12};

const std::array<std::string, 4> kModels{"ACCESS-CM2", "EC-Earth3", "MPI-ESM1-2-LR", "NorESM2-MM"};
const std::array<double, 12> kRainClimatology{14, 9, 7, 4, 9, 115, 320, 295, 170, 38, 11, 8};

double years_since(MonthStamp m, MonthStamp ref) { return static_cast<double>(m.minus(ref)) / 12.0; }

/// Forced tasmax signal (degC) before member bias and internal variability.
double forced_tasmax(MonthStamp m, bool high) {
    double t = 31.5 + 6.0 * std::cos(2.0 * kPi * (m.month - 5) / 12.0) + 0.012 * years_since(m, kClimateStart);
    if (m >= kProjectionStart) t += 0.018 * years_since(m, kProjectionStart);
    if (high && m >= kDivergence) t += 0.045 * years_since(m, kDivergence);
    return t;
}

struct Member {
    double bias = 0.0;
    std::vector<double> temp_noise;  // one per month from kClimateStart
    std::vector<double> rain_noise;
};

std::vector<Member> make_members(std::mt19937_64& rng) {
    const auto n = static_cast<std::size_t>(kClimateEnd.minus(kClimateStart) + 1);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<Member> out(kModels.size());
    for (auto& mem : out) {
        mem.bias = 0.6 * z(rng);
        double a = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            a = 0.5 * a + 0.7 * z(rng);
            mem.temp_noise.push_back(a);
            mem.rain_noise.push_back(0.35 * z(rng));
        }
    }
    return out;
}

double tasmax(const Member& mem, MonthStamp m, bool high) {
    return forced_tasmax(m, high) + mem.bias + mem.temp_noise[static_cast<std::size_t>(m.minus(kClimateStart))];
}

double precipitation(const Member& mem, MonthStamp m) {
    const double e = mem.rain_noise[static_cast<std::size_t>(m.minus(kClimateStart))];
    return std::max(0.5, kRainClimatology[static_cast<std::size_t>(m.month - 1)] * std::exp(e - 0.06));
}

std::string fmt(double v, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic agrivol dataset bundle"};
    fs::path out = "data/synthetic";
    std::uint64_t seed = 20011001;
    app.add_option("--out", out, "Output bundle directory");
    app.add_option("--seed", seed, "Random seed");
    CLI11_PARSE(app, argc, argv);

    std::mt19937_64 rng(seed);
    const auto members = make_members(rng);

    agrivol::io::CsvWriter climate({"month", "variable", "scenario", "model", "value"});
    for (std::size_t k = 0; k < members.size(); ++k) {
        for (MonthStamp m = kClimateStart; m < kProjectionStart; m = m.next()) {
            climate.row({m.to_string(), "tasmax", "historical", kModels[k], fmt(tasmax(members[k], m, false), 3)});
            climate.row({m.to_string(), "pr", "historical", kModels[k], fmt(precipitation(members[k], m), 2)});
        }
        for (const bool high : {false, true}) {
            const std::string scen = high ? "SSP5-8.5" : "SSP2-4.5";
            for (MonthStamp m = kProjectionStart; m <= kClimateEnd; m = m.next()) {
                climate.row({m.to_string(), "tasmax", scen, kModels[k], fmt(tasmax(members[k], m, high), 3)});
                climate.row({m.to_string(), "pr", scen, kModels[k], fmt(precipitation(members[k], m), 2)});
            }
        }
    }

    // Ensemble-mean tasmax drives the log variance of monthly returns, on top
    // of EGARCH-style persistence and leverage.
    std::normal_distribution<double> z(0.0, 1.0);
    agrivol::io::CsvWriter prices({"month", "price", "market"});
    double price = 640.0, h_dev = 0.0;
    prices.row({kPriceStart.to_string(), fmt(price, 2), "Indore"});
    for (MonthStamp m = kPriceStart.next(); m <= kPriceEnd; m = m.next()) {
        double ens = 0.0;
        for (const auto& mem : members) ens += tasmax(mem, m, false);
        ens /= static_cast<double>(members.size());
        const double e = z(rng);
        const double logvar = 2.0 * std::log(0.032) + 0.22 * (ens - 31.5) + h_dev;
        const double r = 0.0044 + std::exp(0.5 * logvar) * e;
        h_dev = 0.55 * h_dev + 0.25 * (std::fabs(e) - 0.7979) - 0.06 * e;
        price *= std::exp(r);
        prices.row({m.to_string(), fmt(price, 2), "Indore"});
    }

    agrivol::io::CsvWriter msp({"effective_month", "msp"});
    double level = 620.0;
    for (int y = 2001; y <= 2024; ++y) {
        msp.row({MonthStamp{y, 10}.to_string(), fmt(level, 0)});
        level = 5.0 * std::round(level * (1.06 + 0.02 * std::sin(y)) / 5.0);
    }

    const nlohmann::json manifest = {
        {"crop", "wheat"},
        {"state", "Madhya Pradesh"},
        {"units", {{"price", "INR/quintal"}, {"msp", "INR/quintal"}, {"tasmax", "degC"}, {"pr", "mm/month"}}},
        {"provenance",
         {{"prices", "synthetic: EGARCH-type returns with tasmax-driven log variance"},
          {"msp", "synthetic: October revisions, about 6% per year"},
          {"climate", "synthetic: four-member ensemble; SSP5-8.5 warms faster from 2030-01"},
          {"generator", "make_synthetic_dataset --seed " + std::to_string(seed)}}},
        {"files", {{"prices", "prices.csv"}, {"msp", "msp.csv"}, {"climate", "climate.csv"}}}};

    try {
        climate.save(out / "climate.csv");
        prices.save(out / "prices.csv");
        msp.save(out / "msp.csv");
        agrivol::io::write_json(out / "manifest.json", manifest);
    } catch (const agrivol::Error& e) {
        std::cerr << "make_synthetic_dataset: " << e.what() << "\n";
        return 3;
    }
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}
