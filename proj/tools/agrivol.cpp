#include "agrivol/config.hpp"
#include "agrivol/error.hpp"
#include "agrivol/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace agrivol;

namespace {

struct Args {
    fs::path config;
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scenario;
};

void add_common(CLI::App* cmd, Args& args) {
    cmd->add_option("--config", args.config, "Pipeline configuration (JSON)")->required();
    cmd->add_option("--out", args.out, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", args.seed, "Seed recorded with the run (overrides seed)");
    cmd->add_option("--scenario", args.scenario, "Restrict scenario stages to one label");
}

const char* describe(const std::string& name) {
    if (name == "ingest") return "Read prices, MSP and climate into the aligned panel";
    if (name == "trend") return "Mann-Kendall trend tests on prices and climate";
    if (name == "fit-egarch") return "Fit EGARCH to monthly log returns";
    if (name == "fit-sarimax") return "Fit SARIMAX of EGARCH volatility per scenario";
    if (name == "forecast") return "Phase predictions and scenario forecasts";
    if (name == "price") return "Put premiums with MSP as strike";
    if (name == "report") return "Figure data, run report and manifest";
    return "Run every stage in order";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"agrivol: crop price volatility under climate scenarios"};
    app.require_subcommand(1);
    Args args;
    std::vector<std::string> names = pipeline::kStages;
    names.push_back("run");
    for (const auto& name : names) add_common(app.add_subcommand(name, describe(name)), args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        const auto ctx = pipeline::make_context(load_config(args.config), {args.out, args.seed, args.scenario});
        const auto rep = pipeline::execute(ctx, command);
        for (const auto& s : rep.stages) {
            std::cerr << "  " << s.name << ": " << s.status;
            if (s.status != "skipped") std::cerr << " (" << s.seconds << " s)";
            std::cerr << "\n";
        }
        if (!rep.ok()) {
            std::cerr << "agrivol: stage '" << rep.failed_stage << "' failed [" << to_string(*rep.error_kind)
                      << "]: " << rep.error << "\n";
            return pipeline::exit_code(*rep.error_kind);
        }
        std::cout << "wrote " << rep.manifest.size() << " files to " << ctx.paths.root.string() << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << "agrivol: " << to_string(e.kind()) << " error: " << e.what() << "\n";
        return pipeline::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "agrivol: internal error: " << e.what() << "\n";
        return 1;
    }
}
