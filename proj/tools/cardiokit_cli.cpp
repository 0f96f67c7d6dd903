// cardiokit command-line pipeline: stage-by-stage reproduction of the
// cardiogram-biometrics analysis over synthetic or manifest-listed data.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cardiokit/config.hpp"
#include "cardiokit/pipeline.hpp"

namespace {

// "n=20,beats=90,fs=500,snr=20" -> synthetic source settings
void apply_synthetic_spec(cardiokit::PipelineConfig& config, const std::string& spec) {
    config.source = "synthetic";
    std::size_t start = 0;
    while (start < spec.size()) {
        auto end = spec.find(',', start);
        if (end == std::string::npos)
            end = spec.size();
        const std::string item = spec.substr(start, end - start);
        start = end + 1;
        if (item.empty())
            continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw cardiokit::config_error("--synthetic: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            if (key == "n")
                config.synth_subjects = std::stoul(value);
            else if (key == "beats")
                config.synth_beats = std::stoul(value);
            else if (key == "fs")
                config.synth_fs = std::stod(value);
            else if (key == "snr")
                config.synth_snr_db = std::stod(value);
            else
                throw cardiokit::config_error("--synthetic: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw cardiokit::config_error("--synthetic: bad value for '" + key + "': " + value);
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cardiokit: cardiogram biometrics pipeline"};
    app.require_subcommand(0, 1);

    std::string config_path, out_dir, synthetic_spec, manifest_path, emit_config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 0;

    app.add_option("--config", config_path, "configuration file (key = value)");
    app.add_option_function<std::uint64_t>(
           "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; }, "master seed");
    app.add_option("--out", out_dir, "output directory (falls back to $CARDIOKIT_OUT)");
    app.add_option("--workers", workers, "worker threads (never changes numerics)");
    app.add_option("--synthetic", synthetic_spec, "synthetic source, e.g. n=20,beats=90,fs=500");
    app.add_option("--manifest", manifest_path, "dataset manifest (JSON) source");
    app.add_option("--emit-config", emit_config_path, "write a commented config template and exit");

    const std::vector<std::string> stages = {"synth",      "preprocess", "delineate", "features",
                                             "train",      "evaluate",   "importance", "clusters",
                                             "select",     "emostats",   "report",     "all"};
    for (const auto& name : stages)
        app.add_subcommand(name, "pipeline stage: " + name)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        if (!emit_config_path.empty()) {
            cardiokit::emit_config_template(emit_config_path);
            return 0;
        }

        cardiokit::PipelineConfig config;
        if (!config_path.empty())
            config = cardiokit::parse_config_file(config_path);
        if (seed_set)
            config.seed = seed;
        if (!out_dir.empty())
            config.out_dir = out_dir;
        if (workers > 0)
            config.workers = workers;
        if (!synthetic_spec.empty())
            apply_synthetic_spec(config, synthetic_spec);
        if (!manifest_path.empty()) {
            config.source = "manifest";
            config.manifest_path = manifest_path;
        }
        if (!synthetic_spec.empty() && !manifest_path.empty())
            throw cardiokit::config_error("choose exactly one of --synthetic and --manifest");
        if (config.out_dir.empty()) {
            if (const char* env = std::getenv("CARDIOKIT_OUT"))
                config.out_dir = env;
        }

        const auto chosen = app.get_subcommands();
        if (chosen.empty())
            throw cardiokit::config_error("no subcommand given (try --help)");
        return cardiokit::run_subcommand(chosen.front()->get_name(), config);
    } catch (const cardiokit::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const cardiokit::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
