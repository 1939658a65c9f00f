#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sense/bench.hpp"

namespace {

int run_bench(const std::string& config_path, const std::string& preset,
              const std::string& snr_spec, const std::string& methods_spec,
              int trials, long seed, const std::string& out_path) {
    sense::ScenarioConfig cfg;
    try {
        if (!preset.empty()) cfg = sense::preset_config(preset);
        if (!config_path.empty()) cfg = sense::load_config_file(config_path, cfg);
        if (!snr_spec.empty()) cfg.snr_db = sense::parse_snr_spec(snr_spec);
        if (!methods_spec.empty()) {
            cfg.methods.clear();
            std::stringstream ss(methods_spec);
            std::string name;
            while (std::getline(ss, name, ',')) {
                const auto m = sense::method_from_name(name);
                if (!m) throw sense::ConfigError("unknown method '" + name + "'");
                cfg.methods.push_back(*m);
            }
        }
        if (trials > 0) cfg.n_trials = trials;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        const sense::SweepResult result = sense::run_sweep(cfg);
        if (out_path.empty() || out_path == "-") {
            sense::write_csv(result.rows, std::cout);
        } else {
            std::ofstream out(out_path, std::ios::binary);
            if (!out) {
                std::cerr << "cannot open output file: " << out_path << "\n";
                return 2;
            }
            sense::write_csv(result.rows, out);
        }
        std::cerr << "trials with numerical failures: " << result.numerical_failures
                  << ", non-converged solver runs: " << result.nonconverged_runs
                  << ", CRB evaluation failures: " << result.crb_failures << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "estimator error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"OFDM time-varying channel sensing benchmark"};
    app.require_subcommand(1);

    auto* bench = app.add_subcommand("bench", "run a Monte Carlo MSE sweep and write CSV");
    std::string config_path, preset, snr_spec, methods_spec, out_path;
    int trials = 0;
    long seed = -1;
    bench->add_option("--config", config_path, "scenario file (key = value lines)");
    bench->add_option("--preset", preset, "parameter preset: fig3|fig4|fig5|fig6|fig8");
    bench->add_option("--snr", snr_spec, "SNR points, min:step:max or comma list (dB)");
    bench->add_option("--methods", methods_spec, "comma-separated method list");
    bench->add_option("--trials", trials, "Monte Carlo trials per SNR point");
    bench->add_option("--seed", seed, "master seed");
    bench->add_option("--out", out_path, "output CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (bench->parsed())
        return run_bench(config_path, preset, snr_spec, methods_spec, trials, seed, out_path);
    return 0;
}
