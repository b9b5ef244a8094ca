// Writes the stock scenario and configuration files into a target directory:
// the campus layout, the uniform calibration scenes (1/2/4/8 cameras), the
// notification round-trip scenes, and the calibrated run configuration.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "svs/experiment.hpp"
#include "svs/scenario.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw svs::RuntimeError("cannot write " + path.string());
    out << text;
    std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate the stock scenario and configuration files"};
    std::string out_dir = ".";
    std::int64_t duration = 36000;
    app.add_option("--out", out_dir, "target directory (scenarios/ and configs/ created inside)")
        ->capture_default_str();
    app.add_option("--duration-frames", duration, "frames per scenario (30 FPS)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        fs::path scen_dir = fs::path(out_dir) / "scenarios";
        fs::path cfg_dir = fs::path(out_dir) / "configs";
        fs::create_directories(scen_dir);
        fs::create_directories(cfg_dir);

        for (int n : {1, 2, 4, 8}) {
            svs::Scenario s = svs::make_calibration_scenario(n, 2, duration);
            write_text(scen_dir / ("calibration-" + std::to_string(n) + "cam.json"),
                       svs::scenario_to_json(s));
        }

        write_text(scen_dir / "campus-8cam.json",
                   svs::scenario_to_json(svs::make_campus_scenario(duration)));

        for (int n : {1, 4, 8}) {
            for (auto kind : {svs::AnomalyKind::Object, svs::AnomalyKind::Behavioral}) {
                int density = n >= 8 ? 4 : 2;
                svs::Scenario s = svs::make_pcp_scenario(n, kind, 30, density);
                std::string stem = std::string("pcp-") +
                                   (kind == svs::AnomalyKind::Object ? "object" : "behavior") +
                                   "-" + std::to_string(n) + "cam.json";
                write_text(scen_dir / stem, svs::scenario_to_json(s));
            }
        }

        // A one-minute single-camera smoke scene for quick checks.
        svs::Scenario smoke = svs::make_calibration_scenario(1, 2, 1800, 4242);
        write_text(scen_dir / "smoke-1cam-60s.json", svs::scenario_to_json(smoke));

        write_text(cfg_dir / "calibrated.json",
                   svs::run_bundle_to_json(svs::calibrated_run_bundle()).dump(2) + "\n");

        // Zero-cost stages: functional runs that finish instantly under the
        // virtual clock (useful for logic-only checks).
        svs::RunBundle zero;
        zero.pipeline = svs::PipelineConfig::defaults();
        write_text(cfg_dir / "zero-cost.json", svs::run_bundle_to_json(zero).dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
