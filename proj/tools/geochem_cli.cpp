// geochem: command-line front end for the anomaly-detection pipeline.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "geochem/csv.hpp"
#include "geochem/error.hpp"
#include "geochem/pipeline.hpp"
#include "geochem/spatial.hpp"
#include "geochem/synth.hpp"

using namespace geochem;
namespace fs = std::filesystem;

namespace {

fs::path default_output_dir() {
    const char* env = std::getenv("GEOCHEM_OUTPUT_DIR");
    return env && *env ? fs::path(env) : fs::path("geochem_out");
}

int cmd_run(const std::string& config_path, const std::string& output_override) {
    PipelineConfig config = PipelineConfig::load(config_path, default_output_dir());
    if (!output_override.empty()) config.output_dir = output_override;
    const RunSummary summary = run_pipeline(config);
    std::cout << "dataset";
    for (const auto& d : summary.detectors) std::cout << '\t' << d;
    std::cout << '\n';
    for (std::size_t r = 0; r < summary.datasets.size(); ++r) {
        std::cout << summary.datasets[r];
        for (double v : summary.mean_auc[r]) std::cout << '\t' << csv::format_significant(v, 4);
        std::cout << '\n';
    }
    std::cout << "artifacts in " << config.output_dir.string() << '\n';
    return 0;
}

struct GridOptions {
    std::string scored;
    std::string output;
    std::string method = "idw";
    std::string variogram = "spherical";
    std::string deposits;
    double cell_size = 0.0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    double power = 2.0;
    std::size_t k_max = kDefaultNeighbourCap;
};

GridSpec grid_for(const std::vector<Point>& pts, const GridOptions& o) {
    if (o.cell_size > 0.0) return grid_covering(pts, o.cell_size);
    if (o.nx == 0 || o.ny == 0) throw ConfigError("gridmap needs --cell-size or both --nx and --ny");
    double x0 = pts[0].x, x1 = pts[0].x, y0 = pts[0].y, y1 = pts[0].y;
    for (const auto& p : pts) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    GridSpec g;
    g.origin = {x0, y0};
    g.nx = o.nx;
    g.ny = o.ny;
    g.cell_size = std::max((x1 - x0) / static_cast<double>(o.nx), (y1 - y0) / static_cast<double>(o.ny));
    if (!(g.cell_size > 0.0)) g.cell_size = 1.0;
    g.validate();
    return g;
}

int cmd_gridmap(const GridOptions& o) {
    const auto scored = read_scored_csv(o.scored);
    std::vector<Point> pts;
    std::vector<double> values;
    for (const auto& s : scored) {
        pts.push_back(s.position);
        values.push_back(s.score);
    }
    const GridSpec grid = grid_for(pts, o);
    const SpatialIndex index(pts);
    InterpolationParams params;
    params.idw_power = o.power;
    params.k_max = o.k_max;
    params.variogram_kind = variogram_kind_from_string(o.variogram);
    const RasterLayer raster = rasterize(index, values, grid, interpolation_method_from_string(o.method), params);
    write_ascii_grid(raster, o.output);
    std::cout << "wrote " << o.output << " (" << grid.ny << " x " << grid.nx << ")\n";

    if (!o.deposits.empty()) {
        RasterLayer overlay{grid, std::vector<double>(grid.nx * grid.ny, 0.0)};
        for (const auto& d : parse_deposits_csv(o.deposits)) {
            const double cx = std::floor((d.position.x - grid.origin.x) / grid.cell_size);
            const double ry = std::floor((d.position.y - grid.origin.y) / grid.cell_size);
            if (cx < 0 || ry < 0 || cx >= static_cast<double>(grid.nx) || ry >= static_cast<double>(grid.ny)) continue;
            const auto row = grid.ny - 1 - static_cast<std::size_t>(ry);
            overlay.values[row * grid.nx + static_cast<std::size_t>(cx)] = 1.0;
        }
        fs::path p(o.output);
        const fs::path layer = p.parent_path() / (p.stem().string() + "_deposits" + p.extension().string());
        write_ascii_grid(overlay, layer.string());
        std::cout << "wrote " << layer.string() << '\n';
    }
    return 0;
}

int cmd_synth(const std::string& config_path, const std::string& prefix, long long seed) {
    SynthConfig config;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw ConfigError("cannot open synth config " + config_path);
        try {
            config = SynthConfig::from_json(nlohmann::json::parse(f, nullptr, true, true));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("synth config: " + std::string(e.what()));
        }
    }
    if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
    const SynthSurvey synth = generate_survey(config);
    const fs::path parent = fs::path(prefix).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_synth_files(synth, prefix);
    for (const auto& w : synth.warnings) std::cerr << "warning: " << w << '\n';
    std::size_t halo = 0;
    for (bool b : synth.truth.in_halo) halo += b;
    std::cout << "wrote " << prefix << "_{survey,deposits,truth}.csv: " << synth.survey.size() << " samples, "
              << synth.survey.element_count() << " elements, " << synth.deposits.size() << " deposits, " << halo
              << " in-halo samples\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    const Survey survey = parse_survey_csv(path);
    const SurveyStats s = survey_stats(survey);
    std::cout << "samples\t" << s.samples << '\n'
              << "elements\t" << s.elements << '\n'
              << "extent_x\t" << csv::format_exact(s.min_x) << '\t' << csv::format_exact(s.max_x) << '\n'
              << "extent_y\t" << csv::format_exact(s.min_y) << '\t' << csv::format_exact(s.max_y) << '\n'
              << "area\t" << csv::format_significant((s.max_x - s.min_x) * (s.max_y - s.min_y), 6) << '\n'
              << "avg_sampling_distance\t" << csv::format_significant(s.avg_sampling_distance, 6) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised geochemical anomaly detection"};
    app.require_subcommand(1);

    std::string run_config, run_output;
    auto* run = app.add_subcommand("run", "Ingest, preprocess, fit detectors, score and evaluate");
    run->add_option("config", run_config, "Pipeline config (JSON)")->required();
    run->add_option("-o,--output-dir", run_output, "Override the configured output directory");

    GridOptions grid;
    auto* gridmap = app.add_subcommand("gridmap", "Rasterize a scored CSV to an ESRI ASCII grid");
    gridmap->add_option("scored", grid.scored, "Scored CSV (SAMPLEID,x,y,score)")->required();
    gridmap->add_option("-o,--output", grid.output, "Output .asc path")->required();
    gridmap->add_option("--method", grid.method, "idw or kriging")->capture_default_str();
    gridmap->add_option("--cell-size", grid.cell_size, "Cell size in coordinate units");
    gridmap->add_option("--nx", grid.nx, "Columns (with --ny, instead of --cell-size)");
    gridmap->add_option("--ny", grid.ny, "Rows");
    gridmap->add_option("--power", grid.power, "IDW power")->capture_default_str();
    gridmap->add_option("--k-max", grid.k_max, "Neighbours per estimate")->capture_default_str();
    gridmap->add_option("--variogram", grid.variogram, "spherical or exponential")->capture_default_str();
    gridmap->add_option("--deposits", grid.deposits, "Deposit CSV to write as an overlay layer");

    std::string synth_config, synth_prefix = "synth/synth";
    long long synth_seed = -1;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic survey with planted deposits");
    synth->add_option("--config", synth_config, "Synth config (JSON); defaults otherwise");
    synth->add_option("--prefix", synth_prefix, "Output prefix")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Override the seed");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "Print survey statistics");
    inspect->add_option("survey", inspect_path, "Survey CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::Config);
    }

    try {
        if (*run) return cmd_run(run_config, run_output);
        if (*gridmap) return cmd_gridmap(grid);
        if (*synth) return cmd_synth(synth_config, synth_prefix, synth_seed);
        if (*inspect) return cmd_inspect(inspect_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::Data);
    }
    return 0;
}
