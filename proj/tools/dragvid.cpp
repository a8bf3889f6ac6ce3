// dragvid: run a drag edit on a synthetic scene or a frame directory, render a
// scene, or score temporal smoothness of an edited frame directory.
//
//   dragvid run <config.json>
//   dragvid render <config.json>
//   dragvid metric <input-dir> <edited-dir> [--window 8] [--search 4]

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dragvid/config.hpp"
#include "dragvid/dragvid.hpp"
#include "dragvid/image_io.hpp"

namespace fs = std::filesystem;
using namespace dragvid;

namespace {

constexpr Rgb kHandle{0.0, 1.0, 0.0};
constexpr Rgb kTarget{0.0, 0.0, 1.0};

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text))
        throw Error("cannot write " + path.string());
}

void make_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw Error("cannot create output directory " + dir.string());
}

// Input on the left with the propagated handles, edited on the right with the
// final handles; targets on both.
Video comparison_strips(const Video& input, const Video& edited, const RunReport& rep)
{
    Video out;
    for (std::size_t i = 0; i < input.size(); ++i) {
        Grid2D a = to_rgb(input[i]), b = to_rgb(edited[i]);
        if (i < rep.targets.size()) {
            const auto& fin = rep.records.empty() ? rep.initial_centers[i] : rep.records.back().centers[i];
            for (std::size_t c = 0; c < rep.targets[i].size(); ++c) {
                draw_marker(a, rep.initial_centers[i][c], kHandle);
                draw_marker(a, rep.targets[i][c], kTarget);
                draw_marker(b, fin[c], kHandle);
                draw_marker(b, rep.targets[i][c], kTarget);
            }
        }
        out.push_back(side_by_side(a, b));
    }
    return out;
}

int cmd_run(const std::string& config_path)
{
    const ConfigFile cfg = parse_config(config_path);
    const fs::path out = cfg.output_dir;
    make_dir(out);

    std::optional<SceneTruth> truth;
    Video video;
    if (cfg.scene) {
        truth = render_scene(*cfg.scene);
        video = truth->video;
    } else {
        video = read_frame_dir(*cfg.input_dir);
    }

    const BlockMatchFlow matcher;
    std::unique_ptr<Segmenter> seg;
    std::unique_ptr<Correspondence> corr;
    if (truth) {
        seg = std::make_unique<TruthOracle>(*truth);
        corr = std::make_unique<TruthOracle>(*truth);
    } else {
        seg = std::make_unique<AllForeground>();
        corr = std::make_unique<FlowCorrespondence>(video, matcher);
    }

    const RunResult res = run(video, cfg.drag, cfg.run, *seg, *corr);
    const RunReport& rep = res.report;

    write_frame_dir(out / "input", video);
    write_frame_dir(out / "edited", res.edited);
    write_frame_dir(out / "compare", comparison_strips(video, res.edited, rep));

    std::string log;
    for (const auto& r : rep.records)
        log += iteration_json(r).dump() + "\n";
    write_text(out / "trajectory.jsonl", log);
    write_text(out / "report.json", report_json(rep, cfg).dump(2) + "\n");

    std::printf("iterations %zu  distance %.4f -> %.4f  %s\n", rep.records.size(), rep.initial_distance,
                rep.final_distance, rep.converged ? "converged" : "not converged");
    if (rep.smoothness)
        std::printf("smoothness  input %.4f  edited %.4f  filtered %.4f  kept %.4f\n",
                    rep.smoothness->raw_input_mean, rep.smoothness->raw_edited_mean, rep.smoothness->mean,
                    rep.smoothness->kept_fraction);
    std::printf("wall time %.2f s\n", rep.wall_seconds);
    if (rep.aborted) {
        std::fprintf(stderr, "run aborted: %s\n", rep.diagnostic.c_str());
        return 2;
    }
    return 0;
}

int cmd_render(const std::string& config_path)
{
    const ConfigFile cfg = parse_config(config_path);
    if (!cfg.scene)
        throw Error("render needs a scene, not input_dir");
    const SceneTruth truth = render_scene(*cfg.scene);
    write_frame_dir(fs::path(cfg.output_dir) / "input", truth.video);
    write_frame_dir(fs::path(cfg.output_dir) / "fgmask", truth.fgmask);
    std::printf("wrote %d frames to %s\n", truth.frames(), (fs::path(cfg.output_dir) / "input").c_str());
    return 0;
}

int cmd_metric(const std::string& input_dir, const std::string& edited_dir, int window, int search)
{
    const Video input = read_frame_dir(input_dir);
    const Video edited = read_frame_dir(edited_dir);
    if (input.size() != edited.size())
        throw Error("frame counts differ: " + std::to_string(input.size()) + " vs " +
                    std::to_string(edited.size()));
    if (!input.front().same_shape(edited.front()))
        throw Error("frame sizes differ");
    const SmoothnessResult s = smoothness(input, edited, BlockMatchFlow(window, search));
    std::cout << smoothness_json(s).dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Point-based drag editing for short videos"};
    app.require_subcommand(1);

    std::string config;
    auto* run_cmd = app.add_subcommand("run", "full pipeline: propagate, optimize, decode, score");
    run_cmd->add_option("config", config, "config file")->required();
    auto* render_cmd = app.add_subcommand("render", "write the configured scene's frames");
    render_cmd->add_option("config", config, "config file")->required();

    std::string in_dir, ed_dir;
    int window = 8, search = 4;
    auto* metric_cmd = app.add_subcommand("metric", "temporal smoothness of an edit");
    metric_cmd->add_option("input", in_dir, "input frame directory")->required();
    metric_cmd->add_option("edited", ed_dir, "edited frame directory")->required();
    metric_cmd->add_option("--window", window, "block size")->capture_default_str();
    metric_cmd->add_option("--search", search, "search radius")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run_cmd)
            return cmd_run(config);
        if (*render_cmd)
            return cmd_render(config);
        return cmd_metric(in_dir, ed_dir, window, search);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
