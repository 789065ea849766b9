// Command-line front end: data generation, single runs, pseudo-labeling,
// evaluation, the experiment grid, and plots.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaug/checkpoint.hpp"
#include "adaug/config.hpp"
#include "adaug/container.hpp"
#include "adaug/dataset_io.hpp"
#include "adaug/experiment.hpp"
#include "adaug/plot.hpp"

using namespace adaug;
namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;

    void add_to(CLI::App* app) {
        app->add_option("-c,--config", path, "Config file (defaults apply when omitted)");
        app->add_option("--set", overrides, "Override a config key, as key=value");
    }

    RunConfig load() const {
        RunConfig c = path.empty() ? RunConfig{} : load_config(path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
        }
        c.validate();
        return c;
    }
};

void require_file(const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("missing file '" + p.string() + "'");
}

std::vector<AnnotatedSlice> train_slices(const DatasetSplit& d) {
    std::vector<AnnotatedSlice> out;
    for (const auto& p : d.train) out.push_back(p.labeled);
    return out;
}

void print_report(const EvaluationReport& r) {
    std::printf("dice1 %s dice2 %.4f success %.4f acc %.4f (%d images, %d with lesions)\n",
                r.dice1 ? std::to_string(*r.dice1).c_str() : "n/a", r.dice2, r.success, r.acc, r.n_images,
                r.n_lesion_images);
}

int cmd_generate(const ConfigArgs& cfg_args, std::optional<std::uint64_t> seed, const std::string& out) {
    RunConfig c = cfg_args.load();
    if (seed) c.phantom.seed = *seed;
    const auto data = generate_for_config(c);
    write_dataset(out, data, c);
    std::printf("wrote %zu labeled train slices and %zu test slices to %s\n", data.split.train.size(),
                data.split.test.size(), out.c_str());
    return 0;
}

int cmd_train(const ConfigArgs& cfg_args, const std::string& mode_str, std::uint64_t seed, const std::string& data,
              const std::string& out) {
    const RunConfig c = cfg_args.load();
    const TrainingMode mode = parse_mode(mode_str);
    const DatasetSplit split = data.empty() ? generate_for_config(c).split : load_dataset(data);
    const std::string digest = config_digest(c);
    SharedStages shared;
    const RunOutput r = run_mode(mode, split, c.pipeline, seed, &shared);
    fs::create_directories(out);
    write_run_artifacts(out, r, digest, class_weights(split), true);
    CheckpointMeta meta;
    meta.net = r.liver_net.config();
    meta.role = "liver";
    meta.seed = seed;
    meta.epochs_trained = static_cast<int>(shared.liver->history.size());
    meta.class_weights = liver_class_weights(split).w;
    meta.config_digest = digest;
    save_checkpoint(fs::path(out) / "liver.ckpt", r.liver_net, meta);
    if (r.step1_net) {
        meta.net = r.step1_net->config();
        meta.role = "step1";
        meta.mode = mode_name(mode);
        meta.class_weights = class_weights(split).w;
        save_checkpoint(fs::path(out) / "step1.ckpt", *r.step1_net, meta);
    }
    save_config(fs::path(out) / "config.cfg", c);
    std::printf("%s seed %llu: ", mode_name(mode), static_cast<unsigned long long>(seed));
    print_report(r.report);
    return 0;
}

int cmd_pseudo_label(const std::string& data, const std::string& ckpt, const std::string& liver, double gamma,
                     bool area, const std::string& out) {
    require_file(ckpt);
    require_file(liver);
    const DatasetSplit split = load_dataset(data);
    const Checkpoint net = load_checkpoint(ckpt), liver_net = load_checkpoint(liver);
    if (net.meta.net.num_classes != kNumClasses) throw ConfigError("'" + ckpt + "' is not a six-class lesion net");
    if (liver_net.meta.net.num_classes != 2) throw ConfigError("'" + liver + "' is not a two-class liver net");
    std::vector<CTSlice> slices;
    std::vector<std::string> sources;
    for (const auto& p : split.train)
        for (const auto& a : p.adjacent) {
            slices.push_back(a);
            sources.push_back(p.labeled.slice.volume_id() + ":z" + std::to_string(p.labeled.slice.z_index()));
        }
    const auto pseudo = pseudo_label(net.net, liver_net.net, slices, gamma, {area}, sources);
    fs::create_directories(fs::path(out) / "labels");
    std::ofstream manifest(fs::path(out) / "manifest.jsonl", std::ios::trunc);
    for (const auto& p : pseudo) {
        char stem[64];
        std::snprintf(stem, sizeof stem, "%s_z%02d", p.slice.volume_id().c_str(), p.slice.z_index());
        const std::string file = std::string("labels/") + stem + "_pseudo.adsl";
        save_labels(fs::path(out) / file, p.hard, p.slice.spacing());
        manifest << nlohmann::json{{"volume_id", p.slice.volume_id()},
                                   {"z", p.slice.z_index()},
                                   {"labels", file},
                                   {"gamma", gamma},
                                   {"fill", "zero"},
                                   {"center", p.source_center}}
                        .dump()
                 << "\n";
    }
    std::printf("pseudo-labeled %zu adjacent slices into %s\n", pseudo.size(), out.c_str());
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& liver, const std::string& data, bool on_train,
                 const std::string& per_image) {
    require_file(ckpt);
    const Checkpoint net = load_checkpoint(ckpt);
    if (net.meta.net.num_classes != kNumClasses)
        throw ConfigError("checkpoint '" + ckpt + "' has " + std::to_string(net.meta.net.num_classes) +
                          " classes; evaluation needs " + std::to_string(kNumClasses));
    std::optional<Checkpoint> liver_net;
    if (!liver.empty()) {
        require_file(liver);
        liver_net = load_checkpoint(liver);
        if (liver_net->meta.net.num_classes != 2) throw ConfigError("'" + liver + "' is not a two-class liver net");
    }
    const DatasetSplit split = load_dataset(data);
    const auto slices = on_train ? train_slices(split) : split.test;
    if (!slices.empty() && (slices[0].slice.height() != net.meta.net.input_height ||
                            slices[0].slice.width() != net.meta.net.input_width))
        throw ConfigError("checkpoint input dims do not match the dataset");
    PipelineConfig pc;
    const auto report = evaluate_net(net.net, liver_net ? &liver_net->net : nullptr, slices, pc);
    print_report(report);
    if (!per_image.empty()) {
        std::ofstream os(per_image, std::ios::trunc);
        write_per_image_csv(os, report);
    }
    return 0;
}

int cmd_experiment(const ConfigArgs& cfg_args, const std::string& data, std::optional<int> workers, bool no_ckpt) {
    RunConfig c = cfg_args.load();
    if (workers) c.workers = *workers;
    ExperimentOptions opt;
    if (!data.empty()) opt.data_dir = data;
    opt.checkpoints = !no_ckpt;
    opt.log = [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); };
    const auto summary = run_experiment(c, opt);
    write_summary_markdown(std::cout, summary);
    if (const auto s = recorded_seconds(c.output_dir)) std::printf("\nwall time %.0f s\n", *s);
    return 0;
}

int cmd_plot(const std::string& dir, std::optional<std::uint64_t> seed, int count, const std::string& out_dir) {
    const fs::path exp = dir;
    const fs::path out = out_dir.empty() ? exp / "plots" : fs::path(out_dir);
    fs::create_directories(out);
    const auto summary = summarize(read_cells(exp));
    write_metric_bars_svg(out / "metrics.svg", summary);

    const RunConfig c = load_config(exp / "config.cfg");
    const std::uint64_t s = seed ? *seed : c.seeds.front();
    const fs::path seed_dir = exp / ("seed_" + std::to_string(s));
    require_file(seed_dir / "liver.ckpt");
    const Checkpoint liver = load_checkpoint(seed_dir / "liver.ckpt");
    // Panel order of the qualitative figure: ground truth, anatomical, extended, baseline.
    std::vector<std::pair<std::string, Checkpoint>> nets;
    for (auto m : {TrainingMode::anatomical, TrainingMode::extended, TrainingMode::baseline})
        if (fs::exists(seed_dir / mode_name(m) / "model.ckpt"))
            nets.emplace_back(mode_name(m), load_checkpoint(seed_dir / mode_name(m) / "model.ckpt"));
    const DatasetSplit split = generate_for_config(c).split;
    int written = 0;
    for (const auto& t : split.test) {
        if (written >= count) break;
        if (t.image_class == ImageClass::healthy) continue;
        std::vector<RgbImage> panels = {overlay(t.slice, t.labels)};
        for (const auto& [name, ck] : nets) {
            const auto pred = predict(ck.net, std::span<const CTSlice>(&t.slice, 1));
            const Mask liver_mask = predict_liver_mask(liver.net, t.slice);
            panels.push_back(overlay(t.slice, postprocess(argmax_labels(pred[0]), &liver_mask, t.slice.spacing(),
                                                          c.pipeline.area_filter_predictions)));
        }
        char name[96];
        std::snprintf(name, sizeof name, "overlay_%s_z%02d.png", t.slice.volume_id().c_str(), t.slice.z_index());
        write_png(out / name, hconcat(panels));
        ++written;
    }
    std::printf("wrote metrics.svg and %d overlay panels (ground truth", written);
    for (const auto& n : nets) std::printf(", %s", n.first.c_str());
    std::printf(") to %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Anatomical data augmentation for liver-lesion segmentation on synthetic CT"};
    app.require_subcommand(1);

    ConfigArgs show_cfg, gen_cfg, train_cfg, exp_cfg;
    auto* show = app.add_subcommand("config", "Print the effective configuration with its digest");
    show_cfg.add_to(show);

    std::optional<std::uint64_t> gen_seed;
    std::string gen_out;
    auto* gen = app.add_subcommand("generate-data", "Write a synthetic dataset directory");
    gen_cfg.add_to(gen);
    gen->add_option("--seed", gen_seed, "Phantom seed (overrides phantom.seed)");
    gen->add_option("-o,--out", gen_out, "Output directory")->required();

    std::string train_mode = "baseline", train_data, train_out;
    std::uint64_t train_seed = 1;
    auto* train = app.add_subcommand("train", "Train and evaluate one (mode, seed)");
    train_cfg.add_to(train);
    train->add_option("--mode", train_mode, "baseline, extended, anatomical, anatomical_gamma1, neighbor_labels");
    train->add_option("--seed", train_seed, "Training seed");
    train->add_option("--data", train_data, "Dataset directory (generated from the config when omitted)");
    train->add_option("-o,--out", train_out, "Run directory")->required();

    std::string pl_data, pl_ckpt, pl_liver, pl_out;
    double pl_gamma = 0.7;
    bool pl_no_area = false;
    auto* pl = app.add_subcommand("pseudo-label", "Label the adjacent slices of a dataset with a trained net");
    pl->add_option("--data", pl_data, "Dataset directory")->required();
    pl->add_option("--checkpoint", pl_ckpt, "Lesion net checkpoint")->required();
    pl->add_option("--liver", pl_liver, "Liver net checkpoint")->required();
    pl->add_option("--gamma", pl_gamma, "Target value of the predicted class");
    pl->add_flag("--no-area-filter", pl_no_area, "Skip the 1 cm^2 component filter");
    pl->add_option("-o,--out", pl_out, "Output directory")->required();

    std::string ev_ckpt, ev_liver, ev_data, ev_csv;
    bool ev_train = false;
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a dataset's test slices");
    ev->add_option("--checkpoint", ev_ckpt, "Lesion net checkpoint")->required();
    ev->add_option("--liver", ev_liver, "Liver net checkpoint for refinement");
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_flag("--train-split", ev_train, "Score the labeled train slices instead");
    ev->add_option("--per-image", ev_csv, "Write per-image results to this CSV");

    std::string exp_data;
    std::optional<int> exp_workers;
    bool exp_no_ckpt = false;
    auto* exp = app.add_subcommand("experiment", "Run the mode x seed grid and summarize it");
    exp_cfg.add_to(exp);
    exp->add_option("--data", exp_data, "Dataset directory (generated from the config when omitted)");
    exp->add_option("--workers", exp_workers, "Parallel seeds (ADAUG_WORKERS overrides)");
    exp->add_flag("--no-checkpoints", exp_no_ckpt, "Skip writing model checkpoints");

    std::string plot_dir, plot_out;
    std::optional<std::uint64_t> plot_seed;
    int plot_count = 6;
    auto* plot = app.add_subcommand("plot", "Metric bar chart and qualitative overlays of an experiment");
    plot->add_option("--experiment", plot_dir, "Experiment output directory")->required();
    plot->add_option("--seed", plot_seed, "Seed whose nets draw the overlays");
    plot->add_option("--count", plot_count, "Number of overlay panels");
    plot->add_option("-o,--out", plot_out, "Output directory (default <experiment>/plots)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*show) {
            const RunConfig c = show_cfg.load();
            std::printf("%s# digest %s\n", format_config(c).c_str(), config_digest(c).c_str());
            return 0;
        }
        if (*gen) return cmd_generate(gen_cfg, gen_seed, gen_out);
        if (*train) return cmd_train(train_cfg, train_mode, train_seed, train_data, train_out);
        if (*pl) return cmd_pseudo_label(pl_data, pl_ckpt, pl_liver, pl_gamma, !pl_no_area, pl_out);
        if (*ev) return cmd_evaluate(ev_ckpt, ev_liver, ev_data, ev_train, ev_csv);
        if (*exp) return cmd_experiment(exp_cfg, exp_data, exp_workers, exp_no_ckpt);
        if (*plot) return cmd_plot(plot_dir, plot_seed, plot_count, plot_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "adaug: config error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "adaug: training diverged: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "adaug: error: %s\n", e.what());
        return 1;
    }
    return 1;
}
