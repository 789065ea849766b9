#include "adaug/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adaug/checkpoint.hpp"
#include "adaug/dataset_io.hpp"

namespace adaug {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest text that parses back to the same double.
std::string fmt(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

int mode_index(TrainingMode m) { return static_cast<int>(m); }

MetricStat stat(const std::vector<double>& xs) {
    MetricStat s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double sum = 0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

std::string pct(double v) { return std::to_string(std::lround(v * 100.0)); }

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trimmed(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
}

}  // namespace

const ModeSummary* ExperimentSummary::row(TrainingMode m) const {
    for (const auto& r : rows)
        if (r.mode == m) return &r;
    return nullptr;
}

CellResult make_cell(const RunOutput& out, const std::string& config_digest) {
    CellResult c;
    c.mode = out.mode;
    c.seed = out.seed;
    c.gamma = out.gamma;
    c.init = out.init;
    c.config_digest = config_digest;
    c.counters = out.counters;
    c.report = out.report;
    c.epochs = static_cast<int>(out.history.size());
    if (!out.history.empty()) {
        c.first_loss = out.history.front().mean_loss;
        c.final_loss = out.history.back().mean_loss;
    }
    return c;
}

ExperimentSummary summarize(std::span<const CellResult> cells) {
    if (cells.empty()) throw std::invalid_argument("no run results to summarize");
    ExperimentSummary s;
    s.config_digest = cells.front().config_digest;
    for (const auto& c : cells)
        if (c.config_digest != s.config_digest)
            throw ConfigError("refusing to summarize runs from different configs (" + s.config_digest + " vs " +
                              c.config_digest + ")");
    s.cells.assign(cells.begin(), cells.end());
    std::sort(s.cells.begin(), s.cells.end(), [](const CellResult& a, const CellResult& b) {
        return std::pair(mode_index(a.mode), a.seed) < std::pair(mode_index(b.mode), b.seed);
    });
    for (std::size_t i = 1; i < s.cells.size(); ++i)
        if (s.cells[i].mode == s.cells[i - 1].mode && s.cells[i].seed == s.cells[i - 1].seed)
            throw std::invalid_argument(std::string("duplicate run for ") + mode_name(s.cells[i].mode) + " seed " +
                                        std::to_string(s.cells[i].seed));
    for (auto m : kAllModes) {
        std::vector<double> d1, d2, su, acc;
        for (const auto& c : s.cells) {
            if (c.mode != m) continue;
            if (c.report.dice1) d1.push_back(*c.report.dice1);
            d2.push_back(c.report.dice2);
            su.push_back(c.report.success);
            acc.push_back(c.report.acc);
        }
        if (d2.empty()) continue;
        s.rows.push_back({m, static_cast<int>(d2.size()), stat(d1), stat(d2), stat(su), stat(acc)});
    }
    return s;
}

void write_summary_csv(std::ostream& os, const ExperimentSummary& s) {
    os << "mode,n_seeds,dice1_mean,dice1_std,dice1_n,dice2_mean,dice2_std,success_mean,success_std,acc_mean,acc_std,"
          "config_digest\n";
    for (const auto& r : s.rows)
        os << mode_name(r.mode) << ',' << r.n_seeds << ',' << fmt(r.dice1.mean) << ',' << fmt(r.dice1.std) << ','
           << r.dice1.n << ',' << fmt(r.dice2.mean) << ',' << fmt(r.dice2.std) << ',' << fmt(r.success.mean) << ','
           << fmt(r.success.std) << ',' << fmt(r.acc.mean) << ',' << fmt(r.acc.std) << ',' << s.config_digest << '\n';
}

void write_summary_markdown(std::ostream& os, const ExperimentSummary& s) {
    os << "| Model | Dice1 | Dice2 | Success | ACC | Seeds |\n|---|---|---|---|---|---|\n";
    auto cell = [](const MetricStat& m) { return m.n ? pct(m.mean) + " ± " + pct(m.std) : std::string("n/a"); };
    for (const auto& r : s.rows)
        os << "| " << mode_name(r.mode) << " | " << cell(r.dice1) << " | " << cell(r.dice2) << " | "
           << cell(r.success) << " | " << cell(r.acc) << " | " << r.n_seeds << " |\n";
    os << "\nMetrics x100, mean ± sample std over seeds.\n";
    const auto* base = s.row(TrainingMode::baseline);
    const auto* anat = s.row(TrainingMode::anatomical);
    const auto* ext = s.row(TrainingMode::extended);
    auto gap = [&](const char* label, const ModeSummary* a, const ModeSummary* b) {
        if (!a || !b) return;
        char buf[160];
        std::snprintf(buf, sizeof buf, "- %s: Dice2 %+.4f, ACC %+.4f, Success %+.4f\n", label,
                      a->dice2.mean - b->dice2.mean, a->acc.mean - b->acc.mean, a->success.mean - b->success.mean);
        os << buf;
    };
    if ((anat && base) || (anat && ext)) os << "\nDifferences of means:\n";
    gap("anatomical - baseline", anat, base);
    gap("anatomical - extended", anat, ext);
    gap("anatomical - anatomical_gamma1", anat, s.row(TrainingMode::anatomical_gamma1));
    gap("anatomical - neighbor_labels", anat, s.row(TrainingMode::neighbor_labels));
    os << "\nConfig digest: `" << s.config_digest << "`\n";
}

void write_cells_csv(std::ostream& os, const ExperimentSummary& s) {
    os << "mode,seed,gamma,init,dice1,dice2,success,acc,n_images,n_lesion_images,labeled_items,pseudo_items,"
          "augs_per_item,samples_per_epoch,labeling_forward_passes,epochs,first_loss,final_loss,config_digest\n";
    for (const auto& c : s.cells)
        os << mode_name(c.mode) << ',' << c.seed << ',' << fmt(c.gamma) << ',' << c.init << ','
           << (c.report.dice1 ? fmt(*c.report.dice1) : "") << ',' << fmt(c.report.dice2) << ','
           << fmt(c.report.success) << ',' << fmt(c.report.acc) << ',' << c.report.n_images << ','
           << c.report.n_lesion_images << ',' << c.counters.labeled_items << ',' << c.counters.pseudo_items << ','
           << c.counters.augs_per_item << ',' << c.counters.samples_per_epoch << ','
           << c.counters.labeling_forward_passes << ',' << c.epochs << ',' << fmt(c.first_loss) << ','
           << fmt(c.final_loss) << ',' << c.config_digest << '\n';
}

void write_run_artifacts(const fs::path& dir, const RunOutput& out, const std::string& config_digest,
                         const ClassWeights& weights, bool checkpoint) {
    fs::create_directories(dir);
    const CellResult c = make_cell(out, config_digest);
    const json j = {
        {"mode", mode_name(out.mode)},
        {"seed", out.seed},
        {"gamma", out.gamma},
        {"init", out.init},
        {"config_digest", config_digest},
        {"epochs", c.epochs},
        {"first_loss", c.first_loss},
        {"final_loss", c.final_loss},
        {"counters",
         {{"labeled_items", out.counters.labeled_items},
          {"pseudo_items", out.counters.pseudo_items},
          {"augs_per_item", out.counters.augs_per_item},
          {"samples_per_epoch", out.counters.samples_per_epoch},
          {"labeling_forward_passes", out.counters.labeling_forward_passes}}},
        {"metrics",
         {{"dice1", out.report.dice1 ? json(*out.report.dice1) : json(nullptr)},
          {"dice2", out.report.dice2},
          {"success", out.report.success},
          {"acc", out.report.acc},
          {"n_images", out.report.n_images},
          {"n_lesion_images", out.report.n_lesion_images}}},
        {"checkpoint", checkpoint ? json("model.ckpt") : json(nullptr)},
        {"step1_checkpoint", out.step1_net ? json("../baseline/model.ckpt") : json(nullptr)},
        {"liver_checkpoint", "../liver.ckpt"}};
    write_text_atomic(dir / "manifest.json", j.dump(2) + "\n");

    std::ostringstream loss;
    loss << "epoch,mean_loss,samples,config_digest\n";
    for (const auto& e : out.history)
        loss << e.epoch << ',' << fmt(e.mean_loss) << ',' << e.samples << ',' << config_digest << '\n';
    write_text_atomic(dir / "loss.csv", loss.str());

    std::ostringstream per_image;
    write_per_image_csv(per_image, out.report);
    write_text_atomic(dir / "per_image.csv", per_image.str());

    if (checkpoint) {
        CheckpointMeta meta;
        meta.net = out.net.config();
        meta.role = "lesion";
        meta.mode = mode_name(out.mode);
        meta.seed = out.seed;
        meta.epochs_trained = c.epochs;
        meta.class_weights = weights.w;
        meta.gamma = out.gamma;
        meta.init = out.init;
        meta.config_digest = config_digest;
        save_checkpoint(dir / "model.ckpt", out.net, meta);
    }
}

CellResult read_run_manifest(const fs::path& manifest) {
    try {
        const json j = json::parse(read_text(manifest));
        CellResult c;
        c.mode = parse_mode(j.at("mode").get<std::string>());
        c.seed = j.at("seed").get<std::uint64_t>();
        c.gamma = j.at("gamma").get<double>();
        c.init = j.at("init").get<std::string>();
        c.config_digest = j.at("config_digest").get<std::string>();
        c.epochs = j.at("epochs").get<int>();
        c.first_loss = j.at("first_loss").get<double>();
        c.final_loss = j.at("final_loss").get<double>();
        const auto& k = j.at("counters");
        c.counters.labeled_items = k.at("labeled_items").get<std::size_t>();
        c.counters.pseudo_items = k.at("pseudo_items").get<std::size_t>();
        c.counters.augs_per_item = k.at("augs_per_item").get<int>();
        c.counters.samples_per_epoch = k.at("samples_per_epoch").get<std::size_t>();
        c.counters.labeling_forward_passes = k.at("labeling_forward_passes").get<std::size_t>();
        const auto& m = j.at("metrics");
        if (!m.at("dice1").is_null()) c.report.dice1 = m.at("dice1").get<double>();
        c.report.dice2 = m.at("dice2").get<double>();
        c.report.success = m.at("success").get<double>();
        c.report.acc = m.at("acc").get<double>();
        c.report.n_images = m.at("n_images").get<int>();
        c.report.n_lesion_images = m.at("n_lesion_images").get<int>();
        return c;
    } catch (const std::exception& e) {
        throw std::runtime_error("bad run manifest '" + manifest.string() + "': " + e.what());
    }
}

std::vector<CellResult> read_cells(const fs::path& experiment_dir) {
    std::vector<CellResult> cells;
    if (!fs::is_directory(experiment_dir)) throw std::runtime_error("no experiment directory '" + experiment_dir.string() + "'");
    for (const auto& seed_dir : fs::directory_iterator(experiment_dir)) {
        if (!seed_dir.is_directory() || seed_dir.path().filename().string().rfind("seed_", 0) != 0) continue;
        for (const auto& mode_dir : fs::directory_iterator(seed_dir.path()))
            if (fs::exists(mode_dir.path() / "manifest.json"))
                cells.push_back(read_run_manifest(mode_dir.path() / "manifest.json"));
    }
    return cells;
}

void write_summary_files(const fs::path& dir, const ExperimentSummary& summary) {
    std::ostringstream csv, md, cells;
    write_summary_csv(csv, summary);
    write_summary_markdown(md, summary);
    write_cells_csv(cells, summary);
    write_text_atomic(dir / "summary.csv", csv.str());
    write_text_atomic(dir / "summary.md", md.str());
    write_text_atomic(dir / "cells.csv", cells.str());
}

ExperimentSummary run_experiment(const RunConfig& config, const ExperimentOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    const std::string digest = config_digest(config);
    const fs::path out = config.output_dir;
    auto log = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };

    fs::create_directories(out);
    if (fs::exists(out / "config.digest")) {
        const std::string old = trimmed(read_text(out / "config.digest"));
        if (old != digest)
            throw ConfigError("'" + out.string() + "' holds results of config " + old + ", not " + digest +
                              "; use a fresh output directory");
    }
    write_text_atomic(out / "config.digest", digest + "\n");
    save_config(out / "config.cfg", config);

    DatasetSplit split;
    if (options.data_dir) {
        const RunConfig data_cfg = load_config(*options.data_dir / "config.cfg");
        if (!(data_cfg.phantom == config.phantom) || !(data_cfg.dataset == config.dataset))
            throw ConfigError("dataset '" + options.data_dir->string() + "' was generated with different phantom or split settings");
        split = load_dataset(*options.data_dir);
    } else {
        split = generate_for_config(config).split;
    }
    log("dataset: " + std::to_string(split.train.size()) + " labeled train slices, " +
        std::to_string(split.test.size()) + " test slices");
    const ClassWeights weights = class_weights(split);
    const ClassWeights liver_weights = liver_class_weights(split);

    const fs::path staging = out / ".staging";
    fs::create_directories(staging);
    const std::size_t n_seeds = config.seeds.size();
    std::vector<std::vector<CellResult>> results(n_seeds);
    std::vector<std::exception_ptr> errors(n_seeds);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex log_mutex;

    auto worker = [&] {
        for (std::size_t idx = next++; idx < n_seeds && !failed; idx = next++) {
            const std::uint64_t seed = config.seeds[idx];
            const std::string name = "seed_" + std::to_string(seed);
            try {
                const fs::path stage = staging / name;
                fs::remove_all(stage);
                fs::create_directories(stage);
                SharedStages shared;
                for (auto mode : config.modes) {
                    const auto t = std::chrono::steady_clock::now();
                    const RunOutput r = run_mode(mode, split, config.pipeline, seed, &shared);
                    write_run_artifacts(stage / mode_name(mode), r, digest, weights, options.checkpoints);
                    results[idx].push_back(make_cell(r, digest));
                    char buf[200];
                    std::snprintf(buf, sizeof buf, "seed %llu %-18s dice2 %.4f acc %.4f success %.4f (%.0fs)",
                                  static_cast<unsigned long long>(seed), mode_name(mode), r.report.dice2, r.report.acc,
                                  r.report.success,
                                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count());
                    std::lock_guard lock(log_mutex);
                    log(buf);
                }
                if (options.checkpoints && shared.liver) {
                    CheckpointMeta meta;
                    meta.net = shared.liver->net.config();
                    meta.role = "liver";
                    meta.seed = seed;
                    meta.epochs_trained = static_cast<int>(shared.liver->history.size());
                    meta.class_weights = liver_weights.w;
                    meta.config_digest = digest;
                    save_checkpoint(stage / "liver.ckpt", shared.liver->net, meta);
                }
                const fs::path dest = out / name;
                fs::remove_all(dest);
                fs::rename(stage, dest);
            } catch (...) {
                errors[idx] = std::current_exception();
                failed = true;
            }
        }
    };

    const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(effective_workers(config)), n_seeds));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    fs::remove(staging);

    std::vector<CellResult> cells;
    for (auto& r : results) cells.insert(cells.end(), r.begin(), r.end());
    for (const auto& c : read_cells(out))
        if (c.config_digest != digest) throw ConfigError("'" + out.string() + "' mixes artifacts of different configs");
    const ExperimentSummary summary = summarize(cells);
    write_summary_files(out, summary);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text_atomic(out / "timing.txt", "seconds " + fmt(seconds) + "\nworkers " + std::to_string(workers) + "\n");
    return summary;
}

std::optional<double> recorded_seconds(const fs::path& dir) {
    std::ifstream in(dir / "timing.txt");
    std::string key;
    double v = 0;
    if (in >> key >> v && key == "seconds") return v;
    return std::nullopt;
}

}  // namespace adaug
