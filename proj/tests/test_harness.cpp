#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adaug/checkpoint.hpp"
#include "adaug/config.hpp"
#include "adaug/dataset_io.hpp"
#include "adaug/experiment.hpp"
#include "adaug/plot.hpp"

using namespace adaug;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("adaug_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

RunConfig tiny_config() {
    RunConfig c;
    c.dataset.train_volumes = 4;
    c.dataset.test_volumes = 1;
    c.pipeline.net.width_factor = 16;
    c.pipeline.optim.epochs = 1;
    c.modes = {TrainingMode::baseline, TrainingMode::anatomical};
    c.seeds = {1, 2};
    return c;
}

CellResult cell(TrainingMode m, std::uint64_t seed, double d1, double d2, double s, double a) {
    CellResult c;
    c.mode = m;
    c.seed = seed;
    c.config_digest = "abc";
    c.report.dice1 = d1;
    c.report.dice2 = d2;
    c.report.success = s;
    c.report.acc = a;
    return c;
}

}  // namespace

TEST(Config, DefaultsValidate) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.seeds.size(), 5u);
    EXPECT_EQ(c.modes.size(), std::size(kAllModes));
}

TEST(Config, TextRoundTripIsExact) {
    RunConfig c;
    c.pipeline.optim.learning_rate = 0.1 + 1e-17;
    c.pipeline.gamma = 0.7000000000000001;
    c.phantom.noise_sigma = 1.0 / 3.0;
    c.pipeline.fill_mode = FillMode::uniform;
    c.modes = {TrainingMode::anatomical_gamma1, TrainingMode::baseline};
    c.seeds = {7, 3};
    c.output_dir = "some dir/x";
    const RunConfig back = parse_config(format_config(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(format_config(back), format_config(c));
}

TEST(Config, ShippedDeskConfigMatchesDefaults) {
    const fs::path p = fs::path(ADAUG_SOURCE_DIR) / "configs" / "desk.cfg";
    ASSERT_TRUE(fs::exists(p));
    EXPECT_EQ(load_config(p), RunConfig{});
}

TEST(Config, DigestIgnoresOutputDirAndWorkers) {
    RunConfig a, b;
    b.output_dir = "elsewhere";
    b.workers = 4;
    EXPECT_EQ(config_digest(a), config_digest(b));
    b.pipeline.gamma = 0.8;
    EXPECT_NE(config_digest(a), config_digest(b));
    EXPECT_EQ(config_digest(a).size(), 64u);
}

TEST(Config, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config("optim.lr = 0.1\n"), ConfigError);
    EXPECT_THROW(parse_config("optim.learning_rate = fast\n"), ConfigError);
    EXPECT_THROW(parse_config("optim.epochs = 2.5\n"), ConfigError);
    EXPECT_THROW(parse_config("run.modes = baseline, bogus\n"), ConfigError);
    EXPECT_THROW(parse_config("no equals sign\n"), ConfigError);
    RunConfig c;
    EXPECT_THROW(set_config_value(c, "ssl.fill_mode", "random"), ConfigError);
}

TEST(Config, ValidateCatchesInconsistencies) {
    RunConfig c;
    c.pipeline.net.input_height = 32;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.pipeline.gamma = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.seeds.clear();
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, WorkerOverrideFromEnvironment) {
    RunConfig c;
    c.workers = 3;
    ::unsetenv("ADAUG_WORKERS");
    EXPECT_EQ(effective_workers(c), 3);
    ::setenv("ADAUG_WORKERS", "2", 1);
    EXPECT_EQ(effective_workers(c), 2);
    ::unsetenv("ADAUG_WORKERS");
}

TEST(Checkpoint, RoundTripIsBitExact) {
    NetworkConfig nc;
    nc.width_factor = 16;
    nc.input_height = nc.input_width = 32;
    nc.init_seed = 11;
    SegmentationNet net(nc);
    int k = 0;
    for (auto& p : net.parameters()) {
        if (p.name.find("running") == std::string::npos) continue;
        for (auto& v : p.value) v = 0.25f + 0.001f * static_cast<float>(k++);
    }
    CheckpointMeta meta;
    meta.net = nc;
    meta.mode = "extended";
    meta.seed = 42;
    meta.epochs_trained = 3;
    meta.class_weights = {0.1, 0.2, 1.0 / 3.0, 4, 5, 6};
    meta.gamma = 0.7;
    meta.config_digest = "d";
    const fs::path p = scratch("ckpt") / "m.ckpt";
    fs::create_directories(p.parent_path());
    save_checkpoint(p, net, meta);
    const Checkpoint back = load_checkpoint(p);
    EXPECT_EQ(back.meta, meta);
    ASSERT_EQ(back.net.parameters().size(), net.parameters().size());
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
        EXPECT_EQ(back.net.parameters()[i].name, net.parameters()[i].name);
        EXPECT_EQ(back.net.parameters()[i].value, net.parameters()[i].value) << net.parameters()[i].name;
    }
    const fs::path p2 = p.parent_path() / "again.ckpt";
    save_checkpoint(p2, back.net, back.meta);
    EXPECT_EQ(slurp(p), slurp(p2));
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const fs::path dir = scratch("ckpt_bad");
    fs::create_directories(dir);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    EXPECT_ANY_THROW(load_checkpoint(dir / "junk.ckpt"));
    EXPECT_ANY_THROW(load_checkpoint(dir / "missing.ckpt"));

    NetworkConfig nc;
    nc.width_factor = 16;
    nc.input_height = nc.input_width = 32;
    SegmentationNet net(nc);
    CheckpointMeta meta;
    meta.net = nc;
    save_checkpoint(dir / "ok.ckpt", net, meta);
    std::string bytes = slurp(dir / "ok.ckpt");
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    EXPECT_ANY_THROW(load_checkpoint(dir / "short.ckpt"));
    std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << "x";
    EXPECT_ANY_THROW(load_checkpoint(dir / "long.ckpt"));
}

TEST(DatasetIo, WritesDeterministicBytesAndLoadsBack) {
    RunConfig c = tiny_config();
    const GeneratedDataset data = generate_for_config(c);
    const fs::path a = scratch("ds_a"), b = scratch("ds_b");
    write_dataset(a, data, c);
    write_dataset(b, generate_for_config(c), c);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const fs::path other = b / fs::relative(e.path(), a);
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path();
    }
    EXPECT_GT(files, 4u);
    EXPECT_EQ(load_config(a / "config.cfg"), c);

    const DatasetSplit back = load_dataset(a);
    ASSERT_EQ(back.train.size(), data.split.train.size());
    ASSERT_EQ(back.test.size(), data.split.test.size());
    for (std::size_t i = 0; i < back.train.size(); ++i) {
        EXPECT_EQ(back.train[i].labeled.slice, data.split.train[i].labeled.slice);
        EXPECT_EQ(back.train[i].labeled.labels, data.split.train[i].labeled.labels);
        EXPECT_EQ(back.train[i].labeled.image_class, data.split.train[i].labeled.image_class);
        EXPECT_EQ(back.train[i].adjacent, data.split.train[i].adjacent);
        EXPECT_EQ(back.train[i].adjacent_truth, data.split.train[i].adjacent_truth);
    }
    for (std::size_t i = 0; i < back.test.size(); ++i) {
        EXPECT_EQ(back.test[i].slice, data.split.test[i].slice);
        EXPECT_EQ(back.test[i].labels, data.split.test[i].labels);
    }
    EXPECT_NO_THROW(back.validate_disjoint());
}

TEST(Summary, SingleSeedHasZeroStd) {
    const CellResult cells[] = {cell(TrainingMode::baseline, 1, 0.5, 0.6, 0.7, 0.8)};
    const auto s = summarize(cells);
    ASSERT_EQ(s.rows.size(), 1u);
    EXPECT_EQ(s.rows[0].n_seeds, 1);
    EXPECT_DOUBLE_EQ(s.rows[0].dice2.mean, 0.6);
    EXPECT_EQ(s.rows[0].dice2.std, 0.0);
}

TEST(Summary, SampleStdAndRounding) {
    const CellResult cells[] = {cell(TrainingMode::extended, 1, 0.664, 0.6, 0.1, 0.2),
                                cell(TrainingMode::extended, 2, 0.664, 0.8, 0.3, 0.2)};
    const auto s = summarize(cells);
    EXPECT_NEAR(s.rows[0].dice2.std, std::sqrt(0.02), 1e-15);
    std::ostringstream md;
    write_summary_markdown(md, s);
    EXPECT_NE(md.str().find("66 ± 0"), std::string::npos) << md.str();
    EXPECT_NE(md.str().find("70 ± 14"), std::string::npos) << md.str();
}

TEST(Summary, InvariantUnderCellOrder) {
    std::vector<CellResult> cells;
    for (std::uint64_t s = 1; s <= 4; ++s)
        for (auto m : kAllModes) cells.push_back(cell(m, s, 0.1 * s, 0.05 * s + 0.01 * static_cast<int>(m), 0.2, 0.3));
    const auto a = summarize(cells);
    std::reverse(cells.begin(), cells.end());
    std::swap(cells[1], cells[7]);
    const auto b = summarize(cells);
    std::ostringstream sa, sb;
    write_summary_csv(sa, a);
    write_summary_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    std::ostringstream ca, cb;
    write_cells_csv(ca, a);
    write_cells_csv(cb, b);
    EXPECT_EQ(ca.str(), cb.str());
}

TEST(Summary, RejectsEmptyMixedAndDuplicateCells) {
    EXPECT_ANY_THROW(summarize(std::span<const CellResult>{}));
    CellResult mixed[] = {cell(TrainingMode::baseline, 1, 0, 0, 0, 0), cell(TrainingMode::baseline, 2, 0, 0, 0, 0)};
    mixed[1].config_digest = "other";
    EXPECT_ANY_THROW(summarize(mixed));
    const CellResult dup[] = {cell(TrainingMode::baseline, 1, 0, 0, 0, 0), cell(TrainingMode::baseline, 1, 0, 0, 0, 0)};
    EXPECT_ANY_THROW(summarize(dup));
}

TEST(Experiment, TinyGridWritesArtifactsAndRefusesOtherDigest) {
    RunConfig c = tiny_config();
    const fs::path out = scratch("exp");
    c.output_dir = out.string();
    const auto summary = run_experiment(c);
    EXPECT_EQ(summary.cells.size(), 4u);
    for (const char* f : {"config.cfg", "config.digest", "summary.csv", "summary.md", "cells.csv", "timing.txt"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    for (const char* s : {"seed_1", "seed_2"}) {
        EXPECT_TRUE(fs::exists(out / s / "liver.ckpt"));
        for (const char* m : {"baseline", "anatomical"})
            for (const char* f : {"manifest.json", "loss.csv", "per_image.csv", "model.ckpt"})
                EXPECT_TRUE(fs::exists(out / s / m / f)) << s << "/" << m << "/" << f;
    }
    EXPECT_FALSE(fs::exists(out / ".staging") && !fs::is_empty(out / ".staging"));
    EXPECT_TRUE(recorded_seconds(out).has_value());

    const auto cells = read_cells(out);
    ASSERT_EQ(cells.size(), 4u);
    const auto again = summarize(cells);
    std::ostringstream a, b;
    write_summary_csv(a, summary);
    write_summary_csv(b, again);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(slurp(out / "summary.csv"), a.str());

    const Checkpoint ck = load_checkpoint(out / "seed_1" / "anatomical" / "model.ckpt");
    EXPECT_EQ(ck.meta.config_digest, config_digest(c));
    EXPECT_EQ(ck.meta.mode, "anatomical");
    EXPECT_EQ(ck.meta.seed, 1u);

    RunConfig other = c;
    other.pipeline.gamma = 0.8;
    EXPECT_THROW(run_experiment(other), ConfigError);
}

TEST(Plot, OverlayColoursLesionsOnly) {
    Grid2D<float> px(16, 16, 100.0f);
    CTSlice slice(px, PixelSpacing{1, 1, 1}, "v", 0);
    Grid2D<std::uint8_t> lab(16, 16, 0);
    lab(1, 1) = static_cast<std::uint8_t>(ClassId::cyst);
    lab(2, 2) = static_cast<std::uint8_t>(ClassId::liver);
    const auto img = overlay(slice, LabelMap(lab), 2);
    ASSERT_EQ(img.width, 32);
    auto at = [&](int y, int x, int k) { return img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + k]; };
    EXPECT_EQ(at(0, 0, 0), at(0, 0, 1));
    EXPECT_EQ(at(4, 4, 0), at(0, 0, 0));
    EXPECT_GT(at(2, 2, 1), at(2, 2, 0));
    EXPECT_GT(at(3, 3, 1), at(3, 3, 2));

    const RgbImage panels[] = {img, img};
    const auto both = hconcat(panels, 3);
    EXPECT_EQ(both.width, 67);
    const fs::path p = scratch("png") / "o.png";
    fs::create_directories(p.parent_path());
    write_png(p, both);
    const std::string bytes = slurp(p);
    ASSERT_GT(bytes.size(), 8u);
    EXPECT_EQ(bytes.substr(1, 3), "PNG");
}
