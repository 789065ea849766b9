#pragma once

// Anatomical data augmentation:
//   1. train on the labeled slices;
//   2. label the unlabeled z-neighbours of every labeled slice with that net,
//      refined by a separate liver-only net;
//   3. retrain from scratch on labeled slices plus the neighbours, whose targets
//      carry gamma < 1 instead of 1.
// plus the baseline / extended-augmentation / ablation variants it is compared to.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaug/augment.hpp"
#include "adaug/core.hpp"
#include "adaug/loss.hpp"
#include "adaug/metrics.hpp"
#include "adaug/net.hpp"

namespace adaug {

enum class TrainingMode : std::uint8_t { baseline, extended, anatomical, anatomical_gamma1, neighbor_labels };

inline constexpr TrainingMode kAllModes[] = {TrainingMode::baseline, TrainingMode::extended, TrainingMode::anatomical,
                                             TrainingMode::anatomical_gamma1, TrainingMode::neighbor_labels};

const char* mode_name(TrainingMode m) noexcept;
TrainingMode parse_mode(const std::string& name);

/// Raised when the training loss becomes NaN or infinite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
    double learning_rate = 1e-2;
    double momentum = 0.9;
    int batch_size = 4;
    int epochs = 60;
    /// After the last epoch, reset batch-norm running statistics to their values over the
    /// unaugmented training items.
    bool recalibrate_bn = true;
    bool operator==(const OptimizerConfig&) const = default;
};

struct PipelineConfig {
    NetworkConfig net;
    OptimizerConfig optim;
    AugmentPolicy augment;  // ranges; the per-item count comes from the fields below
    int augs_baseline = 2;
    int augs_extended = 6;
    double gamma = 0.7;
    FillMode fill_mode = FillMode::zero;
    bool resume_from_step1 = false;
    bool area_filter_predictions = true;
    bool area_filter_pseudo = true;
    bool liver_refine_predictions = true;
    EvaluationOptions eval;
    bool operator==(const PipelineConfig&) const = default;
};

struct TrainItem {
    CTSlice slice;
    SoftLabelMap targets;
    std::string item_id;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    std::size_t samples = 0;
};

struct TrainOptions {
    NetworkConfig net;
    OptimizerConfig optim;
    AugmentPolicy policy;
    ClassWeights weights;
    std::uint64_t seed = 0;                  // shuffling and dropout
    const SegmentationNet* init = nullptr;   // continue from these weights instead of a fresh init
    std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
    SegmentationNet net;
    std::vector<EpochStats> history;
};

/// Epochs of augmented mini-batch SGD with momentum on the weighted soft cross-entropy.
/// Every epoch draws `policy.augmentations_per_item` fresh transforms per item, so an
/// epoch sees exactly items.size() * augmentations_per_item samples.
TrainResult train_supervised(std::span<const TrainItem> items, const TrainOptions& options);

/// Pixel accuracy of eval-mode argmax predictions against the argmax of the targets.
double pixel_accuracy(const SegmentationNet& net, std::span<const TrainItem> items);

struct PseudoLabeledSlice {
    CTSlice slice;
    LabelMap hard;         // refined prediction
    SoftLabelMap targets;  // hard encoded with gamma, origin pseudo_label
    std::string source_center;
};

struct PseudoLabelOptions {
    bool area_filter = true;
};

/// Liver mask predicted by the two-class liver net.
Mask predict_liver_mask(const SegmentationNet& liver_net, const CTSlice& slice);

/// Liver refinement then (optionally) the 1 cm^2 filter.
LabelMap postprocess(const LabelMap& labels, const Mask* liver_mask, const PixelSpacing& spacing, bool area);

/// Eval-mode labeling of unlabeled slices. Every slice costs one forward pass of each net.
std::vector<PseudoLabeledSlice> pseudo_label(const SegmentationNet& net, const SegmentationNet& liver_net,
                                             std::span<const CTSlice> slices, double gamma,
                                             const PseudoLabelOptions& options = {},
                                             std::span<const std::string> source_centers = {});

/// Test-set evaluation with post-processing.
EvaluationReport evaluate_net(const SegmentationNet& net, const SegmentationNet* liver_net,
                              std::span<const AnnotatedSlice> test, const PipelineConfig& config);

struct RunCounters {
    std::size_t labeled_items = 0;
    std::size_t pseudo_items = 0;
    int augs_per_item = 0;
    std::size_t samples_per_epoch = 0;
    std::size_t labeling_forward_passes = 0;
};

struct RunOutput {
    TrainingMode mode = TrainingMode::baseline;
    std::uint64_t seed = 0;
    double gamma = 1.0;
    SegmentationNet net;
    SegmentationNet liver_net;
    std::optional<SegmentationNet> step1_net;
    std::vector<EpochStats> history;
    EvaluationReport report;
    RunCounters counters;
    std::string init;  // "fresh" or "resume"
};

/// Results shared between modes of one seed: the step-1 (baseline) net and the liver net.
struct SharedStages {
    std::optional<TrainResult> baseline;
    std::optional<TrainResult> liver;
};

/// Deterministic per-seed setup shared by all modes.
NetworkConfig lesion_net_config(const PipelineConfig& config, std::uint64_t seed);
NetworkConfig liver_net_config(const PipelineConfig& config, std::uint64_t seed);

/// Labeled train items (gamma = 1 targets).
std::vector<TrainItem> labeled_items(const DatasetSplit& dataset);

TrainResult train_liver_net(const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed);
TrainResult train_baseline(const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed);

/// Runs one mode for one seed and evaluates it on the untouched test split.
/// `shared`, when given, memoizes the baseline and liver nets across modes.
RunOutput run_mode(TrainingMode mode, const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed,
                   SharedStages* shared = nullptr);

}  // namespace adaug
