#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adaug/core.hpp"

namespace adaug {

struct PerImageRecord {
    std::string volume_id;
    int z_index = 0;
    ImageClass gt_class = ImageClass::healthy;
    ImageClass pred_class = ImageClass::healthy;
    bool has_lesion = false;
    bool overlap = false;
    double dice = 0.0;
};

/// Success, Dice1, Dice2 and ACC over a test set.
///
/// Success and the Dice measures run over images whose ground truth contains
/// lesion pixels: success = overlapping / lesion images, dice1 = mean lesion
/// Dice over overlapping images, dice2 = the same mean with non-overlapping
/// images counted as 0. Hence dice2 == dice1 * success. ACC compares the
/// majority lesion class (or healthy) of prediction and ground truth.
struct EvaluationReport {
    std::optional<double> dice1;  // absent when no image overlaps
    double dice2 = 0.0;
    double success = 0.0;
    double acc = 0.0;
    int n_images = 0;
    int n_lesion_images = 0;
    std::vector<PerImageRecord> per_image;
};

struct EvaluationOptions {
    /// Success and Dice2 over every test image instead of lesion images only.
    /// Healthy images then score Dice 1 when the prediction is lesion-free, else 0.
    bool all_images_denominator = false;
    /// Include healthy images in ACC.
    bool acc_include_healthy = true;
    bool operator==(const EvaluationOptions&) const = default;
};

/// True exactly where the class is metastasis, hemangioma or cyst.
Mask binary_lesion_mask(const LabelMap& labels);

/// 2|a & b| / (|a| + |b|); 1 when both are empty.
double dice(const Mask& a, const Mask& b);

EvaluationReport evaluate(std::span<const LabelMap> preds, std::span<const AnnotatedSlice> gts,
                          const EvaluationOptions& options = {});

/// Header plus one row per image.
void write_per_image_csv(std::ostream& os, const EvaluationReport& report);

}  // namespace adaug
