#pragma once

#include <span>
#include <vector>

#include "adaug/core.hpp"
#include "adaug/net.hpp"
#include "adaug/tensor.hpp"

namespace adaug {

/// Per-class loss weights, positive with mean 1.
struct ClassWeights {
    std::vector<double> w;

    static ClassWeights uniform(int num_classes) { return {std::vector<double>(num_classes, 1.0)}; }
    int num_classes() const noexcept { return static_cast<int>(w.size()); }
    void validate() const;
};

inline constexpr double kProbFloor = 1e-7;

/// Inverse-frequency weights normalized to mean 1. `names` labels the diagnostic
/// raised for a class with zero pixels.
ClassWeights class_weights_from_counts(std::span<const std::size_t> counts, std::span<const char* const> names = {});

/// Six-class weights from the labeled training slices.
ClassWeights class_weights(const DatasetSplit& train_set);

/// Two-class (background vs liver incl. boundary and lesions) weights from the labeled training slices.
ClassWeights liver_class_weights(const DatasetSplit& train_set);

/// Soft targets for the two-class liver network.
SoftLabelMap liver_targets(const LabelMap& labels);

/// -(1/N) sum_i sum_c w_c t_ic log max(p_ic, 1e-7).
double weighted_soft_ce(const Prediction& pred, const SoftLabelMap& target, const ClassWeights& weights);

/// Packs soft targets into a [K][N][H][W] tensor.
template <typename T>
Tensor<T> targets_to_tensor(std::span<const SoftLabelMap* const> targets);

/// Loss over a batch of logits [K][N][H][W], averaged over all N*H*W pixels.
/// If dlogits is non-null it receives d(loss)/d(logits).
template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets, const ClassWeights& weights,
                             Tensor<T>* dlogits = nullptr);

}  // namespace adaug
