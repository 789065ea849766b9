#pragma once

// Encoder-decoder pixel classifier.
//
// Encoder (channel counts divided by width_factor):
//   C64 -> CBP64 -> C128 -> CBP128 -> C256 -> CBP256 -> C512 -> CBP512 -> C1024 -> CB1024
// Decoder:
//   U2 -> C512 -> CB512 -> U2 -> C256 -> CBD256 -> U2 -> C128 -> CBD128 -> U2 -> CD64 -> C64 -> C(num_classes, 1x1)
//
// C = conv 3x3 + ReLU, B = batch norm, D = dropout, P = 2x2 max pool, U2 = 2x upsampling.
// The pre-pool output of each CBP block is concatenated (skip first) with the
// output of the equal-resolution U2 block. The head is followed by a softmax.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adaug/core.hpp"
#include "adaug/tensor.hpp"

namespace adaug {

enum class UpsampleMode : std::uint8_t { transposed, nearest_conv };
enum class Mode : std::uint8_t { train, eval };

UpsampleMode parse_upsample_mode(const std::string& s);
const char* upsample_mode_name(UpsampleMode m) noexcept;

struct NetworkConfig {
    int num_classes = kNumClasses;
    double width_factor = 8.0;
    double dropout_rate = 0.5;
    int input_height = 64;
    int input_width = 64;
    double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
    double bn_epsilon = 1e-5;
    UpsampleMode upsample = UpsampleMode::transposed;
    std::uint64_t init_seed = 1;

    /// Encoder channel counts at the five resolutions (64..1024 divided by width_factor).
    std::vector<int> encoder_channels() const;
    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

/// Per-pixel class probabilities, stored H x W x num_classes.
struct Prediction {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    std::vector<float> probs;

    const float* pixel(std::size_t i) const noexcept { return probs.data() + i * num_classes; }
    float* pixel(std::size_t i) noexcept { return probs.data() + i * num_classes; }
    std::size_t num_pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
};

template <typename T>
struct Parameter {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool trainable = true;  // false for batch-norm running statistics

    std::size_t size() const noexcept { return value.size(); }
};

template <typename T>
class SegmentationNetT {
public:
    explicit SegmentationNetT(const NetworkConfig& config);
    ~SegmentationNetT();
    SegmentationNetT(const SegmentationNetT&);
    SegmentationNetT& operator=(const SegmentationNetT&);
    SegmentationNetT(SegmentationNetT&&) noexcept;
    SegmentationNetT& operator=(SegmentationNetT&&) noexcept;

    const NetworkConfig& config() const noexcept { return config_; }

    /// Train-mode forward. Caches activations for backward() and updates
    /// batch-norm running statistics. Dropout masks derive from dropout_seed.
    /// Input is [1][N][H][W]; returns logits [num_classes][N][H][W].
    Tensor<T> forward_train(const Tensor<T>& input, std::uint64_t dropout_seed);

    /// Backpropagates d(loss)/d(logits) through the last forward_train call,
    /// accumulating into each parameter's grad.
    void backward(const Tensor<T>& dlogits);

    /// Eval-mode forward: no dropout, running statistics, no caching.
    Tensor<T> forward_eval(const Tensor<T>& input) const;

    Tensor<T> forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed = 0);

    /// Replaces the batch-norm running statistics with population statistics over
    /// `batches`, computed in train mode with dropout off. Trainable values are untouched.
    void recalibrate_batch_norm(std::span<const Tensor<T>> batches);

    std::vector<Parameter<T>>& parameters() noexcept { return params_; }
    const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
    Parameter<T>& parameter(const std::string& name);
    const Parameter<T>& parameter(const std::string& name) const;

    void zero_grad();

    /// Trainable scalar count (batch-norm running statistics excluded).
    std::size_t count_parameters() const noexcept;

    /// Disables one skip connection (level 1 = full resolution) by zeroing its activation.
    void set_skip_enabled(int level, bool enabled);

    /// Copies parameter values (and running statistics) from a net of another scalar type.
    template <typename U>
    void assign_from(const SegmentationNetT<U>& other) {
        if (other.parameters().size() != params_.size()) throw ShapeError("parameter layout mismatch");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& src = other.parameters()[i];
            if (src.name != params_[i].name || src.size() != params_[i].size())
                throw ShapeError("parameter layout mismatch at " + src.name);
            for (std::size_t k = 0; k < src.size(); ++k) params_[i].value[k] = static_cast<T>(src.value[k]);
        }
    }

    struct Impl;

private:
    NetworkConfig config_;
    std::vector<Parameter<T>> params_;
    std::unique_ptr<Impl> impl_;
};

using SegmentationNet = SegmentationNetT<float>;

/// Total trainable parameter count of a parameter list.
template <typename T>
std::size_t count_parameters(const std::vector<Parameter<T>>& params) noexcept {
    std::size_t n = 0;
    for (const auto& p : params)
        if (p.trainable) n += p.size();
    return n;
}

/// HU clipped to the liver window [-160, 240] and mapped linearly to [0, 1].
float normalize_hu(float hu) noexcept;

/// Stacks normalized slices into a [1][N][H][W] batch.
template <typename T>
Tensor<T> make_batch(std::span<const CTSlice* const> slices);

/// Softmax over the channel axis of logits [K][N][H][W].
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Extracts sample i of a probability tensor as a Prediction.
template <typename T>
Prediction to_prediction(const Tensor<T>& probs, int sample);

/// Eval-mode predictions for a list of slices.
std::vector<Prediction> predict(const SegmentationNet& net, std::span<const CTSlice> slices);

/// Per-pixel argmax, ties to the lowest class code.
LabelMap argmax_labels(const Prediction& pred);

}  // namespace adaug
