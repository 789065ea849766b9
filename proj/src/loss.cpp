#include "adaug/loss.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace adaug {

void ClassWeights::validate() const {
    if (w.empty()) throw std::invalid_argument("class weights are empty");
    for (double v : w)
        if (!(v > 0.0) || !std::isfinite(v)) throw RangeError("class weights must be positive and finite");
}

ClassWeights class_weights_from_counts(std::span<const std::size_t> counts, std::span<const char* const> names) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    ClassWeights cw;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) {
            const std::string name = c < names.size() ? names[c] : "class " + std::to_string(c);
            throw std::invalid_argument("no training pixels of class '" + name +
                                        "'; merge the class or regenerate the data");
        }
        cw.w.push_back(total / static_cast<double>(counts[c]));
    }
    const double mean = std::accumulate(cw.w.begin(), cw.w.end(), 0.0) / static_cast<double>(cw.w.size());
    for (auto& v : cw.w) v /= mean;
    return cw;
}

ClassWeights class_weights(const DatasetSplit& train_set) {
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& pack : train_set.train) {
        const auto c = pack.labeled.labels.class_counts();
        for (int k = 0; k < kNumClasses; ++k) counts[k] += c[k];
    }
    static constexpr const char* kNames[] = {"background", "liver", "liver_boundary", "metastasis", "hemangioma",
                                             "cyst"};
    return class_weights_from_counts(counts, kNames);
}

ClassWeights liver_class_weights(const DatasetSplit& train_set) {
    std::array<std::size_t, 2> counts{};
    for (const auto& pack : train_set.train) {
        const auto c = pack.labeled.labels.class_counts();
        counts[0] += c[0];
        for (int k = 1; k < kNumClasses; ++k) counts[1] += c[k];
    }
    static constexpr const char* kNames[] = {"background", "liver"};
    return class_weights_from_counts(counts, kNames);
}

SoftLabelMap liver_targets(const LabelMap& labels) {
    SoftLabelMap s;
    s.height = labels.height();
    s.width = labels.width();
    s.num_classes = 2;
    s.targets.assign(labels.size() * 2, 0.0f);
    for (std::size_t i = 0; i < labels.size(); ++i) s.targets[i * 2 + (labels[i] != 0 ? 1 : 0)] = 1.0f;
    return s;
}

double weighted_soft_ce(const Prediction& pred, const SoftLabelMap& target, const ClassWeights& weights) {
    weights.validate();
    if (pred.height != target.height || pred.width != target.width || pred.num_classes != target.num_classes ||
        weights.num_classes() != pred.num_classes)
        throw ShapeError("prediction, target, and weights disagree in shape");
    const int K = pred.num_classes;
    double sum = 0;
    for (std::size_t i = 0; i < pred.num_pixels(); ++i) {
        const float* p = pred.pixel(i);
        const float* t = target.pixel(i);
        for (int c = 0; c < K; ++c)
            if (t[c] != 0.0f) sum += weights.w[c] * t[c] * std::log(std::max<double>(p[c], kProbFloor));
    }
    return -sum / static_cast<double>(pred.num_pixels());
}

template <typename T>
Tensor<T> targets_to_tensor(std::span<const SoftLabelMap* const> targets) {
    if (targets.empty()) throw ShapeError("no targets");
    const auto& first = *targets[0];
    Tensor<T> t(first.num_classes, static_cast<int>(targets.size()), first.height, first.width);
    const std::size_t M = t.channel_size();
    for (std::size_t n = 0; n < targets.size(); ++n) {
        const auto& s = *targets[n];
        if (s.height != first.height || s.width != first.width || s.num_classes != first.num_classes)
            throw ShapeError("targets differ in shape");
        for (std::size_t i = 0; i < s.num_pixels(); ++i)
            for (int c = 0; c < s.num_classes; ++c)
                t.data[c * M + n * t.plane() + i] = static_cast<T>(s.pixel(i)[c]);
    }
    return t;
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets, const ClassWeights& weights,
                             Tensor<T>* dlogits) {
    weights.validate();
    if (!logits.same_shape(targets) || weights.num_classes() != logits.c)
        throw ShapeError("logits, targets, and weights disagree in shape");
    const int K = logits.c;
    const std::size_t M = logits.channel_size();
    if (dlogits) *dlogits = Tensor<T>(logits.c, logits.n, logits.h, logits.w);
    const double inv_n = 1.0 / static_cast<double>(M);
    std::vector<double> p(K);
    double total = 0;
    for (std::size_t i = 0; i < M; ++i) {
        double mx = logits.data[i];
        for (int c = 1; c < K; ++c) mx = std::max<double>(mx, logits.data[c * M + i]);
        double z = 0;
        for (int c = 0; c < K; ++c) {
            p[c] = std::exp(static_cast<double>(logits.data[c * M + i]) - mx);
            z += p[c];
        }
        if (!std::isfinite(z)) return std::numeric_limits<double>::quiet_NaN();
        double active_mass = 0;  // sum of w_k t_k over unclamped k
        for (int c = 0; c < K; ++c) {
            p[c] /= z;
            const double wt = weights.w[c] * static_cast<double>(targets.data[c * M + i]);
            if (wt == 0.0) continue;
            if (p[c] >= kProbFloor) {
                total -= wt * std::log(p[c]);
                active_mass += wt;
            } else {
                total -= wt * std::log(kProbFloor);
            }
        }
        if (dlogits) {
            for (int c = 0; c < K; ++c) {
                const double wt = weights.w[c] * static_cast<double>(targets.data[c * M + i]);
                const double hot = p[c] >= kProbFloor ? wt : 0.0;
                dlogits->data[c * M + i] = static_cast<T>(inv_n * (p[c] * active_mass - hot));
            }
        }
    }
    return total * inv_n;
}

template Tensor<float> targets_to_tensor<float>(std::span<const SoftLabelMap* const>);
template Tensor<double> targets_to_tensor<double>(std::span<const SoftLabelMap* const>);
template double softmax_cross_entropy<float>(const Tensor<float>&, const Tensor<float>&, const ClassWeights&,
                                             Tensor<float>*);
template double softmax_cross_entropy<double>(const Tensor<double>&, const Tensor<double>&, const ClassWeights&,
                                              Tensor<double>*);

}  // namespace adaug
