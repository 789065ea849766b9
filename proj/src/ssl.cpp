#include "adaug/ssl.hpp"

#include <algorithm>
#include <cmath>

#include "adaug/postproc.hpp"
#include "adaug/rng.hpp"

namespace adaug {

const char* mode_name(TrainingMode m) noexcept {
    switch (m) {
        case TrainingMode::baseline: return "baseline";
        case TrainingMode::extended: return "extended";
        case TrainingMode::anatomical: return "anatomical";
        case TrainingMode::anatomical_gamma1: return "anatomical_gamma1";
        case TrainingMode::neighbor_labels: return "neighbor_labels";
    }
    return "unknown";
}

TrainingMode parse_mode(const std::string& name) {
    for (auto m : kAllModes)
        if (name == mode_name(m)) return m;
    throw std::invalid_argument("unknown training mode '" + name + "'");
}

namespace {

std::string item_id(const CTSlice& s) { return s.volume_id() + ":z" + std::to_string(s.z_index()); }

void sgd_step(SegmentationNet& net, std::vector<std::vector<float>>& velocity, const OptimizerConfig& opt) {
    auto& params = net.parameters();
    const float lr = static_cast<float>(opt.learning_rate), mu = static_cast<float>(opt.momentum);
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& par = params[p];
        if (!par.trainable) continue;
        auto& v = velocity[p];
        for (std::size_t i = 0; i < par.size(); ++i) {
            v[i] = mu * v[i] + par.grad[i];
            par.value[i] -= lr * v[i];
        }
    }
}

}  // namespace

TrainResult train_supervised(std::span<const TrainItem> items, const TrainOptions& options) {
    if (items.empty()) throw std::invalid_argument("no training items");
    options.policy.validate();
    options.weights.validate();
    if (options.optim.batch_size < 1 || options.optim.epochs < 0) throw RangeError("invalid batch size or epoch count");
    if (options.weights.num_classes() != options.net.num_classes)
        throw ShapeError("class weights do not match the network's class count");

    TrainResult result{options.init ? *options.init : SegmentationNet(options.net), {}};
    SegmentationNet& net = result.net;
    if (net.config().num_classes != options.net.num_classes)
        throw ShapeError("initial weights have a different class count");
    std::vector<std::vector<float>> velocity;
    for (const auto& p : net.parameters()) velocity.emplace_back(p.size(), 0.0f);

    const int k = options.policy.augmentations_per_item;
    for (int epoch = 0; epoch < options.optim.epochs; ++epoch) {
        std::vector<std::pair<std::size_t, int>> samples;
        for (std::size_t i = 0; i < items.size(); ++i)
            for (int a = 0; a < k; ++a) samples.emplace_back(i, a);
        Rng shuffle_rng(derive_seed(options.seed, "shuffle", epoch));
        std::shuffle(samples.begin(), samples.end(), shuffle_rng);

        double loss_sum = 0;
        std::size_t seen = 0;
        const auto bs = static_cast<std::size_t>(options.optim.batch_size);
        for (std::size_t start = 0, b = 0; start < samples.size(); start += bs, ++b) {
            const std::size_t end = std::min(samples.size(), start + bs);
            std::vector<CTSlice> slices;
            std::vector<SoftLabelMap> targets;
            for (std::size_t s = start; s < end; ++s) {
                const auto& item = items[samples[s].first];
                Rng rng(derive_seed(options.policy.seed, item.item_id, epoch, samples[s].second));
                auto [img, tgt] = apply_transform(sample_transform(options.policy, rng), item.slice, item.targets);
                slices.push_back(std::move(img));
                targets.push_back(std::move(tgt));
            }
            std::vector<const CTSlice*> sp;
            std::vector<const SoftLabelMap*> tp;
            for (std::size_t i = 0; i < slices.size(); ++i) {
                sp.push_back(&slices[i]);
                tp.push_back(&targets[i]);
            }
            const auto logits = net.forward_train(make_batch<float>(sp), derive_seed(options.seed, "dropout", epoch, b));
            Tensor<float> dlogits;
            const double loss = softmax_cross_entropy(logits, targets_to_tensor<float>(tp), options.weights, &dlogits);
            if (!std::isfinite(loss))
                throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch));
            net.zero_grad();
            net.backward(dlogits);
            sgd_step(net, velocity, options.optim);
            loss_sum += loss * static_cast<double>(end - start);
            seen += end - start;
        }
        if (seen != items.size() * static_cast<std::size_t>(k))
            throw std::logic_error("augmented sample count does not match items x augmentations");
        EpochStats stats{epoch, seen ? loss_sum / static_cast<double>(seen) : 0.0, seen};
        result.history.push_back(stats);
        if (options.on_epoch) options.on_epoch(stats);
    }
    if (options.optim.recalibrate_bn && options.optim.epochs > 0) {
        std::vector<Tensor<float>> batches;
        for (std::size_t start = 0; start < items.size(); start += 16) {
            std::vector<const CTSlice*> sp;
            for (std::size_t i = start; i < std::min(items.size(), start + 16); ++i) sp.push_back(&items[i].slice);
            batches.push_back(make_batch<float>(sp));
        }
        net.recalibrate_batch_norm(batches);
    }
    return result;
}

double pixel_accuracy(const SegmentationNet& net, std::span<const TrainItem> items) {
    std::vector<CTSlice> slices;
    for (const auto& it : items) slices.push_back(it.slice);
    const auto preds = predict(net, slices);
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const LabelMap p = argmax_labels(preds[i]);
        const LabelMap t = soft_to_hard(items[i].targets);
        for (std::size_t k = 0; k < p.size(); ++k) correct += p[k] == t[k];
        total += p.size();
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

Mask predict_liver_mask(const SegmentationNet& liver_net, const CTSlice& slice) {
    const auto pred = predict(liver_net, std::span<const CTSlice>(&slice, 1));
    const LabelMap lab = argmax_labels(pred[0]);
    Mask m(lab.height(), lab.width());
    for (std::size_t i = 0; i < lab.size(); ++i) m[i] = lab[i] == 1;
    return m;
}

LabelMap postprocess(const LabelMap& labels, const Mask* liver_mask, const PixelSpacing& spacing, bool area) {
    LabelMap out = liver_mask ? liver_refine(labels, *liver_mask) : labels;
    return area ? area_filter(out, spacing) : out;
}

std::vector<PseudoLabeledSlice> pseudo_label(const SegmentationNet& net, const SegmentationNet& liver_net,
                                             std::span<const CTSlice> slices, double gamma,
                                             const PseudoLabelOptions& options,
                                             std::span<const std::string> source_centers) {
    if (!(gamma > 0.5 && gamma <= 1.0)) throw RangeError("gamma must lie in (0.5, 1]");
    if (net.config().num_classes != kNumClasses || liver_net.config().num_classes != 2)
        throw ShapeError("pseudo-labeling needs a six-class net and a two-class liver net");
    const auto preds = predict(net, slices);
    const auto liver_preds = predict(liver_net, slices);
    std::vector<PseudoLabeledSlice> out;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const LabelMap liver = argmax_labels(liver_preds[i]);
        Mask mask(liver.height(), liver.width());
        for (std::size_t k = 0; k < liver.size(); ++k) mask[k] = liver[k] == 1;
        PseudoLabeledSlice p;
        p.slice = slices[i];
        p.hard = postprocess(argmax_labels(preds[i]), &mask, slices[i].spacing(), options.area_filter);
        p.targets = hard_to_soft(p.hard, gamma, FillMode::zero, TargetOrigin::pseudo_label);
        p.source_center = i < source_centers.size() ? source_centers[i] : std::string{};
        out.push_back(std::move(p));
    }
    return out;
}

EvaluationReport evaluate_net(const SegmentationNet& net, const SegmentationNet* liver_net,
                              std::span<const AnnotatedSlice> test, const PipelineConfig& config) {
    std::vector<CTSlice> slices;
    for (const auto& t : test) slices.push_back(t.slice);
    const auto preds = predict(net, slices);
    std::vector<Prediction> liver_preds;
    const bool refine = liver_net && config.liver_refine_predictions;
    if (refine) liver_preds = predict(*liver_net, slices);
    std::vector<LabelMap> labels;
    for (std::size_t i = 0; i < test.size(); ++i) {
        Mask mask;
        if (refine) {
            const LabelMap l = argmax_labels(liver_preds[i]);
            mask = Mask(l.height(), l.width());
            for (std::size_t k = 0; k < l.size(); ++k) mask[k] = l[k] == 1;
        }
        labels.push_back(postprocess(argmax_labels(preds[i]), refine ? &mask : nullptr, slices[i].spacing(),
                                     config.area_filter_predictions));
    }
    return evaluate(labels, test, config.eval);
}

NetworkConfig lesion_net_config(const PipelineConfig& config, std::uint64_t seed) {
    NetworkConfig c = config.net;
    c.num_classes = kNumClasses;
    c.init_seed = derive_seed(seed, "lesion-init");
    return c;
}

NetworkConfig liver_net_config(const PipelineConfig& config, std::uint64_t seed) {
    NetworkConfig c = config.net;
    c.num_classes = 2;
    c.init_seed = derive_seed(seed, "liver-init");
    return c;
}

std::vector<TrainItem> labeled_items(const DatasetSplit& dataset) {
    std::vector<TrainItem> items;
    for (const auto& p : dataset.train)
        items.push_back({p.labeled.slice, hard_to_soft(p.labeled.labels, 1.0), item_id(p.labeled.slice)});
    return items;
}

namespace {

TrainOptions lesion_options(const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed, int augs) {
    TrainOptions o;
    o.net = lesion_net_config(config, seed);
    o.optim = config.optim;
    o.policy = config.augment;
    o.policy.augmentations_per_item = augs;
    o.policy.seed = derive_seed(seed, "augment");
    o.weights = class_weights(dataset);
    o.seed = derive_seed(seed, "lesion-train");
    return o;
}

}  // namespace

TrainResult train_liver_net(const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed) {
    std::vector<TrainItem> items;
    for (const auto& p : dataset.train)
        items.push_back({p.labeled.slice, liver_targets(p.labeled.labels), item_id(p.labeled.slice)});
    TrainOptions o;
    o.net = liver_net_config(config, seed);
    o.optim = config.optim;
    o.policy = config.augment;
    o.policy.augmentations_per_item = config.augs_baseline;
    o.policy.seed = derive_seed(seed, "liver-augment");
    o.weights = liver_class_weights(dataset);
    o.seed = derive_seed(seed, "liver-train");
    return train_supervised(items, o);
}

TrainResult train_baseline(const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed) {
    const auto items = labeled_items(dataset);
    return train_supervised(items, lesion_options(dataset, config, seed, config.augs_baseline));
}

RunOutput run_mode(TrainingMode mode, const DatasetSplit& dataset, const PipelineConfig& config, std::uint64_t seed,
                   SharedStages* shared) {
    SharedStages local;
    SharedStages& stages = shared ? *shared : local;
    if (!stages.liver) stages.liver = train_liver_net(dataset, config, seed);

    RunOutput out{mode, seed, 1.0, SegmentationNet(lesion_net_config(config, seed)), stages.liver->net,
                  std::nullopt, {}, {}, {}, "fresh"};
    auto labeled = labeled_items(dataset);
    out.counters.labeled_items = labeled.size();

    auto base = [&]() -> const TrainResult& {
        if (!stages.baseline) stages.baseline = train_baseline(dataset, config, seed);
        return *stages.baseline;
    };

    TrainResult trained{out.net, {}};
    int augs = config.augs_baseline;
    switch (mode) {
        case TrainingMode::baseline:
            trained = base();
            break;
        case TrainingMode::extended:
            augs = config.augs_extended;
            trained = train_supervised(labeled, lesion_options(dataset, config, seed, augs));
            break;
        case TrainingMode::anatomical:
        case TrainingMode::anatomical_gamma1: {
            out.gamma = mode == TrainingMode::anatomical ? config.gamma : 1.0;
            const TrainResult& step1 = base();
            out.step1_net = step1.net;
            std::vector<CTSlice> adjacent;
            std::vector<std::string> sources;
            for (const auto& p : dataset.train)
                for (const auto& a : p.adjacent) {
                    adjacent.push_back(a);
                    sources.push_back(item_id(p.labeled.slice));
                }
            const auto pseudo = pseudo_label(step1.net, stages.liver->net, adjacent, out.gamma,
                                             {config.area_filter_pseudo}, sources);
            out.counters.labeling_forward_passes = pseudo.size();
            auto items = labeled;
            for (const auto& p : pseudo) {
                SoftLabelMap t = config.fill_mode == FillMode::zero
                                     ? p.targets
                                     : hard_to_soft(p.hard, out.gamma, config.fill_mode, TargetOrigin::pseudo_label);
                items.push_back({p.slice, std::move(t), item_id(p.slice)});
            }
            out.counters.pseudo_items = pseudo.size();
            auto opts = lesion_options(dataset, config, seed, augs);
            if (config.resume_from_step1) {
                opts.init = &step1.net;
                out.init = "resume";
            }
            trained = train_supervised(items, opts);
            break;
        }
        case TrainingMode::neighbor_labels: {
            out.gamma = config.gamma;
            auto items = labeled;
            for (const auto& p : dataset.train)
                for (const auto& a : p.adjacent)
                    items.push_back({a, hard_to_soft(p.labeled.labels, out.gamma, config.fill_mode,
                                                     TargetOrigin::pseudo_label),
                                     item_id(a)});
            out.counters.pseudo_items = items.size() - labeled.size();
            trained = train_supervised(items, lesion_options(dataset, config, seed, augs));
            break;
        }
    }
    out.counters.augs_per_item = augs;
    out.net = std::move(trained.net);
    out.history = std::move(trained.history);
    // Counted by the training loop; the arithmetic form only covers zero-epoch runs.
    out.counters.samples_per_epoch = out.history.empty()
                                         ? (out.counters.labeled_items + out.counters.pseudo_items) * augs
                                         : out.history.front().samples;
    out.report = evaluate_net(out.net, &out.liver_net, dataset.test, config);
    return out;
}

}  // namespace adaug
