#include "adaug/metrics.hpp"

#include <cstdio>

namespace adaug {

Mask binary_lesion_mask(const LabelMap& labels) {
    Mask m(labels.height(), labels.width());
    for (std::size_t i = 0; i < labels.size(); ++i) m[i] = is_lesion(labels[i]) ? 1 : 0;
    return m;
}

double dice(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw ShapeError("dice of masks with different shapes");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] != 0, y = b[i] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

EvaluationReport evaluate(std::span<const LabelMap> preds, std::span<const AnnotatedSlice> gts,
                          const EvaluationOptions& options) {
    if (preds.size() != gts.size()) throw std::invalid_argument("prediction and ground-truth counts differ");
    EvaluationReport r;
    r.n_images = static_cast<int>(gts.size());
    int overlaps = 0, correct = 0, acc_total = 0;
    double dice_sum = 0, healthy_dice_sum = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const auto& gt = gts[i];
        if (!preds[i].grid().same_shape(gt.labels.grid())) throw ShapeError("prediction and ground truth differ in size");
        PerImageRecord rec;
        rec.volume_id = gt.slice.volume_id();
        rec.z_index = gt.slice.z_index();
        rec.gt_class = gt.image_class;
        rec.pred_class = image_level_class(preds[i]);
        const Mask gm = binary_lesion_mask(gt.labels);
        const Mask pm = binary_lesion_mask(preds[i]);
        bool any_gt = false;
        for (auto v : gm.data()) any_gt = any_gt || v;
        rec.has_lesion = any_gt;
        for (std::size_t k = 0; k < gm.size() && !rec.overlap; ++k) rec.overlap = gm[k] && pm[k];
        rec.dice = dice(gm, pm);
        if (rec.has_lesion) {
            ++r.n_lesion_images;
            if (rec.overlap) {
                ++overlaps;
                dice_sum += rec.dice;
            }
        } else {
            healthy_dice_sum += rec.dice;
        }
        if (options.acc_include_healthy || rec.has_lesion) {
            ++acc_total;
            correct += rec.pred_class == rec.gt_class;
        }
        r.per_image.push_back(std::move(rec));
    }
    if (overlaps > 0) r.dice1 = dice_sum / overlaps;
    if (options.all_images_denominator) {
        if (r.n_images > 0) {
            r.success = static_cast<double>(overlaps) / r.n_images;
            r.dice2 = (dice_sum + healthy_dice_sum) / r.n_images;
        }
    } else if (r.n_lesion_images > 0) {
        r.success = static_cast<double>(overlaps) / r.n_lesion_images;
        r.dice2 = dice_sum / r.n_lesion_images;
    }
    r.acc = acc_total > 0 ? static_cast<double>(correct) / acc_total : 0.0;
    return r;
}

void write_per_image_csv(std::ostream& os, const EvaluationReport& report) {
    os << "volume_id,z_index,gt_class,pred_class,has_lesion,overlap,dice\n";
    char buf[64];
    for (const auto& r : report.per_image) {
        std::snprintf(buf, sizeof buf, "%.17g", r.dice);
        os << r.volume_id << ',' << r.z_index << ',' << image_class_name(r.gt_class) << ','
           << image_class_name(r.pred_class) << ',' << r.has_lesion << ',' << r.overlap << ',' << buf << '\n';
    }
}

}  // namespace adaug
