#include "adaug/augment.hpp"

#include <algorithm>
#include <cmath>

namespace adaug {

void AugmentPolicy::validate() const {
    if (!(scale_min > 0 && scale_min <= scale_max)) throw RangeError("scale range must be positive and ordered");
    if (!(translate_min <= translate_max)) throw RangeError("translation range must be ordered");
    if (augmentations_per_item < 0) throw RangeError("augmentation count must be non-negative");
}

GeomTransform sample_transform(const AugmentPolicy& policy, Rng& rng) {
    // Degenerate ranges still consume draws so streams stay aligned across policies.
    auto draw = [&rng](double lo, double hi) {
        const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
        return lo + (hi - lo) * u;
    };
    GeomTransform t;
    t.scale = draw(policy.scale_min, policy.scale_max);
    t.tx = draw(policy.translate_min, policy.translate_max);
    t.ty = draw(policy.translate_min, policy.translate_max);
    return t;
}

std::pair<CTSlice, SoftLabelMap> apply_transform(const GeomTransform& t, const CTSlice& slice,
                                                 const SoftLabelMap& targets) {
    const int H = slice.height(), W = slice.width();
    if (targets.height != H || targets.width != W) throw ShapeError("slice and targets differ in size");
    const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    const auto& src = slice.pixels();
    const int K = targets.num_classes;

    Grid2D<float> out(H, W, kMinHu);
    SoftLabelMap soft = targets;
    std::fill(soft.targets.begin(), soft.targets.end(), 0.0f);

    for (int y = 0; y < H; ++y) {
        const double ys = cy + (y - t.ty - cy) / t.scale;
        for (int x = 0; x < W; ++x) {
            const double xs = cx + (x - t.tx - cx) / t.scale;
            if (xs >= 0 && ys >= 0 && xs <= W - 1 && ys <= H - 1) {
                const int x0 = std::min(static_cast<int>(xs), W - 1), y0 = std::min(static_cast<int>(ys), H - 1);
                const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
                const double fx = xs - x0, fy = ys - y0;
                const double top = src(y0, x0) * (1 - fx) + src(y0, x1) * fx;
                const double bot = src(y1, x0) * (1 - fx) + src(y1, x1) * fx;
                out(y, x) = fx == 0 && fy == 0 ? src(y0, x0) : static_cast<float>(top * (1 - fy) + bot * fy);
            }
            float* dst = soft.pixel(static_cast<std::size_t>(y) * W + x);
            const long xn = std::lround(std::floor(xs + 0.5)), yn = std::lround(std::floor(ys + 0.5));
            if (xn >= 0 && yn >= 0 && xn < W && yn < H) {
                const float* s = targets.pixel(static_cast<std::size_t>(yn) * W + xn);
                std::copy(s, s + K, dst);
            } else {
                dst[0] = 1.0f;
            }
        }
    }
    return {CTSlice(std::move(out), slice.spacing(), slice.volume_id(), slice.z_index()), std::move(soft)};
}

}  // namespace adaug
