#pragma once

#include <cstdint>
#include <utility>

#include "adaug/core.hpp"
#include "adaug/rng.hpp"

namespace adaug {

struct AugmentPolicy {
    double scale_min = 0.9;
    double scale_max = 1.1;
    double translate_min = -25.0;  // px, applied independently to x and y
    double translate_max = 25.0;
    int augmentations_per_item = 2;  // per epoch
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const AugmentPolicy&) const = default;
};

struct GeomTransform {
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

/// scale ~ U(scale_min, scale_max); tx, ty ~ U(translate_min, translate_max), independent.
GeomTransform sample_transform(const AugmentPolicy& policy, Rng& rng);

/// Scales about the image center, then translates. The image is resampled bilinearly
/// (out-of-frame fills -1024 HU); targets are resampled nearest-neighbour per pixel
/// (out-of-frame becomes a hard background target). Output dims equal input dims.
std::pair<CTSlice, SoftLabelMap> apply_transform(const GeomTransform& t, const CTSlice& slice,
                                                 const SoftLabelMap& targets);

}  // namespace adaug
