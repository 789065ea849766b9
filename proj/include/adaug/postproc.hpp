#pragma once

#include <vector>

#include "adaug/core.hpp"

namespace adaug {

inline constexpr double kMinLesionAreaMm2 = 100.0;  // 1 cm^2

struct ComponentStats {
    int id = 0;
    ClassId cls = ClassId::metastasis;
    std::size_t area_px = 0;
    double area_mm2 = 0.0;
};

/// 8-connected components of each lesion class.
/// `component_ids`, if given, receives a per-pixel id (0 = not a lesion).
std::vector<ComponentStats> lesion_components(const LabelMap& labels, const PixelSpacing& spacing,
                                              Grid2D<int>* component_ids = nullptr);

/// Relabels lesion components with area_px * sx * sy < min_area_mm2 to `replacement`.
LabelMap area_filter(const LabelMap& labels, const PixelSpacing& spacing, double min_area_mm2 = kMinLesionAreaMm2,
                     ClassId replacement = ClassId::liver);

/// Non-background pixels outside the liver mask become background.
LabelMap liver_refine(const LabelMap& labels, const Mask& liver_mask);

}  // namespace adaug
