#include "adaug/core.hpp"

#include <algorithm>
#include <limits>
#include <unordered_set>

namespace adaug {

const char* class_name(ClassId c) noexcept {
    switch (c) {
        case ClassId::background: return "background";
        case ClassId::liver: return "liver";
        case ClassId::liver_boundary: return "liver_boundary";
        case ClassId::metastasis: return "metastasis";
        case ClassId::hemangioma: return "hemangioma";
        case ClassId::cyst: return "cyst";
    }
    return "unknown";
}

const char* image_class_name(ImageClass c) noexcept {
    switch (c) {
        case ImageClass::metastasis: return "metastasis";
        case ImageClass::hemangioma: return "hemangioma";
        case ImageClass::cyst: return "cyst";
        case ImageClass::healthy: return "healthy";
    }
    return "unknown";
}

ImageClass parse_image_class(const std::string& name) {
    if (name == "metastasis") return ImageClass::metastasis;
    if (name == "hemangioma") return ImageClass::hemangioma;
    if (name == "cyst") return ImageClass::cyst;
    if (name == "healthy") return ImageClass::healthy;
    throw std::invalid_argument("unknown image class '" + name + "'");
}

ImageClass image_class_of(ClassId lesion) {
    switch (lesion) {
        case ClassId::metastasis: return ImageClass::metastasis;
        case ClassId::hemangioma: return ImageClass::hemangioma;
        case ClassId::cyst: return ImageClass::cyst;
        default: throw std::invalid_argument("not a lesion class");
    }
}

FillMode parse_fill_mode(const std::string& s) {
    if (s == "zero") return FillMode::zero;
    if (s == "uniform") return FillMode::uniform;
    throw std::invalid_argument("unknown fill mode '" + s + "'");
}

const char* fill_mode_name(FillMode m) noexcept { return m == FillMode::zero ? "zero" : "uniform"; }

void PixelSpacing::validate() const {
    if (!(sx > 0.0) || !(sy > 0.0) || !(slice_thickness > 0.0))
        throw RangeError("pixel spacing and slice thickness must be positive");
}

CTSlice::CTSlice(Grid2D<float> pixels, PixelSpacing spacing, std::string volume_id, int z_index)
    : pixels_(std::move(pixels)), spacing_(spacing), volume_id_(std::move(volume_id)), z_index_(z_index) {
    if (pixels_.height() % 16 != 0 || pixels_.width() % 16 != 0 || pixels_.size() == 0)
        throw ShapeError("CT slice dimensions must be non-zero multiples of 16");
    spacing_.validate();
    for (float v : pixels_.data())
        if (!(v >= kMinHu && v <= kMaxHu)) throw RangeError("HU value outside [-1024, 3071]");
}

LabelMap::LabelMap(int height, int width, ClassId fill)
    : labels_(height, width, static_cast<std::uint8_t>(fill)) {}

LabelMap::LabelMap(Grid2D<std::uint8_t> labels) : labels_(std::move(labels)) {
    for (auto v : labels_.data())
        if (v >= kNumClasses) throw RangeError("label value is not a valid class id");
}

std::array<std::size_t, kNumClasses> LabelMap::class_counts() const noexcept {
    std::array<std::size_t, kNumClasses> counts{};
    for (auto v : labels_.data()) ++counts[v];
    return counts;
}

void DatasetSplit::validate_disjoint() const {
    std::unordered_set<std::string> train_ids;
    for (const auto& p : train) train_ids.insert(p.labeled.slice.volume_id());
    for (const auto& t : test)
        if (train_ids.count(t.slice.volume_id()))
            throw std::invalid_argument("volume '" + t.slice.volume_id() + "' appears in train and test");
}

SoftLabelMap hard_to_soft(const LabelMap& labels, double gamma, FillMode fill_mode, TargetOrigin origin) {
    if (!(gamma > 0.5 && gamma <= 1.0)) throw RangeError("gamma must lie in (0.5, 1]");
    SoftLabelMap soft;
    soft.height = labels.height();
    soft.width = labels.width();
    soft.origin = origin;
    soft.gamma = gamma;
    const float hot = static_cast<float>(gamma);
    const float rest = fill_mode == FillMode::uniform ? static_cast<float>((1.0 - gamma) / (kNumClasses - 1)) : 0.0f;
    soft.targets.assign(labels.size() * kNumClasses, rest);
    for (std::size_t i = 0; i < labels.size(); ++i) soft.pixel(i)[labels[i]] = hot;
    return soft;
}

LabelMap soft_to_hard(const SoftLabelMap& soft) {
    Grid2D<std::uint8_t> out(soft.height, soft.width);
    for (std::size_t i = 0; i < soft.num_pixels(); ++i) {
        const float* p = soft.pixel(i);
        out[i] = static_cast<std::uint8_t>(std::max_element(p, p + soft.num_classes) - p);
    }
    return LabelMap(std::move(out));
}

ImageClass image_level_class(const LabelMap& labels) {
    const auto counts = labels.class_counts();
    std::size_t best = 0;
    ClassId best_class = ClassId::background;
    for (ClassId c : kLesionClasses) {
        const auto n = counts[static_cast<int>(c)];
        if (n > best) {
            best = n;
            best_class = c;
        }
    }
    return best == 0 ? ImageClass::healthy : image_class_of(best_class);
}

Mask boundary_band(const Mask& liver_mask, int width) {
    if (width < 1) throw RangeError("boundary band width must be at least 1");
    const int h = liver_mask.height();
    const int w = liver_mask.width();
    // Chessboard distance to the nearest non-liver pixel, frame exterior counting as non-liver.
    constexpr int kFar = std::numeric_limits<int>::max() / 2;
    Grid2D<int> dist(h, w);
    for (std::size_t i = 0; i < liver_mask.size(); ++i) dist[i] = liver_mask[i] ? kFar : 0;
    auto get = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0 : dist(y, x); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (dist(y, x) == 0) continue;
            int d = std::min({get(y - 1, x - 1), get(y - 1, x), get(y - 1, x + 1), get(y, x - 1)}) + 1;
            dist(y, x) = std::min(dist(y, x), d);
        }
    for (int y = h - 1; y >= 0; --y)
        for (int x = w - 1; x >= 0; --x) {
            if (dist(y, x) == 0) continue;
            int d = std::min({get(y + 1, x + 1), get(y + 1, x), get(y + 1, x - 1), get(y, x + 1)}) + 1;
            dist(y, x) = std::min(dist(y, x), d);
        }
    Mask band(h, w);
    for (std::size_t i = 0; i < band.size(); ++i) band[i] = (liver_mask[i] && dist[i] <= width) ? 1 : 0;
    return band;
}

Mask liver_mask_of(const LabelMap& labels) {
    Mask m(labels.height(), labels.width());
    for (std::size_t i = 0; i < labels.size(); ++i) m[i] = labels[i] != 0 ? 1 : 0;
    return m;
}

}  // namespace adaug
