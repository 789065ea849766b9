#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaug {

/// Thrown when an argument lies outside its documented range.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Thrown when array dimensions are incompatible.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Per-pixel class taxonomy.
enum class ClassId : std::uint8_t {
    background = 0,
    liver = 1,
    liver_boundary = 2,
    metastasis = 3,
    hemangioma = 4,
    cyst = 5,
};

inline constexpr int kNumClasses = 6;
inline constexpr std::array<ClassId, 3> kLesionClasses = {ClassId::metastasis, ClassId::hemangioma,
                                                          ClassId::cyst};

constexpr bool is_lesion(std::uint8_t c) noexcept { return c >= 3 && c <= 5; }
constexpr bool is_lesion(ClassId c) noexcept { return is_lesion(static_cast<std::uint8_t>(c)); }

const char* class_name(ClassId c) noexcept;

/// Image-level class, decided by the majority lesion class of a label map.
enum class ImageClass : std::uint8_t { metastasis, hemangioma, cyst, healthy };

const char* image_class_name(ImageClass c) noexcept;
ImageClass parse_image_class(const std::string& name);
ImageClass image_class_of(ClassId lesion);

struct PixelSpacing {
    double sx = 1.0;               // mm / pixel along x
    double sy = 1.0;               // mm / pixel along y
    double slice_thickness = 1.0;  // mm

    void validate() const;
    double pixel_area_mm2() const noexcept { return sx * sy; }
    bool operator==(const PixelSpacing&) const = default;
};

/// Dense row-major 2D array.
template <typename T>
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int height, int width, T fill = T{})
        : height_(height), width_(width), data_(checked_size(height, width), fill) {}
    Grid2D(int height, int width, std::vector<T> data) : height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != checked_size(height, width))
            throw ShapeError("grid data size does not match dimensions");
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool same_shape(const Grid2D& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }
    template <typename U>
    bool same_shape(const Grid2D<U>& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    T& operator()(int y, int x) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& operator()(int y, int x) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool operator==(const Grid2D&) const = default;

private:
    static std::size_t checked_size(int h, int w) {
        if (h < 0 || w < 0) throw ShapeError("negative grid dimension");
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using Mask = Grid2D<std::uint8_t>;

inline constexpr float kMinHu = -1024.0f;
inline constexpr float kMaxHu = 3071.0f;

/// A 2D CT image with physical spacing and provenance.
/// Height and width must be multiples of 16 and HU values within [-1024, 3071].
class CTSlice {
public:
    CTSlice() = default;
    CTSlice(Grid2D<float> pixels, PixelSpacing spacing, std::string volume_id, int z_index);

    const Grid2D<float>& pixels() const noexcept { return pixels_; }
    const PixelSpacing& spacing() const noexcept { return spacing_; }
    const std::string& volume_id() const noexcept { return volume_id_; }
    int z_index() const noexcept { return z_index_; }
    int height() const noexcept { return pixels_.height(); }
    int width() const noexcept { return pixels_.width(); }

    bool operator==(const CTSlice&) const = default;

private:
    Grid2D<float> pixels_;
    PixelSpacing spacing_;
    std::string volume_id_;
    int z_index_ = 0;
};

/// Hard per-pixel class assignment; every value is a valid ClassId code.
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(int height, int width, ClassId fill = ClassId::background);
    explicit LabelMap(Grid2D<std::uint8_t> labels);

    int height() const noexcept { return labels_.height(); }
    int width() const noexcept { return labels_.width(); }
    std::size_t size() const noexcept { return labels_.size(); }
    const Grid2D<std::uint8_t>& grid() const noexcept { return labels_; }

    std::uint8_t operator()(int y, int x) const noexcept { return labels_(y, x); }
    std::uint8_t operator[](std::size_t i) const noexcept { return labels_[i]; }
    void set(int y, int x, ClassId c) noexcept { labels_(y, x) = static_cast<std::uint8_t>(c); }
    void set(std::size_t i, ClassId c) noexcept { labels_[i] = static_cast<std::uint8_t>(c); }

    std::array<std::size_t, kNumClasses> class_counts() const noexcept;

    bool operator==(const LabelMap&) const = default;

private:
    Grid2D<std::uint8_t> labels_;
};

enum class FillMode : std::uint8_t { zero, uniform };
enum class TargetOrigin : std::uint8_t { ground_truth, pseudo_label };

FillMode parse_fill_mode(const std::string& s);
const char* fill_mode_name(FillMode m) noexcept;

/// Per-pixel target distribution, stored H x W x num_classes (6 for lesion maps,
/// 2 for the liver-only network).
struct SoftLabelMap {
    int height = 0;
    int width = 0;
    int num_classes = kNumClasses;
    std::vector<float> targets;
    TargetOrigin origin = TargetOrigin::ground_truth;
    double gamma = 1.0;

    float* pixel(std::size_t i) noexcept { return targets.data() + i * num_classes; }
    const float* pixel(std::size_t i) const noexcept { return targets.data() + i * num_classes; }
    std::size_t num_pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
};

struct AnnotatedSlice {
    CTSlice slice;
    LabelMap labels;
    ImageClass image_class = ImageClass::healthy;
};

/// A labeled center slice with its unlabeled z-neighbours.
struct SlicePack {
    AnnotatedSlice labeled;
    std::vector<CTSlice> adjacent;
    /// Ground truth of the neighbours. Training never reads it; tests use it to score pseudo-labels.
    std::vector<LabelMap> adjacent_truth;
};

struct DatasetSplit {
    std::vector<SlicePack> train;
    std::vector<AnnotatedSlice> test;

    /// Throws if any volume id appears in both train and test.
    void validate_disjoint() const;
};

/// Encodes hard labels as soft targets with max entry gamma.
/// gamma must lie in (0.5, 1].
SoftLabelMap hard_to_soft(const LabelMap& labels, double gamma, FillMode fill_mode = FillMode::zero,
                          TargetOrigin origin = TargetOrigin::ground_truth);

/// Per-pixel argmax of soft targets, ties to the lowest class code.
LabelMap soft_to_hard(const SoftLabelMap& soft);

/// Majority lesion class; healthy when there are no lesion pixels; ties to the lowest code.
ImageClass image_level_class(const LabelMap& labels);

/// Liver pixels within `width` (chessboard distance) of a non-liver pixel.
/// Pixels outside the frame count as non-liver.
Mask boundary_band(const Mask& liver_mask, int width);

/// Liver mask = liver, boundary, and lesion classes.
Mask liver_mask_of(const LabelMap& labels);

}  // namespace adaug
