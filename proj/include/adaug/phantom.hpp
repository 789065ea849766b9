#pragma once

// Procedural abdominal CT phantom with per-voxel six-class labels.
//
// A volume holds one deformed-ellipsoid liver spanning every slice, zero or
// more ellipsoidal lesions of a single type strictly inside the liver, and a
// textured fat / soft-tissue background. Geometry varies smoothly along z so
// that neighbouring slices share anatomy.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adaug/core.hpp"

namespace adaug {

struct PhantomSpec {
    int nx = 64;
    int ny = 64;
    int nz = 16;
    double spacing_min = 0.71;  // mm, in-plane
    double spacing_max = 1.17;
    double thickness_min = 1.25;  // mm
    double thickness_max = 5.0;
    int lesions_min = 1;
    int lesions_max = 3;
    /// Probabilities of metastasis, hemangioma, cyst for a lesion-bearing volume.
    std::array<double, 3> lesion_type_mix = {64.0 / 163.0, 48.0 / 163.0, 51.0 / 163.0};
    double healthy_fraction = 62.0 / 225.0;
    double noise_sigma = 5.0;  // HU
    int boundary_width = 2;    // px
    std::uint64_t seed = 7;

    void validate() const;
    bool operator==(const PhantomSpec&) const = default;
};

/// What a volume is forced to contain; random when absent.
enum class VolumeKind : std::uint8_t { metastasis, hemangioma, cyst, healthy };

struct LesionInfo {
    ClassId type = ClassId::metastasis;
    double cx = 0, cy = 0, cz = 0;  // px, px, slice index
    double radius_px = 0;           // mean in-plane semi-axis
    double radius_z = 0;            // semi-axis in slices
};

struct PhantomVolume {
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> hu;              // z-major, then row-major; integral HU values
    std::vector<std::uint8_t> labels;   // same layout, ClassId codes
    PixelSpacing spacing;
    std::string volume_id;
    std::vector<LesionInfo> lesions;

    std::size_t index(int z, int y, int x) const noexcept {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    CTSlice slice(int z) const;
    LabelMap label_slice(int z) const;
    bool operator==(const PhantomVolume& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz && hu == o.hu && labels == o.labels &&
               spacing == o.spacing && volume_id == o.volume_id;
    }
};

/// Deterministic in (spec, seed, volume_id, kind).
PhantomVolume generate_volume(const PhantomSpec& spec, std::uint64_t seed, const std::string& volume_id = "v0",
                              std::optional<VolumeKind> kind = std::nullopt);

/// Builds the pack centred on slice z with `neighbors_per_side` unlabeled slices on each side.
/// Throws RangeError when the neighbours would fall outside the volume.
SlicePack make_slice_pack(const PhantomVolume& volume, int z, int neighbors_per_side = 1);

/// Center z indices chosen for a volume: lesion centres first, then other liver slices,
/// pairwise separated so no center is another center's neighbour. Empty when no slice
/// intersects the liver.
std::vector<int> choose_centers(const PhantomVolume& volume, int centers_per_volume, int neighbors_per_side,
                                std::uint64_t seed);

std::vector<SlicePack> extract_slice_packs(const PhantomVolume& volume, int centers_per_volume,
                                           int neighbors_per_side = 1, std::uint64_t seed = 0);

struct DatasetOptions {
    int train_volumes = 30;
    int test_volumes = 15;
    int centers_per_volume = 2;
    int neighbors_per_side = 1;
    bool operator==(const DatasetOptions&) const = default;
};

/// Volume ids of a dataset; train volumes are "tr###", test volumes "te###".
std::string train_volume_id(int i);
std::string test_volume_id(int i);

/// Volume kinds for n volumes, apportioned to the spec's healthy fraction and lesion mix.
std::vector<VolumeKind> volume_kind_schedule(const PhantomSpec& spec, int n, std::uint64_t seed);

struct GeneratedDataset {
    std::vector<PhantomVolume> volumes;
    /// (volume index, center z) per labeled train slice and per test slice.
    std::vector<std::pair<int, int>> train_centers;
    std::vector<std::pair<int, int>> test_centers;
    DatasetSplit split;
};

GeneratedDataset generate_dataset(const PhantomSpec& spec, const DatasetOptions& options, std::uint64_t seed);

DatasetSplit build_dataset(const PhantomSpec& spec, int n_train_volumes, int n_test_volumes, std::uint64_t seed,
                           int centers_per_volume = 2, int neighbors_per_side = 1);

}  // namespace adaug
