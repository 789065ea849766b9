#pragma once

// Binary container for CT data and label maps.
//
// Layout (all integers and floats little-endian):
//   char[5]   magic "ADSL1"
//   uint8     element type (1 = int16 HU, 2 = uint8 labels)
//   uint32    depth, height, width
//   float64   sx, sy, slice_thickness
//   payload   depth*height*width elements, z-major then row-major

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adaug/core.hpp"

namespace adaug {

enum class ElementType : std::uint8_t { hu_int16 = 1, label_uint8 = 2 };

struct ContainerHeader {
    ElementType type = ElementType::hu_int16;
    std::uint32_t depth = 1;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    PixelSpacing spacing;

    std::size_t element_count() const noexcept {
        return static_cast<std::size_t>(depth) * height * width;
    }
};

struct Container {
    ContainerHeader header;
    std::vector<std::int16_t> hu;      // populated for hu_int16
    std::vector<std::uint8_t> labels;  // populated for label_uint8
};

void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const std::int16_t> hu);
void write_container(const std::filesystem::path& path, const ContainerHeader& header,
                     std::span<const std::uint8_t> labels);
Container read_container(const std::filesystem::path& path);

void save_slice(const std::filesystem::path& path, const CTSlice& slice);
CTSlice load_slice(const std::filesystem::path& path, std::string volume_id, int z_index);

void save_labels(const std::filesystem::path& path, const LabelMap& labels, const PixelSpacing& spacing);
LabelMap load_labels(const std::filesystem::path& path);

}  // namespace adaug
