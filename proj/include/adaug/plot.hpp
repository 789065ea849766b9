#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adaug/core.hpp"
#include "adaug/experiment.hpp"

namespace adaug {

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Lesion colours of the qualitative figure: metastasis red, cyst green, hemangioma yellow.
std::array<std::uint8_t, 3> lesion_color(ClassId c);

/// Liver-window grayscale of the slice with lesion pixels tinted, upscaled by `zoom`.
RgbImage overlay(const CTSlice& slice, const LabelMap& labels, int zoom = 4);

/// Panels side by side with a white gap.
RgbImage hconcat(std::span<const RgbImage> panels, int gap = 4);

void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Grouped bar chart (one group per metric, one bar per mode, sample-std whiskers).
void write_metric_bars_svg(const std::filesystem::path& path, const ExperimentSummary& summary);

}  // namespace adaug
