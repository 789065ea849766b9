#pragma once

// Dataset directory:
//   manifest.jsonl       one JSON record per slice: role (labeled, adjacent, test),
//                        volume_id, z, image, labels, image_class, spacing, center
//   slices/*.adsl        single-slice containers (HU and labels)
//   volumes/*.adsl       full phantom volumes (HU and labels), depth = nz
//   config.cfg           the generating configuration
//
// Adjacent slices carry their ground truth for diagnostics only; load_dataset
// keeps it in SlicePack::adjacent_truth, which training never reads.

#include <filesystem>
#include <string>

#include "adaug/config.hpp"
#include "adaug/phantom.hpp"

namespace adaug {

/// Writes everything into `dir` (created if missing). Output bytes depend only on the inputs.
void write_dataset(const std::filesystem::path& dir, const GeneratedDataset& data, const RunConfig& config);

/// Reads the split back from a directory written by write_dataset.
DatasetSplit load_dataset(const std::filesystem::path& dir);

/// Generates the dataset a config describes.
GeneratedDataset generate_for_config(const RunConfig& config);

}  // namespace adaug
