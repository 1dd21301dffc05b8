#pragma once

#include "depthforge/config.hpp"
#include "depthforge/engine.hpp"
#include "depthforge/eval.hpp"
#include "depthforge/model.hpp"
#include "depthforge/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace depthforge {

// Checkpoint layout, all little endian:
//   8 bytes   magic "DFCKPT01"
//   8 bytes   u64 manifest length N
//   N bytes   JSON manifest: model shape and, per tensor, name, group,
//             shape [rows, cols] and byte offset into the data block
//   ...       data block of f64 values, tensors back to back, row-major
std::string encode_checkpoint(const ToyDepthModel& model);
ToyDepthModel decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const ToyDepthModel& model);
ToyDepthModel load_checkpoint(const std::filesystem::path& path);

/// Dataset directory: manifest.json plus one PFM per image, depth, mask.
void write_datasets(const std::filesystem::path& dir, const Datasets& data, const Config& config);
Datasets read_datasets(const std::filesystem::path& dir);

/// Pseudo-label directory: manifest.json plus one grayscale PFM per image.
/// Images are not duplicated; read_pseudo_labels pairs labels with the
/// dataset's unlabeled images by index.
void write_pseudo_labels(const std::filesystem::path& dir, const std::vector<PseudoSample>& labels,
                         const Config& config, const std::string& checkpoint);
std::vector<PseudoSample> read_pseudo_labels(const std::filesystem::path& dir, const std::vector<Tensor>& images);

std::string report_json(const RunReport& report, const Config& config);

/// One row per dataset: dataset,absrel,d1,d2,d3,rmse,rmse_log,log10,n_images,n_pixels
std::string metrics_csv(const std::vector<MetricReport>& reports);
std::string metrics_json(const std::vector<MetricReport>& reports, const Config& config);

std::string hex64(std::uint64_t v);

}  // namespace depthforge
