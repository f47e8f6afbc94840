#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icsc/render.hpp"

namespace icsc {

inline constexpr int kManifestVersion = 1;
inline constexpr int kMaxResampleTries = 100;

struct DatasetConfig {
  RandomizationBounds bounds{};
  SceneGeometry scene{};
  CameraIntrinsics intrinsics{};
  std::size_t count = 2200;
  std::size_t train_count = 2000;  // the remaining records form the validation split
  std::uint64_t seed = 7;

  void validate() const;
};

struct ManifestRecord {
  std::size_t index = 0;
  std::string filename;  // relative to the dataset directory
  std::string split;     // "train" or "val"
  Pose pose;             // 9-decimal label
  double pan_deg = 0.0;
  double tilt_deg = 0.0;
  std::uint64_t per_image_seed = 0;
  RandomizationSpec spec;
  Vec3 centre_hit;  // renderer's centre ray hit on the fuselage
  int resamples = 0;
};

struct Manifest {
  DatasetConfig config;
  std::vector<ManifestRecord> records;
  std::size_t total_resamples = 0;
};

/// One image and its record, derived only from (config, index).
struct GeneratedItem {
  ManifestRecord record;
  RenderResult render;
};

/// Draws specs from the per-image seed until the centre ray lands on the
/// fuselage. Throws Error("bounds inconsistent with cylinder") after
/// kMaxResampleTries failed draws.
GeneratedItem generate_item(const DatasetConfig& config, std::size_t index);

/// Writes `images/NNNNNN.png` and `manifest.jsonl` under `out_dir`.
/// The output is byte-identical for any `jobs`.
Manifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir, int jobs = 1);

std::string image_filename(std::size_t index);

/// Fixed-format manifest lines (header first).
std::string manifest_header_line(const Manifest& m);
std::string manifest_record_line(const ManifestRecord& r);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
/// Validates the header, record count, bounds and centre-ray hits.
Manifest read_manifest(const std::filesystem::path& path);

/// Records with split == name; "all" selects every record.
std::vector<const ManifestRecord*> select_split(const Manifest& m, const std::string& name);

}  // namespace icsc
