#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenechar/tensor.hpp"

namespace scenechar {

// Canonical network input geometry.
inline constexpr std::size_t kInputSize = 50;

enum class Split { train, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct ManifestRecord {
  std::string path;  // relative to the manifest file's directory
  std::size_t label = 0;
  std::string class_name;
  Split split = Split::train;
  int orientation_deg = 0;
  std::string source_id;  // groups the orientations of one base image
};

struct DatasetManifest {
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;  // sorted; label == index
  std::vector<ManifestRecord> records;
};

// Checks label/class consistency, counts, and that every class has train
// representation. Throws on violation.
void validate_manifest(const DatasetManifest& manifest);

// Scans root/<class_name>/<image> for PNG/PGM files; records are orientation
// 0, split train, labels assigned by sorted class name.
DatasetManifest build_manifest(const std::filesystem::path& root);

// JSON-lines, one record per sample, UTF-8.
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Stratified seeded split into exactly train_count/test_count samples. The
// stratifier assigns whole units: base-image groups (every orientation of a
// source image stays in one split) by default, single records with
// group_by_source=false. Per-class test unit counts differ by at most one;
// both splits must represent every class.
DatasetManifest split_dataset(const DatasetManifest& manifest,
                              std::size_t train_count, std::size_t test_count,
                              std::uint64_t seed, bool group_by_source = true);

struct Sample {
  Tensor image;  // [1, 50, 50], values in [0, 1]
  std::size_t label = 0;
  int orientation_deg = 0;
  Split split = Split::train;
  std::string source_id;
};

void validate_sample(const Sample& sample, std::size_t num_classes);

// {-30, -15, 0, +15, +30} degrees.
const std::vector<int>& default_orientations();

// One oriented copy per angle; identical label, distinct orientation tags.
// The base sample must be an unrotated (0 degree) image.
std::vector<Sample> augment_five(
    const Sample& base, const std::vector<int>& angles = default_orientations());

// Grayscale (if RGB) + bilinear resize to the canonical [1, 50, 50].
Tensor preprocess_image(const Tensor& raw);

struct PrepareOptions {
  std::filesystem::path root;     // base image tree, one directory per class
  std::filesystem::path out_dir;  // receives images/ and manifest.jsonl
  std::size_t train_count = 2450;
  std::size_t test_count = 250;
  std::uint64_t seed = 0;
  std::vector<int> angles = default_orientations();
  bool per_orientation_split = false;  // legacy mode: split leaks orientations
};

// Preprocess + orient + materialize PGMs + stratified split; returns the
// manifest that was written to out_dir/manifest.jsonl.
DatasetManifest prepare_dataset(const PrepareOptions& options);

// Manifest + images materialized in memory. pixel_mean is the trainset
// global mean; subtract it from both splits before feeding the network.
struct LoadedDataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<std::string> class_names;
  double pixel_mean = 0.0;
};

LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace scenechar
