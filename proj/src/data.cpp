#include "scenechar/data.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "scenechar/image.hpp"
#include "scenechar/rng.hpp"

namespace scenechar {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".pgm" || ext == ".PNG" || ext == ".PGM";
}

}  // namespace

std::string to_string(Split split) {
  return split == Split::train ? "train" : "test";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

void validate_manifest(const DatasetManifest& manifest) {
  if (manifest.num_classes != manifest.class_names.size())
    throw std::invalid_argument("manifest: num_classes does not match class_names");
  std::vector<bool> seen_in_train(manifest.num_classes, false);
  for (const auto& record : manifest.records) {
    if (record.label >= manifest.num_classes)
      throw std::invalid_argument("manifest: label " +
                                  std::to_string(record.label) +
                                  " out of range");
    if (manifest.class_names[record.label] != record.class_name)
      throw std::invalid_argument("manifest: class_name '" + record.class_name +
                                  "' does not match label " +
                                  std::to_string(record.label));
    if (record.split == Split::train) seen_in_train[record.label] = true;
  }
  for (std::size_t label = 0; label < manifest.num_classes; ++label) {
    if (!seen_in_train[label])
      throw std::invalid_argument("manifest: class '" +
                                  manifest.class_names[label] +
                                  "' has no train samples");
  }
}

DatasetManifest build_manifest(const fs::path& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error("dataset root is not a directory: " + root.string());

  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory())
      class_names.push_back(entry.path().filename().string());
  }
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty())
    throw std::runtime_error("dataset root has no class directories: " +
                             root.string());

  DatasetManifest manifest;
  manifest.class_names = class_names;
  manifest.num_classes = class_names.size();
  for (std::size_t label = 0; label < class_names.size(); ++label) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(root / class_names[label])) {
      if (entry.is_regular_file() && is_image_file(entry.path()))
        files.push_back(entry.path().filename().string());
    }
    if (files.empty())
      throw std::runtime_error("class directory has no images: " +
                               (root / class_names[label]).string());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      ManifestRecord record;
      record.path = class_names[label] + "/" + file;
      record.label = label;
      record.class_name = class_names[label];
      record.split = Split::train;
      record.orientation_deg = 0;
      record.source_id =
          class_names[label] + "/" + fs::path(file).stem().string();
      manifest.records.push_back(std::move(record));
    }
  }
  validate_manifest(manifest);
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const auto& record : manifest.records) {
    json j;
    j["path"] = record.path;
    j["label"] = record.label;
    j["class_name"] = record.class_name;
    j["split"] = to_string(record.split);
    j["orientation_deg"] = record.orientation_deg;
    j["source_id"] = record.source_id;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("manifest write failed: " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest: " + path.string());
  DatasetManifest manifest;
  std::set<std::string> classes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ManifestRecord record;
    record.path = j.at("path").get<std::string>();
    record.label = j.at("label").get<std::size_t>();
    record.class_name = j.at("class_name").get<std::string>();
    record.split = split_from_string(j.at("split").get<std::string>());
    record.orientation_deg = j.at("orientation_deg").get<int>();
    record.source_id = j.at("source_id").get<std::string>();
    classes.insert(record.class_name);
    manifest.records.push_back(std::move(record));
  }
  manifest.class_names.assign(classes.begin(), classes.end());
  manifest.num_classes = manifest.class_names.size();
  validate_manifest(manifest);
  return manifest;
}

DatasetManifest split_dataset(const DatasetManifest& manifest,
                              std::size_t train_count, std::size_t test_count,
                              std::uint64_t seed, bool group_by_source) {
  validate_manifest(manifest);
  if (train_count + test_count != manifest.records.size()) {
    throw std::invalid_argument(
        "split counts " + std::to_string(train_count) + "+" +
        std::to_string(test_count) + " do not sum to " +
        std::to_string(manifest.records.size()) + " records");
  }

  // Unit = base-image group (or single record in per-orientation mode).
  // Per class: sorted unit keys, each unit listing its record indices.
  std::vector<std::map<std::string, std::vector<std::size_t>>> units_by_class(
      manifest.num_classes);
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& record = manifest.records[i];
    const std::string key =
        group_by_source ? record.source_id : record.source_id + "#" +
                                                 std::to_string(i);
    units_by_class[record.label][key].push_back(i);
  }

  std::size_t unit_size = 0;
  std::size_t total_units = 0;
  std::vector<std::size_t> class_units(manifest.num_classes, 0);
  for (std::size_t label = 0; label < manifest.num_classes; ++label) {
    for (const auto& [key, members] : units_by_class[label]) {
      if (unit_size == 0) unit_size = members.size();
      if (members.size() != unit_size)
        throw std::invalid_argument(
            "stratified split requires uniform group sizes; group '" + key +
            "' has " + std::to_string(members.size()) + " samples, expected " +
            std::to_string(unit_size));
    }
    class_units[label] = units_by_class[label].size();
    total_units += class_units[label];
  }
  if (test_count % unit_size != 0) {
    throw std::invalid_argument(
        "test_count " + std::to_string(test_count) +
        " is not a whole number of groups of " + std::to_string(unit_size));
  }
  const std::size_t test_units = test_count / unit_size;
  if (test_units < manifest.num_classes) {
    throw std::invalid_argument(
        "every class needs test representation: test_count " +
        std::to_string(test_count) + " cannot cover " +
        std::to_string(manifest.num_classes) + " classes");
  }

  // Largest-remainder apportionment of test units, each class >= 1.
  std::vector<std::size_t> quota(manifest.num_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t label = 0; label < manifest.num_classes; ++label) {
    const double exact = static_cast<double>(test_units) *
                         static_cast<double>(class_units[label]) /
                         static_cast<double>(total_units);
    quota[label] = static_cast<std::size_t>(exact);
    remainders.push_back({exact - static_cast<double>(quota[label]), label});
    assigned += quota[label];
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < test_units; ++i) {
    quota[remainders[i % remainders.size()].second] += 1;
    ++assigned;
  }
  for (std::size_t label = 0; label < manifest.num_classes; ++label) {
    // a starved class takes a unit from the largest allocation
    while (quota[label] == 0) {
      const std::size_t donor = static_cast<std::size_t>(
          std::max_element(quota.begin(), quota.end()) - quota.begin());
      if (quota[donor] <= 1)
        throw std::invalid_argument("cannot represent every class in test split");
      quota[donor] -= 1;
      quota[label] += 1;
    }
    if (quota[label] >= class_units[label]) {
      throw std::invalid_argument("class '" + manifest.class_names[label] +
                                  "' would have no train samples");
    }
  }

  DatasetManifest result = manifest;
  for (std::size_t label = 0; label < manifest.num_classes; ++label) {
    std::vector<std::string> keys;
    for (const auto& [key, members] : units_by_class[label]) keys.push_back(key);
    Rng rng = Rng::derive(seed, label);
    rng.shuffle(keys);
    for (std::size_t u = 0; u < keys.size(); ++u) {
      const Split split = u < quota[label] ? Split::test : Split::train;
      for (std::size_t idx : units_by_class[label][keys[u]])
        result.records[idx].split = split;
    }
  }
  validate_manifest(result);
  return result;
}

void validate_sample(const Sample& sample, std::size_t num_classes) {
  const std::vector<std::size_t> want{1, kInputSize, kInputSize};
  if (sample.image.shape() != want)
    throw std::invalid_argument("sample image must be [1,50,50], got " +
                                shape_to_string(sample.image.shape()));
  for (std::size_t i = 0; i < sample.image.size(); ++i) {
    if (sample.image[i] < 0.0 || sample.image[i] > 1.0)
      throw std::invalid_argument("sample pixel out of [0,1]");
  }
  if (sample.label >= num_classes)
    throw std::invalid_argument("sample label out of range");
}

const std::vector<int>& default_orientations() {
  static const std::vector<int> angles{-30, -15, 0, 15, 30};
  return angles;
}

std::vector<Sample> augment_five(const Sample& base,
                                 const std::vector<int>& angles) {
  if (base.orientation_deg != 0)
    throw std::invalid_argument("augment_five expects an unrotated base sample");
  std::vector<Sample> oriented;
  oriented.reserve(angles.size());
  for (int angle : angles) {
    Sample sample = base;
    sample.orientation_deg = angle;
    if (angle != 0) {
      Tensor rotated = rotate(base.image, static_cast<double>(angle));
      // rotation resampling can overshoot [0,1] marginally
      for (std::size_t i = 0; i < rotated.size(); ++i)
        rotated[i] = std::clamp(rotated[i], 0.0, 1.0);
      sample.image = std::move(rotated);
    }
    oriented.push_back(std::move(sample));
  }
  return oriented;
}

Tensor preprocess_image(const Tensor& raw) {
  Tensor gray = raw.extent(0) == 3 ? grayscale(raw) : raw;
  if (gray.extent(0) != 1)
    throw std::invalid_argument("expected 1- or 3-channel image, got " +
                                shape_to_string(raw.shape()));
  if (gray.extent(1) != kInputSize || gray.extent(2) != kInputSize)
    gray = resize_bilinear(gray, Shape2D{kInputSize, kInputSize});
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = std::clamp(gray[i], 0.0, 1.0);
  return gray;
}

DatasetManifest prepare_dataset(const PrepareOptions& options) {
  const DatasetManifest base = build_manifest(options.root);
  fs::create_directories(options.out_dir / "images");

  DatasetManifest augmented;
  augmented.class_names = base.class_names;
  augmented.num_classes = base.num_classes;
  for (const auto& record : base.records) {
    Sample sample;
    sample.image = preprocess_image(read_image(options.root / record.path));
    sample.label = record.label;
    sample.source_id = record.source_id;

    const fs::path class_dir = options.out_dir / "images" / record.class_name;
    fs::create_directories(class_dir);
    const std::string stem = fs::path(record.path).stem().string();
    for (const Sample& oriented : augment_five(sample, options.angles)) {
      const std::string name =
          stem + "_r" + std::to_string(oriented.orientation_deg) + ".pgm";
      write_pgm(class_dir / name, oriented.image);
      ManifestRecord out_record;
      out_record.path = "images/" + record.class_name + "/" + name;
      out_record.label = record.label;
      out_record.class_name = record.class_name;
      out_record.split = Split::train;
      out_record.orientation_deg = oriented.orientation_deg;
      out_record.source_id = record.source_id;
      augmented.records.push_back(std::move(out_record));
    }
  }

  const DatasetManifest split =
      split_dataset(augmented, options.train_count, options.test_count,
                    options.seed, !options.per_orientation_split);
  save_manifest(split, options.out_dir / "manifest.jsonl");
  return split;
}

LoadedDataset load_dataset(const fs::path& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const fs::path base_dir = manifest_path.parent_path();

  LoadedDataset dataset;
  dataset.class_names = manifest.class_names;
  double mean_sum = 0.0;
  std::size_t mean_count = 0;
  for (const auto& record : manifest.records) {
    Sample sample;
    sample.image = preprocess_image(read_image(base_dir / record.path));
    sample.label = record.label;
    sample.orientation_deg = record.orientation_deg;
    sample.split = record.split;
    sample.source_id = record.source_id;
    validate_sample(sample, manifest.num_classes);
    if (record.split == Split::train) {
      for (std::size_t i = 0; i < sample.image.size(); ++i)
        mean_sum += sample.image[i];
      mean_count += sample.image.size();
      dataset.train.push_back(std::move(sample));
    } else {
      dataset.test.push_back(std::move(sample));
    }
  }
  if (dataset.train.empty())
    throw std::runtime_error("manifest has no train samples: " +
                             manifest_path.string());
  dataset.pixel_mean = mean_sum / static_cast<double>(mean_count);
  return dataset;
}

}  // namespace scenechar
