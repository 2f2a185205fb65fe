#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenechar/data.hpp"
#include "scenechar/tensor.hpp"

namespace scenechar {

// Procedural stand-in corpus: 27 stroke/arc/dot glyph classes rendered at
// 50x50 grayscale. Several class families share a base shape and differ only
// in small dots, so fine detail carries real signal.
struct SynthConfig {
  std::size_t num_classes = 27;
  std::size_t base_per_class = 20;
  std::uint64_t seed = 0;
};

// The full glyph repertoire, label order (sorted).
const std::vector<std::string>& synth_class_names();

// Renders one base (0 degree) glyph with per-sample jitter: translation up to
// 3 px, scale +-10%, gaussian noise sigma 0.02, background/foreground
// intensity jitter. Deterministic in (seed, label, index).
Tensor synth_render(std::size_t label, std::size_t index, std::uint64_t seed);

// Writes out_dir/<class>/<class>_NNN.pgm base images plus a manifest of the
// raw tree (orientation 0, all records train). Same seed, same bytes.
DatasetManifest synth_generate(const std::filesystem::path& out_dir,
                               const SynthConfig& config);

}  // namespace scenechar
