#include "scenechar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "scenechar/image.hpp"
#include "scenechar/rng.hpp"

namespace scenechar {

namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;

struct Seg {
  double x1, y1, x2, y2;
};
// Circular arc, parametric (cx + r cos t, cy + r sin t), t in [a0, a1]
// degrees. y grows downward, so t = 90 is the lowest point.
struct Arc {
  double cx, cy, r, a0, a1;
};
struct Dot {
  double cx, cy, r;
};

struct Glyph {
  std::vector<Seg> segs;
  std::vector<Arc> arcs;
  std::vector<Dot> dots;
};

double seg_distance(const Seg& s, double x, double y) {
  const double vx = s.x2 - s.x1;
  const double vy = s.y2 - s.y1;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((x - s.x1) * vx + (y - s.y1) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = x - (s.x1 + t * vx);
  const double dy = y - (s.y1 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

double arc_distance(const Arc& a, double x, double y) {
  const double dx = x - a.cx;
  const double dy = y - a.cy;
  const double rho = std::sqrt(dx * dx + dy * dy);
  double t = std::atan2(dy, dx) * 180.0 / kPi;  // (-180, 180]
  double rel = std::fmod(t - a.a0, 360.0);
  if (rel < 0.0) rel += 360.0;
  if (rel <= a.a1 - a.a0) return std::fabs(rho - a.r);
  const auto endpoint = [&](double deg) {
    const double rad = deg * kPi / 180.0;
    const double ex = a.cx + a.r * std::cos(rad) - x;
    const double ey = a.cy + a.r * std::sin(rad) - y;
    return std::sqrt(ex * ex + ey * ey);
  };
  return std::min(endpoint(a.a0), endpoint(a.a1));
}

// The repertoire: families sharing a base shape and differing only in the
// small dots (the synthetic analogue of diacritics), plus distinct singles.
const std::map<std::string, Glyph>& glyph_table() {
  static const std::map<std::string, Glyph> table = [] {
    std::map<std::string, Glyph> g;

    const Arc bowl{0.5, 0.38, 0.30, 0.0, 180.0};
    g["ba"] = {{}, {bowl}, {{0.5, 0.84, 0.05}}};
    g["nun"] = {{}, {bowl}, {{0.5, 0.16, 0.05}}};
    g["ta"] = {{}, {bowl}, {{0.38, 0.16, 0.05}, {0.62, 0.16, 0.05}}};
    g["tha"] = {{}, {bowl}, {{0.34, 0.20, 0.05}, {0.5, 0.10, 0.05}, {0.66, 0.20, 0.05}}};

    const Seg jim_bar{0.30, 0.25, 0.72, 0.25};
    const Arc jim_hook{0.48, 0.52, 0.26, -60.0, 180.0};
    g["ha"] = {{jim_bar}, {jim_hook}, {}};
    g["jim"] = {{jim_bar}, {jim_hook}, {{0.48, 0.54, 0.05}}};
    g["kha"] = {{jim_bar}, {jim_hook}, {{0.48, 0.08, 0.05}}};

    const Seg dal_top{0.35, 0.22, 0.68, 0.42};
    const Seg dal_bottom{0.68, 0.42, 0.30, 0.72};
    g["dal"] = {{dal_top, dal_bottom}, {}, {}};
    g["dhal"] = {{dal_top, dal_bottom}, {}, {{0.52, 0.08, 0.05}}};

    const Arc ra_curve{0.35, 0.35, 0.33, -20.0, 90.0};
    g["ra"] = {{}, {ra_curve}, {}};
    g["zay"] = {{}, {ra_curve}, {{0.60, 0.10, 0.05}}};

    const std::vector<Seg> teeth{{0.18, 0.40, 0.26, 0.26},
                                 {0.26, 0.26, 0.34, 0.40},
                                 {0.34, 0.40, 0.42, 0.26},
                                 {0.42, 0.26, 0.50, 0.40},
                                 {0.50, 0.40, 0.58, 0.26},
                                 {0.58, 0.26, 0.66, 0.40}};
    const Arc sin_tail{0.47, 0.50, 0.30, 20.0, 160.0};
    g["sin"] = {teeth, {sin_tail}, {}};
    g["shin"] = {teeth, {sin_tail},
                 {{0.34, 0.14, 0.045}, {0.42, 0.06, 0.045}, {0.50, 0.14, 0.045}}};

    const Arc sad_loop{0.40, 0.40, 0.17, 0.0, 360.0};
    const Seg sad_base{0.22, 0.57, 0.80, 0.57};
    const Seg sad_hook{0.80, 0.57, 0.72, 0.78};
    g["sad"] = {{sad_base, sad_hook}, {sad_loop}, {}};
    g["dad"] = {{sad_base, sad_hook}, {sad_loop}, {{0.40, 0.12, 0.05}}};

    const Arc tah_loop{0.45, 0.55, 0.16, 0.0, 360.0};
    const Seg tah_stem{0.66, 0.15, 0.66, 0.70};
    const Seg tah_base{0.29, 0.70, 0.66, 0.70};
    g["tah"] = {{tah_stem, tah_base}, {tah_loop}, {}};
    g["zah"] = {{tah_stem, tah_base}, {tah_loop}, {{0.30, 0.20, 0.05}}};

    const Arc ain_head{0.52, 0.30, 0.13, 60.0, 300.0};
    const Arc ain_hook{0.50, 0.58, 0.22, -40.0, 180.0};
    g["ain"] = {{}, {ain_head, ain_hook}, {}};
    g["ghain"] = {{}, {ain_head, ain_hook}, {{0.52, 0.08, 0.05}}};

    const Arc fa_loop{0.52, 0.28, 0.10, 0.0, 360.0};
    const Arc fa_bowl{0.50, 0.52, 0.26, 0.0, 180.0};
    const Seg fa_join{0.61, 0.31, 0.76, 0.52};
    g["fa"] = {{fa_join}, {fa_loop, fa_bowl}, {{0.52, 0.08, 0.045}}};
    g["qaf"] = {{fa_join}, {fa_loop, fa_bowl}, {{0.42, 0.08, 0.045}, {0.62, 0.08, 0.045}}};

    g["alef"] = {{{0.50, 0.12, 0.50, 0.80}}, {}, {}};
    g["kaf"] = {{{0.30, 0.15, 0.30, 0.72},
                 {0.30, 0.72, 0.72, 0.72},
                 {0.68, 0.18, 0.42, 0.50}},
                {},
                {}};
    g["lam"] = {{{0.62, 0.12, 0.62, 0.60}}, {{0.44, 0.60, 0.18, 0.0, 180.0}}, {}};
    g["mim"] = {{{0.58, 0.40, 0.58, 0.85}}, {{0.45, 0.40, 0.13, 0.0, 360.0}}, {}};
    g["heh"] = {{}, {{0.50, 0.50, 0.22, 0.0, 360.0}}, {}};
    g["waw"] = {{}, {{0.52, 0.32, 0.12, 0.0, 360.0}, {0.38, 0.38, 0.30, 20.0, 120.0}}, {}};

    return g;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, glyph] : glyph_table()) n.push_back(name);
    return n;  // std::map iterates sorted, matching manifest label order
  }();
  return names;
}

Tensor synth_render(std::size_t label, std::size_t index, std::uint64_t seed) {
  const auto& names = synth_class_names();
  if (label >= names.size())
    throw std::invalid_argument("synth label out of range");
  const Glyph& glyph = glyph_table().at(names[label]);

  Rng rng = Rng::derive(seed, (static_cast<std::uint64_t>(label) << 32) ^
                                  static_cast<std::uint64_t>(index));
  const double scale = rng.uniform(0.9, 1.1);
  const double dx = rng.uniform(-3.0, 3.0);
  const double dy = rng.uniform(-3.0, 3.0);
  const double bg = rng.uniform(0.72, 0.95);
  const double fg = rng.uniform(0.05, 0.30);

  const double box = 38.0 * scale;
  const double cx = (static_cast<double>(kInputSize) - 1.0) / 2.0 + dx;
  const double cy = (static_cast<double>(kInputSize) - 1.0) / 2.0 + dy;
  const double half_stroke = 0.034 * box;

  Tensor image({1, kInputSize, kInputSize});
  for (std::size_t py = 0; py < kInputSize; ++py) {
    for (std::size_t px = 0; px < kInputSize; ++px) {
      // pixel -> glyph unit coordinates
      const double ux = (static_cast<double>(px) - cx) / box + 0.5;
      const double uy = (static_cast<double>(py) - cy) / box + 0.5;
      double outside = 1e9;  // px distance outside the inked region
      for (const Seg& s : glyph.segs)
        outside = std::min(outside, seg_distance(s, ux, uy) * box - half_stroke);
      for (const Arc& a : glyph.arcs)
        outside = std::min(outside, arc_distance(a, ux, uy) * box - half_stroke);
      for (const Dot& d : glyph.dots) {
        const double ddx = (ux - d.cx) * box;
        const double ddy = (uy - d.cy) * box;
        outside = std::min(outside,
                           std::sqrt(ddx * ddx + ddy * ddy) - d.r * box);
      }
      const double coverage = std::clamp(0.5 - outside, 0.0, 1.0);
      image(0, py, px) = bg + (fg - bg) * coverage;
    }
  }
  for (std::size_t i = 0; i < image.size(); ++i)
    image[i] = std::clamp(image[i] + rng.normal(0.0, 0.02), 0.0, 1.0);
  return image;
}

DatasetManifest synth_generate(const fs::path& out_dir,
                               const SynthConfig& config) {
  const auto& names = synth_class_names();
  if (config.num_classes < 1 || config.num_classes > names.size()) {
    throw std::invalid_argument("synth supports 1.." +
                                std::to_string(names.size()) + " classes, got " +
                                std::to_string(config.num_classes));
  }
  if (config.base_per_class < 1)
    throw std::invalid_argument("base_per_class must be >= 1");

  DatasetManifest manifest;
  manifest.num_classes = config.num_classes;
  manifest.class_names.assign(names.begin(),
                              names.begin() + config.num_classes);
  for (std::size_t label = 0; label < config.num_classes; ++label) {
    const fs::path class_dir = out_dir / names[label];
    fs::create_directories(class_dir);
    for (std::size_t idx = 0; idx < config.base_per_class; ++idx) {
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%03zu", idx);
      const std::string stem = names[label] + suffix;
      write_pgm(class_dir / (stem + ".pgm"),
                synth_render(label, idx, config.seed));
      ManifestRecord record;
      record.path = names[label] + "/" + stem + ".pgm";
      record.label = label;
      record.class_name = names[label];
      record.split = Split::train;
      record.orientation_deg = 0;
      record.source_id = names[label] + "/" + stem;
      manifest.records.push_back(std::move(record));
    }
  }
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace scenechar
