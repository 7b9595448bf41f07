// Seeded procedural generator for the five defect families (metal chips on
// the outer rim and inner region, cracks, top and side scratches) on a
// machined-surface background, plus dataset load/save.
//
// Determinism: every sample draws from an Rng stream forked from
// (seed, sample index), so regeneration and parallel generation are
// byte-identical.
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "partsnet/core/rng.hpp"
#include "partsnet/core/tensor.hpp"
#include "partsnet/png_io.hpp"

namespace partsnet {

enum class DefectType { OuterChip, InnerChip, Crack, TopScratch, SideScratch, None };

constexpr std::array<DefectType, 6> kDefectTypes = {
    DefectType::OuterChip, DefectType::InnerChip,   DefectType::Crack,
    DefectType::TopScratch, DefectType::SideScratch, DefectType::None};

inline const char* to_string(DefectType t) {
  switch (t) {
    case DefectType::OuterChip: return "outer-chip";
    case DefectType::InnerChip: return "inner-chip";
    case DefectType::Crack: return "crack";
    case DefectType::TopScratch: return "top-scratch";
    case DefectType::SideScratch: return "side-scratch";
    case DefectType::None: return "none";
  }
  return "none";
}

inline std::optional<DefectType> defect_type_from(const std::string& s) {
  for (DefectType t : kDefectTypes) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

struct BackgroundSpec {
  double base_gray = 0.35;
  double groove_freq = 6.0;      // machining-groove cycles across the image
  double groove_contrast = 0.04;
  double noise_sigma = 0.05;
};

struct DefectGeometry {
  double intensity_delta = 0.4;  // brightness offset of defect over background
  int chip_discs_min = 2, chip_discs_max = 5;
  double chip_radius_min = 2.0, chip_radius_max = 4.0;
  int crack_len_min = 16, crack_len_max = 30;
  double crack_width_min = 1.0, crack_width_max = 3.0;
  int scratch_len_min = 16, scratch_len_max = 44;
  double scratch_width_min = 1.0, scratch_width_max = 2.0;
};

struct GenSpec {
  int width = 64;
  int height = 64;
  std::vector<std::pair<DefectType, int>> counts{
      {DefectType::OuterChip, 40}, {DefectType::InnerChip, 40},   {DefectType::Crack, 40},
      {DefectType::TopScratch, 40}, {DefectType::SideScratch, 40}, {DefectType::None, 40}};
  BackgroundSpec background;
  DefectGeometry defect;
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(width % 4 == 0 && height % 4 == 0,
                    "GenSpec: width and height must be divisible by 4");
    int total = 0;
    for (const auto& [type, count] : counts) {
      detail::require(count >= 0, "GenSpec: negative count");
      total += count;
    }
    detail::require(total > 0, "GenSpec: zero total count");
    detail::require(train_fraction >= 0.0 && train_fraction <= 1.0,
                    "GenSpec: train_fraction must be in [0, 1]");
  }

  int total_count() const {
    int total = 0;
    for (const auto& [type, count] : counts) total += count;
    return total;
  }
};

struct Sample {
  Tensor<float> image;  // (1,1,H,W), values in [0,1]
  Tensor<float> mask;   // (1,1,H,W), values in {0,1}
  int label = 0;
  DefectType type = DefectType::None;
  std::string split;
};

struct ManifestRow {
  std::string path;
  std::string mask_path;
  int label = 0;
  std::string defect_type;
  std::string split;
};

struct DatasetManifest {
  std::string base_dir;
  std::vector<ManifestRow> rows;
};

namespace detail_synth {

using Coverage = std::vector<float>;  // row-major h*w in [0,1]

inline void stamp_disc(Coverage& cov, int w, int h, double cx, double cy, double r) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      const float c = static_cast<float>(std::clamp(r + 0.5 - d, 0.0, 1.0));
      float& cell = cov[static_cast<std::size_t>(y) * w + x];
      cell = std::max(cell, c);
    }
  }
}

inline void stamp_segment(Coverage& cov, int w, int h, double x0, double y0, double x1, double y1,
                          double halfw) {
  const int by0 = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - halfw - 1)));
  const int by1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + halfw + 1)));
  const int bx0 = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - halfw - 1)));
  const int bx1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + halfw + 1)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len_sq = dx * dx + dy * dy;
  for (int y = by0; y <= by1; ++y) {
    for (int x = bx0; x <= bx1; ++x) {
      double t = len_sq > 0 ? ((x - x0) * dx + (y - y0) * dy) / len_sq : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double d = std::hypot(x - (x0 + t * dx), y - (y0 + t * dy));
      const float c = static_cast<float>(std::clamp(halfw + 0.5 - d, 0.0, 1.0));
      float& cell = cov[static_cast<std::size_t>(y) * w + x];
      cell = std::max(cell, c);
    }
  }
}

inline Coverage make_coverage(const GenSpec& spec, DefectType type, Rng& rng) {
  const int w = spec.width, h = spec.height;
  const DefectGeometry& g = spec.defect;
  Coverage cov(static_cast<std::size_t>(w) * h, 0.0f);
  switch (type) {
    case DefectType::None:
      break;
    case DefectType::OuterChip:
    case DefectType::InnerChip: {
      double ax, ay;
      if (type == DefectType::OuterChip) {
        // anchored in the border band
        const double band = 0.12 * std::min(w, h) + 2.0;
        const int side = rng.uniform_int(0, 3);
        const double along = rng.uniform(2.0, (side < 2 ? w : h) - 3.0);
        const double depth = rng.uniform(1.0, band);
        switch (side) {
          case 0: ax = along; ay = depth; break;
          case 1: ax = along; ay = h - 1 - depth; break;
          case 2: ax = depth; ay = along; break;
          default: ax = w - 1 - depth; ay = along; break;
        }
      } else {
        ax = rng.uniform(0.3 * w, 0.7 * w);
        ay = rng.uniform(0.3 * h, 0.7 * h);
      }
      const int discs = rng.uniform_int(g.chip_discs_min, g.chip_discs_max);
      for (int k = 0; k < discs; ++k) {
        const double r = rng.uniform(g.chip_radius_min, g.chip_radius_max);
        const double cx = ax + rng.uniform(-1.2 * r, 1.2 * r);
        const double cy = ay + rng.uniform(-1.2 * r, 1.2 * r);
        stamp_disc(cov, w, h, cx, cy, r);
      }
      break;
    }
    case DefectType::Crack: {
      double x = rng.uniform(4.0, w - 5.0);
      double y = rng.uniform(4.0, h - 5.0);
      double heading = rng.uniform(0.0, 6.283185307179586);
      const int steps = rng.uniform_int(g.crack_len_min, g.crack_len_max);
      const double halfw = rng.uniform(g.crack_width_min, g.crack_width_max) / 2.0;
      for (int s = 0; s < steps; ++s) {
        const double nx = x + std::cos(heading);
        const double ny = y + std::sin(heading);
        stamp_segment(cov, w, h, x, y, nx, ny, halfw);
        x = std::clamp(nx, 1.0, w - 2.0);
        y = std::clamp(ny, 1.0, h - 2.0);
        if (x != nx || y != ny) heading += 1.5707963267948966;  // deflect off the wall
        heading += rng.uniform(-0.35, 0.35);
      }
      break;
    }
    case DefectType::TopScratch:
    case DefectType::SideScratch: {
      const double len = rng.uniform_int(g.scratch_len_min, g.scratch_len_max);
      const double halfw = rng.uniform(g.scratch_width_min, g.scratch_width_max) / 2.0;
      double theta = rng.uniform(-0.26, 0.26);
      if (type == DefectType::SideScratch) theta += 1.5707963267948966;
      const double cx = rng.uniform(0.25 * w, 0.75 * w);
      const double cy = rng.uniform(0.25 * h, 0.75 * h);
      stamp_segment(cov, w, h, cx - 0.5 * len * std::cos(theta), cy - 0.5 * len * std::sin(theta),
                    cx + 0.5 * len * std::cos(theta), cy + 0.5 * len * std::sin(theta), halfw);
      break;
    }
  }
  return cov;
}

inline std::int64_t mask_count(const Coverage& cov) {
  std::int64_t n = 0;
  for (float c : cov) n += (c >= 0.5f);
  return n;
}

}  // namespace detail_synth

struct RenderedSample {
  GrayImage image;
  GrayImage mask;
  int label = 0;
};

// Deterministic render of sample `index`. `with_defect = false` re-renders the
// identical background without compositing the defect.
inline RenderedSample render_sample(const GenSpec& spec, DefectType type, std::uint64_t index,
                                    bool with_defect = true) {
  const int w = spec.width, h = spec.height;
  Rng sample_rng = Rng(spec.seed).fork(index);
  Rng bg_rng = sample_rng.fork(1);

  const BackgroundSpec& bg = spec.background;
  const double phi = bg_rng.uniform(0.0, 3.141592653589793);
  const double phase = bg_rng.uniform(0.0, 6.283185307179586);
  const double cos_phi = std::cos(phi), sin_phi = std::sin(phi);
  const double scale = 6.283185307179586 * bg.groove_freq / std::max(w, h);

  std::vector<float> field(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = bg.base_gray + bg.groove_contrast * std::sin(scale * (cos_phi * x + sin_phi * y) + phase) +
                 bg.noise_sigma * bg_rng.gaussian();
      // keep background clear of saturation so composited defects always
      // change the quantized pixel
      field[static_cast<std::size_t>(y) * w + x] = static_cast<float>(std::clamp(v, 0.02, 0.80));
    }
  }

  detail_synth::Coverage cov(static_cast<std::size_t>(w) * h, 0.0f);
  if (type != DefectType::None) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Rng geom_rng = sample_rng.fork(100 + static_cast<std::uint64_t>(attempt));
      cov = detail_synth::make_coverage(spec, type, geom_rng);
      if (detail_synth::mask_count(cov) >= 16) break;
    }
    detail::require(detail_synth::mask_count(cov) >= 16,
                    "render_sample: could not place a defect of at least 16 pixels");
  }

  RenderedSample out;
  out.image.w = out.mask.w = w;
  out.image.h = out.mask.h = h;
  out.image.pixels.resize(field.size());
  out.mask.pixels.resize(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    double v = field[i];
    if (with_defect) v = std::clamp(v + spec.defect.intensity_delta * cov[i], 0.0, 1.0);
    out.image.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    out.mask.pixels[i] = cov[i] >= 0.5f ? 255 : 0;
    if (out.mask.pixels[i]) out.label = 1;
  }
  return out;
}

// Directory layout: images/NNNN.png, masks/NNNN.png, manifest.csv with header
// path,mask_path,label,defect_type,split.
inline DatasetManifest generate_dataset(const GenSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  std::uint64_t index = 0;
  for (const auto& [type, count] : spec.counts) {
    const long n_train = std::lround(count * spec.train_fraction);
    for (int i = 0; i < count; ++i, ++index) {
      RenderedSample r = render_sample(spec, type, index);
      char name[16];
      std::snprintf(name, sizeof(name), "%04llu.png", static_cast<unsigned long long>(index));
      const std::string img_rel = std::string("images/") + name;
      const std::string mask_rel = std::string("masks/") + name;
      write_png_gray8((fs::path(out_dir) / img_rel).string(), r.image);
      write_png_gray8((fs::path(out_dir) / mask_rel).string(), r.mask);
      manifest.rows.push_back(
          {img_rel, mask_rel, r.label, to_string(type), i < n_train ? "train" : "test"});
    }
  }

  std::ofstream csv(fs::path(out_dir) / "manifest.csv");
  if (!csv) throw std::runtime_error("generate_dataset: cannot write manifest in " + out_dir);
  csv << "path,mask_path,label,defect_type,split\n";
  for (const auto& row : manifest.rows) {
    csv << row.path << ',' << row.mask_path << ',' << row.label << ',' << row.defect_type << ','
        << row.split << '\n';
  }
  return manifest;
}

inline DatasetManifest read_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("read_manifest: missing file: " + manifest_path);
  DatasetManifest manifest;
  manifest.base_dir = fs::path(manifest_path).parent_path().string();
  if (manifest.base_dir.empty()) manifest.base_dir = ".";
  std::string line;
  if (!std::getline(in, line) || line != "path,mask_path,label,defect_type,split") {
    throw std::runtime_error("read_manifest: malformed header in " + manifest_path);
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw std::runtime_error("read_manifest: malformed row " + std::to_string(line_no) + " in " +
                               manifest_path);
    }
    ManifestRow row;
    row.path = fields[0];
    row.mask_path = fields[1];
    row.label = std::stoi(fields[2]);
    row.defect_type = fields[3];
    row.split = fields[4];
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

// Decodes every referenced file; images land in [0,1], masks in {0,1}.
inline std::vector<Sample> load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  DatasetManifest manifest = read_manifest(manifest_path);
  std::vector<Sample> samples;
  samples.reserve(manifest.rows.size());
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const ManifestRow& row = manifest.rows[i];
    // +2: one for the header line, one for 1-based numbering
    const std::string row_tag = "manifest row " + std::to_string(i + 2);
    GrayImage img, mask;
    try {
      img = read_png_gray8((fs::path(manifest.base_dir) / row.path).string());
      mask = read_png_gray8((fs::path(manifest.base_dir) / row.mask_path).string());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(row_tag + ": " + e.what());
    }
    if (img.w != mask.w || img.h != mask.h) {
      throw std::runtime_error(row_tag + ": shape disagreement, image " + std::to_string(img.w) +
                               "x" + std::to_string(img.h) + " vs mask " + std::to_string(mask.w) +
                               "x" + std::to_string(mask.h));
    }
    Sample s;
    s.image = Tensor<float>(1, 1, img.h, img.w);
    s.mask = Tensor<float>(1, 1, mask.h, mask.w);
    for (std::size_t p = 0; p < img.pixels.size(); ++p) {
      s.image.data()[p] = static_cast<float>(img.pixels[p]) / 255.0f;
      const std::uint8_t mv = mask.pixels[p];
      if (mv != 0 && mv != 255) {
        throw std::runtime_error(row_tag + ": mask contains values other than 0 and 255: " +
                                 row.mask_path);
      }
      s.mask.data()[p] = mv ? 1.0f : 0.0f;
    }
    s.label = row.label;
    if (auto t = defect_type_from(row.defect_type)) {
      s.type = *t;
    } else {
      throw std::runtime_error(row_tag + ": unknown defect type '" + row.defect_type + "'");
    }
    s.split = row.split;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace partsnet
