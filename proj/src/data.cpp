#include "glad/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "glad/checkpoint_io.hpp"
#include "glad/rng.hpp"

namespace glad {

std::size_t Dataset::size() const {
  const std::size_t per = image_numel();
  return per == 0 ? 0 : pixels.size() / per;
}

void Dataset::append(const float* image, std::uint32_t label) {
  pixels.insert(pixels.end(), image, image + image_numel());
  if (has_labels) labels.push_back(label);
}

Tensor<float> Dataset::images(const std::vector<std::size_t>& indices) const {
  const std::size_t per = image_numel();
  std::vector<float> out(indices.size() * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return Tensor<float>({indices.size(), channels, height, width}, std::move(out));
}

Tensor<float> Dataset::all_images() const {
  return Tensor<float>({size(), channels, height, width}, pixels);
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.pixels.size() != ds.size() * ds.image_numel() || (ds.has_labels && ds.labels.size() != ds.size())) {
    throw Error(ErrorCode::ShapeMismatch, "dataset arrays disagree with its header");
  }
  ByteWriter w;
  w.raw("GLDS", 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(ds.channels);
  w.u32(ds.height);
  w.u32(ds.width);
  w.u8(ds.has_labels ? 1 : 0);
  const std::size_t per = ds.image_numel();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < per; ++k) w.f32(ds.pixels[i * per + k]);
    if (ds.has_labels) w.u32(ds.labels[i]);
  }
  w.u32(ds.num_classes);
  return std::move(w.bytes());
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.need(4);
  if (r.string(4) != "GLDS") throw Error(ErrorCode::BadMagic, "not a GLDS dataset");
  r.need(4);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw Error(ErrorCode::VersionUnsupported, "GLDS version " + std::to_string(version));
  }
  r.need(4 * 4 + 1);
  Dataset ds;
  const std::uint32_t n = r.u32();
  ds.channels = r.u32();
  ds.height = r.u32();
  ds.width = r.u32();
  ds.has_labels = r.u8() != 0;
  const std::size_t per = ds.image_numel();
  const std::size_t record = per * 4 + (ds.has_labels ? 4 : 0);
  const std::size_t expected = std::size_t{n} * record + 4;
  if (r.remaining() < expected) throw Error(ErrorCode::TruncatedFile, "GLDS body is shorter than its header");
  if (r.remaining() > expected) throw Error(ErrorCode::IoFailure, "GLDS file has trailing bytes");
  ds.pixels.resize(std::size_t{n} * per);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < per; ++k) ds.pixels[i * per + k] = r.f32();
    if (ds.has_labels) ds.labels.push_back(r.u32());
  }
  ds.num_classes = r.u32();
  for (auto l : ds.labels) {
    if (l >= ds.num_classes) {
      throw Error(ErrorCode::LabelOutOfRange,
                  "label " + std::to_string(l) + " >= class count " + std::to_string(ds.num_classes));
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file_bytes(path)); }

std::vector<ClassSplit> split_by_class(const Dataset& ds, std::size_t tasks) {
  if (!ds.has_labels) throw Error(ErrorCode::DataMissing, "class split needs labels");
  if (tasks == 0 || ds.num_classes % tasks != 0) {
    throw Error(ErrorCode::IndivisibleClasses, std::to_string(ds.num_classes) + " classes cannot be split into " +
                                                   std::to_string(tasks) + " equal tasks");
  }
  const std::uint32_t per_task = ds.num_classes / static_cast<std::uint32_t>(tasks);
  std::vector<ClassSplit> out(tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    auto& s = out[t];
    for (std::uint32_t k = 0; k < per_task; ++k) s.classes.push_back(static_cast<std::uint32_t>(t) * per_task + k);
    s.data.channels = ds.channels;
    s.data.height = ds.height;
    s.data.width = ds.width;
    s.data.has_labels = true;
    s.data.num_classes = per_task;
  }
  const std::size_t per = ds.image_numel();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::uint32_t label = ds.labels[i];
    ClassSplit& s = out[label / per_task];
    s.data.append(ds.pixels.data() + i * per, label % per_task);
  }
  return out;
}

TaskSequence make_task_sequence(const Dataset& train, const Dataset& val, std::size_t tasks) {
  if (train.num_classes != val.num_classes) {
    throw Error(ErrorCode::ShapeMismatch, "train and validation declare different class counts");
  }
  auto tr = split_by_class(train, tasks);
  auto va = split_by_class(val, tasks);
  TaskSequence seq;
  for (std::size_t t = 0; t < tasks; ++t) {
    if (va[t].data.size() == 0) {
      throw Error(ErrorCode::DataMissing, "task " + std::to_string(t + 1) + " has no validation images");
    }
    seq.push_back({t + 1, tr[t].classes, std::move(tr[t].data), std::move(va[t].data)});
  }
  return seq;
}

namespace {

struct Placement {
  double dx, dy, phase;
};

// Pattern intensity in [0, 1] at pixel (x, y) for a global class id.
double pattern(std::uint32_t cls, double x, double y, std::uint32_t size, const Placement& p) {
  const std::uint32_t family = cls % 3, variant = cls / 3;
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double u = x - c - p.dx, v = y - c - p.dy;
  switch (family) {
    case 0: {
      // Oriented grating; orientation steps by 20 degrees, period alternates.
      const double theta = static_cast<double>(variant) * std::numbers::pi / 9.0;
      const double period = variant % 2 == 0 ? 4.0 : 6.0;
      const double s = u * std::cos(theta) + v * std::sin(theta);
      return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s / period + p.phase);
    }
    case 1: {
      // Ring of 1-4 Gaussian blobs of one of two radii.
      const std::uint32_t count = 1 + variant % 4;
      const double radius = variant / 4 % 2 == 0 ? 1.5 : 2.5;
      const double ring = count == 1 ? 0.0 : 4.0;
      double best = 0.0;
      for (std::uint32_t k = 0; k < count; ++k) {
        const double a = 2.0 * std::numbers::pi * k / count + (variant / 8) * 0.5;
        const double bx = ring * std::cos(a), by = ring * std::sin(a);
        const double d2 = (u - bx) * (u - bx) + (v - by) * (v - by);
        best = std::max(best, std::exp(-d2 / (2.0 * radius * radius)));
      }
      return best;
    }
    default: {
      // Checkerboard; cell size 2-5, axis-aligned or rotated by 45 degrees.
      const double cell = 2.0 + variant % 4;
      double a = u, b = v;
      if (variant / 4 % 2 == 1) {
        a = (u + v) / std::numbers::sqrt2;
        b = (u - v) / std::numbers::sqrt2;
      }
      const long parity = static_cast<long>(std::floor(a / cell)) + static_cast<long>(std::floor(b / cell));
      return (parity % 2 + 2) % 2 == 0 ? 1.0 : 0.0;
    }
  }
}

void render(std::uint32_t cls, const SyntheticSpec& spec, CounterRng& rng, std::vector<float>& out) {
  const std::uint32_t S = spec.image_size, C = spec.channels;
  const double j = static_cast<double>(spec.jitter);
  Placement p{0.0, 0.0, 0.0};
  if (spec.jitter > 0) {
    p.dx = static_cast<double>(rng.below(2 * spec.jitter + 1)) - j;
    p.dy = static_cast<double>(rng.below(2 * spec.jitter + 1)) - j;
  }
  // Grating phase follows the placement offset so jitter 0 pins it too.
  p.phase = spec.jitter > 0 ? 2.0 * std::numbers::pi * rng.uniform() : 0.0;

  std::vector<double> fg(C), bg(C);
  const double a = spec.colour_jitter;
  for (int attempt = 0;; ++attempt) {
    double contrast = 0.0;
    for (std::uint32_t ch = 0; ch < C; ++ch) {
      fg[ch] = (1.0 - a) * 0.85 + a * rng.uniform();
      bg[ch] = (1.0 - a) * 0.15 + a * rng.uniform();
      contrast += std::abs(fg[ch] - bg[ch]);
    }
    if (contrast / C >= 0.25 || attempt >= 64) break;
  }
  out.resize(std::size_t{C} * S * S);
  for (std::uint32_t y = 0; y < S; ++y) {
    for (std::uint32_t x = 0; x < S; ++x) {
      const double f = pattern(cls, x, y, S, p);
      for (std::uint32_t ch = 0; ch < C; ++ch) {
        double v = bg[ch] + (fg[ch] - bg[ch]) * f;
        if (spec.noise > 0.0) v += spec.noise * rng.normal();
        out[(std::size_t{ch} * S + y) * S + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

Dataset synth_split(const SyntheticSpec& spec, const char* split, std::uint32_t per_class) {
  Dataset ds;
  ds.channels = spec.channels;
  ds.height = ds.width = spec.image_size;
  ds.has_labels = true;
  ds.num_classes = spec.classes_per_task * spec.tasks;
  const CounterRng root = CounterRng(spec.seed, "synthetic").derive(split);
  std::vector<float> img;
  for (std::uint32_t i = 0; i < per_class; ++i) {
    for (std::uint32_t cls = 0; cls < ds.num_classes; ++cls) {
      CounterRng rng = root.derive("class" + std::to_string(cls) + "/" + std::to_string(i));
      render(cls, spec, rng, img);
      ds.append(img.data(), cls);
    }
  }
  return ds;
}

}  // namespace

SyntheticData generate_synthetic_datasets(const SyntheticSpec& spec) {
  if (spec.image_size == 0 || spec.channels == 0 || spec.tasks == 0 || spec.classes_per_task == 0) {
    throw Error(ErrorCode::ConfigError, "synthetic spec needs positive extents");
  }
  return {synth_split(spec, "train", spec.train_per_class), synth_split(spec, "val", spec.val_per_class)};
}

TaskSequence generate_synthetic(const SyntheticSpec& spec) {
  const auto data = generate_synthetic_datasets(spec);
  return make_task_sequence(data.train, data.val, spec.tasks);
}

}  // namespace glad
