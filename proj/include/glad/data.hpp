#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "glad/tensor.hpp"

namespace glad {

inline constexpr std::uint32_t kDatasetVersion = 1;

// Images in [0, 1] stored image-major as [n, C, H, W].
struct Dataset {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> pixels;
  bool has_labels = false;
  std::vector<std::uint32_t> labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const;
  std::size_t image_numel() const { return std::size_t{channels} * height * width; }
  void append(const float* image, std::uint32_t label);

  // [count, C, H, W] tensor of the selected images.
  Tensor<float> images(const std::vector<std::size_t>& indices) const;
  Tensor<float> all_images() const;

  bool operator==(const Dataset&) const = default;
};

// GLDS layout, little-endian:
//   "GLDS" | u32 version | u32 n | u32 C | u32 H | u32 W | u8 label flag |
//   n records of C*H*W f32 (+ u32 label if flagged) | u32 class count
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct ClassSplit {
  std::vector<std::uint32_t> classes;  // original class ids; position = remapped label
  Dataset data;
};

// Partitions by sorted class id into `tasks` groups of equal size, remapping
// labels to [0, classes/tasks). Instance order is preserved within a task.
// Throws IndivisibleClasses when the class count does not divide evenly.
std::vector<ClassSplit> split_by_class(const Dataset& ds, std::size_t tasks);

struct TaskSpec {
  std::size_t id = 0;  // 1-based position in the sequence
  std::vector<std::uint32_t> classes;
  Dataset train;
  Dataset val;
};

using TaskSequence = std::vector<TaskSpec>;

// Splits matching train/val datasets into a task sequence.
TaskSequence make_task_sequence(const Dataset& train, const Dataset& val, std::size_t tasks);

struct SyntheticSpec {
  std::uint32_t image_size = 16;
  std::uint32_t channels = 3;
  std::uint32_t classes_per_task = 5;
  std::uint32_t tasks = 5;
  std::uint32_t train_per_class = 200;
  std::uint32_t val_per_class = 50;
  std::uint32_t jitter = 2;    // max placement offset in pixels
  double noise = 0.05;         // std of additive Gaussian pixel noise
  double colour_jitter = 1.0;  // 0 = fixed colours, 1 = fully random per image
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset train;
  Dataset val;
};

// Classes cycle through three shape families (oriented gratings, blobs,
// checkerboards) with per-class geometry that never repeats. Each image
// draws its own foreground and background colours, so no single pixel
// template separates the classes.
SyntheticData generate_synthetic_datasets(const SyntheticSpec& spec);
TaskSequence generate_synthetic(const SyntheticSpec& spec);

}  // namespace glad
