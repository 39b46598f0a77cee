#include <algorithm>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "glad/checkpoint_io.hpp"
#include "glad/data.hpp"
#include "glad/ops.hpp"
#include "glad/optim.hpp"
#include "glad/rng.hpp"

using namespace glad;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(b, bits);
}

// Two 1x2x2 images labelled 2 and 0, three classes.
std::vector<std::uint8_t> fixture() {
  std::vector<std::uint8_t> b = {'G', 'L', 'D', 'S'};
  put_u32(b, 1);
  put_u32(b, 2);
  put_u32(b, 1);
  put_u32(b, 2);
  put_u32(b, 2);
  b.push_back(1);
  for (float f : {0.0f, 0.25f, 0.5f, 1.0f}) put_f32(b, f);
  put_u32(b, 2);
  for (float f : {1.0f, 0.75f, 0.125f, 0.0f}) put_f32(b, f);
  put_u32(b, 0);
  put_u32(b, 3);
  return b;
}

Dataset labelled(std::uint32_t classes, std::uint32_t per_class) {
  Dataset ds;
  ds.channels = 1;
  ds.height = ds.width = 2;
  ds.has_labels = true;
  ds.num_classes = classes;
  for (std::uint32_t i = 0; i < per_class; ++i) {
    for (std::uint32_t c = 0; c < classes; ++c) {
      const float v = static_cast<float>(c * 100 + i);
      const float img[4] = {v, v + 0.5f, -v, 1.0f};
      ds.append(img, c);
    }
  }
  return ds;
}

using Instance = std::pair<std::vector<float>, std::uint32_t>;

std::multiset<Instance> instances(const Dataset& ds) {
  std::multiset<Instance> out;
  const std::size_t per = ds.image_numel();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.insert({std::vector<float>(ds.pixels.begin() + i * per, ds.pixels.begin() + (i + 1) * per), ds.labels[i]});
  }
  return out;
}

}  // namespace

TEST_CASE("hand-encoded GLDS fixture") {
  const Dataset ds = decode_dataset(fixture());
  CHECK(ds.size() == 2);
  CHECK(ds.channels == 1);
  CHECK(ds.height == 2);
  CHECK(ds.width == 2);
  CHECK(ds.has_labels);
  CHECK(ds.num_classes == 3);
  CHECK(ds.pixels == std::vector<float>{0.0f, 0.25f, 0.5f, 1.0f, 1.0f, 0.75f, 0.125f, 0.0f});
  CHECK(ds.labels == std::vector<std::uint32_t>{2, 0});
  CHECK(encode_dataset(ds) == fixture());
}

TEST_CASE("GLDS round trip through files is byte identical") {
  SyntheticSpec spec;
  spec.tasks = 2;
  spec.train_per_class = 2;
  spec.val_per_class = 1;
  const auto data = generate_synthetic_datasets(spec);
  const auto dir = std::filesystem::temp_directory_path() / "glad_test_data";
  std::filesystem::remove_all(dir);
  save_dataset(data.train, dir / "a.glds");
  const Dataset back = load_dataset(dir / "a.glds");
  CHECK(back == data.train);
  save_dataset(back, dir / "b.glds");
  CHECK(read_file_bytes(dir / "a.glds") == read_file_bytes(dir / "b.glds"));

  Dataset unlabeled = data.val;
  unlabeled.has_labels = false;
  unlabeled.labels.clear();
  CHECK(decode_dataset(encode_dataset(unlabeled)) == unlabeled);
  std::filesystem::remove_all(dir);
}

TEST_CASE("GLDS error paths") {
  auto bytes = fixture();
  for (std::size_t cut : {0u, 3u, 6u, 20u, 30u, 50u}) {
    auto t = bytes;
    t.resize(std::min(cut, t.size() - 1));
    CHECK(code_of([&] { decode_dataset(t); }) == ErrorCode::TruncatedFile);
  }
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(code_of([&] { decode_dataset(bad); }) == ErrorCode::BadMagic);
  auto version = bytes;
  version[4] = 9;
  CHECK(code_of([&] { decode_dataset(version); }) == ErrorCode::VersionUnsupported);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK(code_of([&] { decode_dataset(trailing); }) == ErrorCode::IoFailure);
  auto label = bytes;
  label[label.size() - 4] = 2;  // class count 2, but a label is 2
  CHECK(code_of([&] { decode_dataset(label); }) == ErrorCode::LabelOutOfRange);
  CHECK(code_of([&] { load_dataset("/nonexistent/x.glds"); }) == ErrorCode::IoFailure);
}

TEST_CASE("split by class: degenerate and sorted assignment") {
  const Dataset ds = labelled(10, 3);
  const auto ten = split_by_class(ds, 10);
  REQUIRE(ten.size() == 10);
  for (std::uint32_t t = 0; t < 10; ++t) {
    CHECK(ten[t].classes == std::vector<std::uint32_t>{t});
    CHECK(ten[t].data.size() == 3);
    CHECK(ten[t].data.num_classes == 1);
  }
  const auto five = split_by_class(ds, 5);
  for (std::uint32_t t = 0; t < 5; ++t) {
    CHECK(five[t].classes == std::vector<std::uint32_t>{2 * t, 2 * t + 1});
    CHECK(five[t].data.num_classes == 2);
    for (auto l : five[t].data.labels) CHECK(l < 2);
  }
  CHECK(code_of([&] { split_by_class(ds, 3); }) == ErrorCode::IndivisibleClasses);
  CHECK(code_of([&] { split_by_class(ds, 0); }) == ErrorCode::IndivisibleClasses);
  Dataset unlabeled = ds;
  unlabeled.has_labels = false;
  unlabeled.labels.clear();
  CHECK(code_of([&] { split_by_class(unlabeled, 5); }) == ErrorCode::DataMissing);
}

TEST_CASE("split by class partitions the dataset as a multiset") {
  const Dataset ds = labelled(6, 4);
  const auto parts = split_by_class(ds, 3);
  std::multiset<Instance> joined;
  std::set<std::uint32_t> seen;
  for (const auto& p : parts) {
    for (auto c : p.classes) CHECK(seen.insert(c).second);
    Dataset restored = p.data;
    for (auto& l : restored.labels) l = p.classes[l];
    const auto part = instances(restored);
    joined.insert(part.begin(), part.end());
  }
  CHECK(joined == instances(ds));
}

TEST_CASE("task sequence ids are 1-based and class disjoint") {
  SyntheticSpec spec;
  spec.tasks = 3;
  spec.classes_per_task = 2;
  spec.train_per_class = 2;
  spec.val_per_class = 1;
  const auto tasks = generate_synthetic(spec);
  REQUIRE(tasks.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(tasks[t].id == t + 1);
    CHECK(tasks[t].classes == std::vector<std::uint32_t>{static_cast<std::uint32_t>(2 * t),
                                                         static_cast<std::uint32_t>(2 * t + 1)});
    CHECK(tasks[t].train.size() == 4);
    CHECK(tasks[t].val.size() == 2);
  }
}

TEST_CASE("synthetic generator is deterministic under its seed") {
  SyntheticSpec spec;
  spec.tasks = 2;
  spec.train_per_class = 3;
  spec.val_per_class = 2;
  spec.seed = 17;
  const auto a = generate_synthetic_datasets(spec);
  const auto b = generate_synthetic_datasets(spec);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.train.size() == 30);
  CHECK(a.train.num_classes == 10);
  for (float v : a.train.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  spec.seed = 18;
  CHECK_FALSE(generate_synthetic_datasets(spec).train == a.train);
  CHECK_FALSE(a.train.pixels == a.val.pixels);
}

TEST_CASE("noise-free generator without jitter repeats each class exactly") {
  SyntheticSpec spec;
  spec.tasks = 3;
  spec.train_per_class = 4;
  spec.val_per_class = 1;
  spec.noise = 0.0;
  spec.jitter = 0;
  spec.colour_jitter = 0.0;
  const auto d = generate_synthetic_datasets(spec).train;
  const std::size_t per = d.image_numel();
  auto image = [&](std::size_t i) { return std::vector<float>(d.pixels.begin() + i * per, d.pixels.begin() + (i + 1) * per); };
  std::map<std::uint32_t, std::vector<float>> first;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto [it, fresh] = first.emplace(d.labels[i], image(i));
    if (!fresh) CHECK(it->second == image(i));
  }
  // Different classes never render the same template.
  for (auto a = first.begin(); a != first.end(); ++a) {
    for (auto b = std::next(a); b != first.end(); ++b) CHECK_FALSE(a->second == b->second);
  }
}

TEST_CASE("with jitter, same-class images differ only by placement") {
  SyntheticSpec spec;
  spec.tasks = 1;
  spec.train_per_class = 30;
  spec.val_per_class = 1;
  spec.noise = 0.0;
  spec.colour_jitter = 0.0;
  spec.jitter = 1;
  const auto d = generate_synthetic_datasets(spec).train;
  // At most (2j + 1)^2 placements times a grating phase; checkerboards (class
  // 2) have no phase, so at most 9 distinct renderings.
  std::set<std::vector<float>> renders;
  const std::size_t per = d.image_numel();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] == 2) renders.insert(std::vector<float>(d.pixels.begin() + i * per, d.pixels.begin() + (i + 1) * per));
  }
  CHECK(renders.size() > 1);
  CHECK(renders.size() <= 9);
}

TEST_CASE("a linear classifier on raw pixels does not solve the held-out split") {
  SyntheticSpec spec;
  spec.tasks = 1;
  spec.train_per_class = 200;
  spec.val_per_class = 100;
  spec.seed = 3;
  const auto task = generate_synthetic(spec).front();
  const std::size_t D = task.train.image_numel(), C = task.train.num_classes;

  CounterRng rng(1, "linear");
  std::vector<float> w(D * C);
  for (auto& v : w) v = static_cast<float>(0.01 * rng.normal());
  std::vector<ParamRef<float>> params = {{"w", Tensor<float>({D, C}, w)}, {"b", Tensor<float>({C}, std::vector<float>(C, 0.0f)), false}};
  for (auto& p : params) p.tensor.set_requires_grad(true);
  OptimizerState<float> opt(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  const Tensor<float> x = reshape(task.train.all_images(), {task.train.size(), D});
  std::vector<std::size_t> labels(task.train.labels.begin(), task.train.labels.end());
  for (int s = 0; s < 300; ++s) {
    zero_grads<float>(params);
    Tape<float> tape;
    tape.backward(cross_entropy(add(matmul(x, params[0].tensor), params[1].tensor), labels));
    adamw_step<float>(params, opt, 1e-2);
  }
  auto accuracy = [&](const Dataset& ds) {
    const auto logits = add(matmul(reshape(ds.all_images(), {ds.size(), D}), params[0].tensor), params[1].tensor).data();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto row = logits.begin() + static_cast<std::ptrdiff_t>(i * C);
      hits += static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(C)) - row) == ds.labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
  };
  const double val = accuracy(task.val);
  MESSAGE("linear raw-pixel accuracy: train " << accuracy(task.train) << ", val " << val);
  CHECK(val < 1.0);
  CHECK(val > 0.2);  // above chance, so the classes carry signal
}
