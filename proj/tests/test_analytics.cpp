#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "glad/analytics.hpp"
#include "glad/harness.hpp"
#include "glad/objectives.hpp"
#include "glad/rng.hpp"
#include "support/attention_oracles.hpp"

using namespace glad;
using namespace glad::testing;

TEST_CASE("distance map matches patch center geometry") {
  for (std::size_t grid : {1u, 2u, 4u, 7u}) {
    for (std::size_t s : {1u, 4u, 16u}) {
      DistanceMap map(grid, s);
      REQUIRE(map.tokens() == grid * grid);
      double worst = 0.0;
      for (std::size_t j = 0; j < map.tokens(); ++j) {
        for (std::size_t k = 0; k < map.tokens(); ++k) {
          worst = std::max(worst, std::abs(map.at(j, k) - center_distance(j, k, grid, s)));
          CHECK(map.at(j, k) == map.at(k, j));
        }
        CHECK(map.at(j, j) == 0.0);
      }
      CHECK(worst < 1e-12);
    }
  }
  DistanceMap m(4, 4);
  CHECK(m.at(0, 1) == 4.0);
  CHECK(m.at(0, 4) == 4.0);
  CHECK(m.at(0, 5) == doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(m.max() == doctest::Approx(12.0 * std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("entropy and distance agree with double-loop oracles on random attention") {
  CounterRng rng(2024, "analytics");
  const std::size_t grid = 3, s = 4;
  const DistanceMap map(grid, s);
  double worst_e = 0.0, worst_d = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng.below(3), H = 1 + rng.below(4);
    AttentionRecord<double> record;
    record.layers.push_back(random_layer(rng, B, H, grid * grid));
    const auto& layer = record.layers[0];
    const auto dists = attention_distances(layer, map);
    for (std::size_t h = 0; h < H; ++h) {
      worst_e = std::max(worst_e, std::abs(head_entropy(record, 0, h, AttentionPath::adaptor_free) -
                                           brute_entropy(layer, h)));
      worst_d = std::max(worst_d, std::abs(dists[h] - brute_distance(layer, h, grid, s)));
      CHECK(attention_distance(record, map, 0, h) == dists[h]);
    }
  }
  CHECK(worst_e < 1e-10);
  CHECK(worst_d < 1e-10);
}

TEST_CASE("attention distance hand examples") {
  const DistanceMap map(2, 4);
  // Every query attends to token 3; distances from tokens 0..3 are 4*sqrt2, 4, 4, 0.
  std::vector<double> p(16, 0.0);
  for (std::size_t q = 0; q < 4; ++q) p[q * 4 + 3] = 1.0;
  LayerAttention<double> l{Tensor<double>({1, 4, 4}, p), Tensor<double>(), 1, 1, 4};
  CHECK(attention_distances(l, map)[0] == doctest::Approx((4.0 * std::sqrt(2.0) + 8.0) / 4.0).epsilon(1e-15));

  // Identity attention has zero distance.
  std::vector<double> eye(16, 0.0);
  for (std::size_t q = 0; q < 4; ++q) eye[q * 5] = 1.0;
  LayerAttention<double> id{Tensor<double>({1, 4, 4}, eye), Tensor<double>(), 1, 1, 4};
  CHECK(attention_distances(id, map)[0] == 0.0);

  CHECK_THROWS_AS(attention_distances(id, DistanceMap(3, 4)), Error);
  AttentionRecord<double> rec;
  rec.layers.push_back(id);
  CHECK_THROWS_AS(attention_distance(rec, map, 0, 1), Error);
  CHECK_THROWS_AS(attention_distances(id, map, AttentionPath::adaptor_guided), Error);
}

TEST_CASE("mean and population std") {
  const auto ms = mean_and_std({1.0, 2.0, 3.0, 4.0});
  CHECK(ms.mean == 2.5);
  CHECK(ms.std == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(mean_and_std({}).mean == 0.0);
  CHECK(mean_and_std({7.0}).std == 0.0);

  const auto s = aggregate_layer_stats("task1", "task1-val", 2, {1.0, 3.0}, {0.5, 0.5});
  CHECK(s.layer == 2);
  CHECK(s.head_count == 2);
  CHECK(s.dist_mean == 2.0);
  CHECK(s.dist_std == 1.0);
  CHECK(s.entr_mean == 0.5);
  CHECK(s.entr_std == 0.0);
}

TEST_CASE("stats csv is sorted by phase then layer") {
  std::vector<LayerStats> rows = {
      {"task2", "a", 0, 4, 1, 0, 1, 0},
      {"task1", "a", 1, 4, 2, 0.5, 1.5, 0.25},
      {"task1", "a", 0, 4, 3, 0, 2, 0},
  };
  const std::string csv = format_stats_csv(rows);
  CHECK(csv ==
        "phase,dataset,layer,head_count,dist_mean,dist_std,entr_mean,entr_std\n"
        "task1,a,0,4,3,0,2,0\n"
        "task1,a,1,4,2,0.5,1.5,0.25\n"
        "task2,a,0,4,1,0,1,0\n");

  const auto dir = std::filesystem::temp_directory_path() / "glad_test_analytics";
  std::filesystem::remove_all(dir);
  emit_stats_csv(rows, dir / "sub" / "stats.csv");
  std::ifstream in(dir / "sub" / "stats.csv");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == csv);
  std::filesystem::remove_all(dir);
}

TEST_CASE("layer stats over a model are batch-size independent") {
  ViTConfig cfg;
  cfg.embed_dim = 16;
  cfg.depth = 2;
  ProtocolConfig p;
  p.seed = 5;
  const auto model = make_model(cfg, p);
  SyntheticSpec spec;
  spec.tasks = 1;
  spec.train_per_class = 3;
  spec.val_per_class = 1;
  const auto data = generate_synthetic_datasets(spec);
  const auto images = data.train.all_images();
  const auto a = collect_layer_stats(model, images, "p", "d", 64);
  const auto b = collect_layer_stats(model, images, "p", "d", 4);
  REQUIRE(a.size() == 2);
  REQUIRE(b.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(a[l].head_count == 4);
    CHECK(a[l].dist_mean == doctest::Approx(b[l].dist_mean).epsilon(1e-5));
    CHECK(a[l].entr_mean == doctest::Approx(b[l].entr_mean).epsilon(1e-5));
    CHECK(a[l].entr_mean <= std::log(16.0) + 1e-5);
    CHECK(a[l].dist_mean <= DistanceMap::for_model(cfg).max());
  }
}
