#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "glad/harness.hpp"
#include "support/tiny_run.hpp"

using namespace glad;
using namespace glad::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;
}

AccMatrix hand_matrix() {
  // Rows: task i; columns: trained through j.
  AccMatrix m;
  m.set(1, 1, 0.80);
  m.set(1, 2, 0.70);
  m.set(1, 3, 0.65);
  m.set(2, 2, 0.60);
  m.set(2, 3, 0.75);
  m.set(3, 3, 0.90);
  return m;
}

std::vector<NamedArray> backbone_of(const std::vector<NamedArray>& arrays) {
  std::vector<NamedArray> out;
  for (const auto& a : arrays) {
    if (a.name.rfind("head.", 0) != 0 && a.name.rfind("adaptor.", 0) != 0 && a.name.rfind("decoder", 0) != 0) {
      out.push_back(a);
    }
  }
  return out;
}

bool same_checkpoint(const Checkpoint& a, const Checkpoint& b) { return a.to_arrays() == b.to_arrays(); }

}  // namespace

TEST_CASE("backward transfer on a hand-built matrix") {
  const AccMatrix m = hand_matrix();
  // Forgetting on task 1 is negative, improvement on task 2 is positive.
  CHECK(backward_transfer(m, 1, 3) == 0.65 - 0.80);
  CHECK(backward_transfer(m, 2, 3) == 0.75 - 0.60);
  CHECK(backward_transfer(m, 1, 2) == 0.70 - 0.80);
  CHECK(backward_transfer(m, 1, 3) < 0.0);
  CHECK(backward_transfer(m, 2, 3) > 0.0);
  const auto s = backward_transfer_summary(m, 3);
  REQUIRE(s.per_task.size() == 2);
  CHECK(s.per_task[0] == 0.65 - 0.80);
  CHECK(s.per_task[1] == 0.75 - 0.60);
  CHECK(s.mean == ((0.65 - 0.80) + (0.75 - 0.60)) / 2.0);
  CHECK(backward_transfer_summary(m, 1).per_task.empty());
  CHECK(backward_transfer_summary(m, 1).mean == 0.0);
  CHECK(backward_transfer(m, 3, 3) == 0.0);
  CHECK(code_of([&] { backward_transfer(m, 3, 4); }) == ErrorCode::MissingEntry);
  CHECK(code_of([&] { m.at(2, 1); }) == ErrorCode::MissingEntry);
}

TEST_CASE("acc matrix and bwt csv") {
  const AccMatrix m = hand_matrix();
  CHECK(format_acc_matrix_csv(m) ==
        "task,trained_through,accuracy\n"
        "1,1,0.8\n1,2,0.7\n1,3,0.65\n2,2,0.6\n2,3,0.75\n3,3,0.9\n");
  CHECK(format_bwt_csv(m, 3) == "task,bwt\n1,-0.15\n2,0.15\nmean,0\n");
  CHECK(format_transfer_csv({{1, 0.5}, {2, 0.625}}) == "pretrain_tasks,accuracy\n1,0.5\n2,0.625\n");
}

TEST_CASE("protocol validation") {
  ProtocolConfig p;
  CHECK_NOTHROW(p.validate());
  p.framework = Framework::mim;
  p.glad = true;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::ConfigConflict);
  p.glad = false;
  p.mask_rho = 1.0;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::ConfigConflict);
  p = ProtocolConfig{};
  p.batch_size = 0;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::ConfigConflict);
  p = ProtocolConfig{};
  CHECK(p.pretrain_multiplier() == 1.0);
  CHECK(p.finetune_multiplier() == 0.5);
  p.framework = Framework::mim;
  CHECK(p.pretrain_multiplier() == 5.0);
  p.pretrain_lr_multiplier = 2.0;
  CHECK(p.pretrain_multiplier() == 2.0);
}

TEST_CASE("checkpoint arrays round trip") {
  const ViTConfig cfg = tiny_model();
  ProtocolConfig p = tiny_protocol(3);
  p.method = Method::si;
  p.glad = true;
  const auto tasks = tiny_tasks(1, 3);
  const auto ckpts = run_continual_pretraining(tasks, cfg, p);
  REQUIRE(ckpts.size() == 1);
  const Checkpoint& c = ckpts[0];
  CHECK(c.tasks_completed == 1);
  CHECK_FALSE(c.si.entries.empty());
  const Checkpoint back = Checkpoint::from_arrays(c.to_arrays());
  CHECK(same_checkpoint(back, c));
  CHECK(back.rng == c.rng);
  CHECK(back.tasks_completed == 1);

  const auto path = std::filesystem::temp_directory_path() / "glad_test_harness" / "c.bin";
  c.save(path);
  CHECK(same_checkpoint(Checkpoint::load(path), c));
  std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("task boundaries: backbone carries over, classifier and adaptors reset") {
  const ViTConfig cfg = tiny_model();
  ProtocolConfig p = tiny_protocol(11);
  p.glad = true;
  const auto tasks = tiny_tasks(3, 11);

  std::map<std::size_t, std::vector<NamedArray>> start, end;
  PretrainOptions opts;
  opts.on_task_start = [&](std::size_t t, const ViTModel<float>& m) { start[t] = m.export_arrays(kAllParams); };
  opts.on_task_end = [&](std::size_t t, const ViTModel<float>& m) { end[t] = m.export_arrays(kAllParams); };
  const auto ckpts = run_continual_pretraining(tasks, cfg, p, opts);
  REQUIRE(ckpts.size() == 3);

  for (std::size_t t = 1; t <= 3; ++t) {
    // Fresh classifier drawn from the task's init stream.
    ViTModel<float> fresh = make_model(cfg, p);
    fresh.reset_classifier(2, CounterRng(p.seed, "init").derive("task" + std::to_string(t)));
    CHECK(only(start[t], "head.") == fresh.export_arrays(kClassifier));
    CHECK_FALSE(only(end[t], "head.") == only(start[t], "head."));

    const auto adaptors = only(start[t], "adaptor.");
    REQUIRE(adaptors.size() == cfg.depth);
    for (const auto& a : adaptors) {
      for (float v : a.values) CHECK(v == 1.0f);
    }
    bool moved = false;
    for (const auto& a : only(end[t], "adaptor.")) {
      for (float v : a.values) moved = moved || v != 1.0f;
    }
    CHECK(moved);

    CHECK(ckpts[t - 1].params == end[t]);
    if (t > 1) CHECK(backbone_of(start[t]) == backbone_of(end[t - 1]));
  }
  // Task 1 starts from the seed's initialization.
  CHECK(backbone_of(start[1]) == backbone_of(make_model(cfg, p).export_arrays(kAllParams)));
}

TEST_CASE("interrupted and resumed runs are bitwise identical") {
  const ViTConfig cfg = tiny_model();
  for (Framework f : {Framework::supervised, Framework::mim}) {
    CAPTURE(to_string(f));
    ProtocolConfig p = tiny_protocol(21);
    p.framework = f;
    p.method = Method::si;
    p.glad = f == Framework::supervised;
    const auto tasks = tiny_tasks(3, 21);
    const auto full = run_continual_pretraining(tasks, cfg, p);

    PretrainOptions first;
    first.stop_after = 1;
    const auto part = run_continual_pretraining(tasks, cfg, p, first);
    REQUIRE(part.size() == 1);
    CHECK(same_checkpoint(part[0], full[0]));

    const auto path = std::filesystem::temp_directory_path() / "glad_test_resume" / "task1.bin";
    part[0].save(path);
    PretrainOptions rest;
    rest.resume = Checkpoint::load(path);
    const auto tail = run_continual_pretraining(tasks, cfg, p, rest);
    REQUIRE(tail.size() == 2);
    CHECK(same_checkpoint(tail[0], full[1]));
    CHECK(same_checkpoint(tail[1], full[2]));
    std::filesystem::remove_all(path.parent_path());
  }
}

TEST_CASE("run directory layout") {
  const ViTConfig cfg = tiny_model();
  const ProtocolConfig p = tiny_protocol(2);
  const auto root = std::filesystem::temp_directory_path() / "glad_test_layout";
  std::filesystem::remove_all(root);
  PretrainOptions opts;
  opts.paths.root = root;
  run_continual_pretraining(tiny_tasks(2, 2), cfg, p, opts);
  for (const char* t : {"task1", "task2"}) {
    for (const char* f : {"checkpoint.bin", "metrics.csv", "attn_stats.csv"}) {
      CHECK(std::filesystem::exists(root / t / f));
    }
  }
  CHECK(Checkpoint::load(root / "task2" / "checkpoint.bin").tasks_completed == 2);
  std::filesystem::remove_all(root);
}

TEST_CASE("fine-tune, probe and transfer evaluation") {
  const ViTConfig cfg = tiny_model();
  const ProtocolConfig p = tiny_protocol(4);
  const auto tasks = tiny_tasks(3, 4);
  const TaskSequence pre(tasks.begin(), tasks.begin() + 2);
  const auto ckpts = run_continual_pretraining(pre, cfg, p);

  const auto ft = finetune_task(ckpts[1], tasks[2], cfg, p);
  CHECK(ft.accuracy >= 0.0);
  CHECK(ft.accuracy <= 1.0);
  // Same inputs, same result.
  CHECK(finetune_task(ckpts[1], tasks[2], cfg, p).accuracy == ft.accuracy);

  // The probe leaves the backbone untouched.
  ViTModel<float> probed = make_model(cfg, p);
  linear_probe(ckpts[1], tasks[0], cfg, p, &probed);
  CHECK(backbone_of(probed.export_arrays(kAllParams)) == backbone_of(ckpts[1].params));
  ViTModel<float> tuned = make_model(cfg, p);
  finetune_task(ckpts[1], tasks[0], cfg, p, &tuned);
  CHECK_FALSE(backbone_of(tuned.export_arrays(kAllParams)) == backbone_of(ckpts[1].params));

  const auto m = evaluate_acc_matrix(ckpts, pre, cfg, p, EvalProtocol::finetune);
  CHECK(m.cells().size() == 3);
  CHECK(m.has(1, 1));
  CHECK(m.has(1, 2));
  CHECK(m.has(2, 2));

  const auto curve = run_transfer_eval(ckpts, tasks[2], cfg, p);
  REQUIRE(curve.size() == 2);
  CHECK(curve[0].pretrain_tasks == 1);
  CHECK(curve[1].pretrain_tasks == 2);
  CHECK(curve[1].accuracy == ft.accuracy);
  CHECK(run_transfer_eval({ckpts[0]}, tasks[2], cfg, p).size() == 1);
  CHECK(code_of([&] { run_transfer_eval({}, tasks[2], cfg, p); }) == ErrorCode::DataMissing);

  ViTConfig wrong = cfg;
  wrong.num_classes = 3;
  CHECK(code_of([&] { finetune_task(ckpts[0], tasks[0], wrong, p); }) == ErrorCode::HeadShapeMismatch);
}

TEST_CASE("GLAD with unit adaptors and zero weight trains like plain MSA") {
  const ViTConfig cfg = tiny_model();
  ProtocolConfig plain = tiny_protocol(8);
  plain.pretrain_steps = 10;
  ProtocolConfig glad = plain;
  glad.glad = true;
  glad.glad_config.weight = 0.0;
  glad.glad_config.train_adaptor = false;
  const auto tasks = tiny_tasks(1, 8);
  const auto a = run_continual_pretraining(tasks, cfg, plain);
  const auto b = run_continual_pretraining(tasks, cfg, glad);
  const auto without_adaptors = [](const std::vector<NamedArray>& arrays) {
    std::vector<NamedArray> out;
    for (const auto& x : arrays) {
      if (x.name.rfind("adaptor.", 0) != 0) out.push_back(x);
    }
    return out;
  };
  CHECK(without_adaptors(a[0].params) == without_adaptors(b[0].params));
}
