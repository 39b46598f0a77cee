#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "glad/checkpoint_io.hpp"
#include "glad/cli.hpp"
#include "glad/config.hpp"

using namespace glad;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoFailure;
}

std::string key_of(const std::string& json) {
  try {
    parse_run_config(json);
  } catch (const ConfigKeyError& e) {
    return e.key();
  }
  return "";
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "glad");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::string tiny_config(const fs::path& root) {
  return R"({
  "name": "tiny",
  "seed": 5,
  "output_dir": ")" + (root / "run").string() + R"(",
  "model": {"image_size": 8, "patch_size": 4, "embed_dim": 16, "depth": 2, "heads": 4, "mlp_ratio": 2, "num_classes": 2},
  "protocol": {"pretrain_steps": 3, "finetune_steps": 2, "batch_size": 4, "eta": 4e-3, "method": "si"},
  "glad": {"enabled": true},
  "data": {"dir": ")" + (root / "data").string() + R"(", "tasks": 3, "held_out": 1,
           "synthetic": {"classes_per_task": 2, "train_per_class": 4, "val_per_class": 2}}
})";
}

}  // namespace

TEST_CASE("empty config resolves to the defaults") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.name == "desk");
  CHECK(c.model.embed_dim == 64);
  CHECK(c.protocol.eta == 2e-4);
  CHECK(c.protocol.si_strength == 100.0);
  CHECK(c.protocol.mask_rho == 0.4);
  CHECK(c.data.tasks == 5);
  CHECK(c.data.held_out == 1);
  CHECK(c.pretrain_task_count() == 4);
  CHECK(c.run_dir() == fs::path("run") / "desk");

  const std::string resolved = resolved_config_json(c);
  CHECK(resolved_config_json(parse_run_config(resolved)) == resolved);
  CHECK(resolved.find("\"pretrain_lr_multiplier\": 1.0") != std::string::npos);
}

TEST_CASE("config values land in the right fields") {
  const RunConfig c = parse_run_config(R"({
    "seed": 9,
    "model": {"depth": 2},
    "protocol": {"framework": "mim", "method": "si", "adamw": {"weight_decay": 0.1}, "si": {"strength": 5}},
    "mim": {"mask_rho": 0.25},
    "data": {"pretrain_fraction": 0.5, "synthetic": {"noise": 0}}
  })");
  CHECK(c.seed == 9);
  CHECK(c.protocol.seed == 9);
  CHECK(c.data.synthetic.seed == 9);
  CHECK(c.model.depth == 2);
  CHECK(c.protocol.framework == Framework::mim);
  CHECK(c.protocol.method == Method::si);
  CHECK(c.protocol.adamw.weight_decay == 0.1);
  CHECK(c.protocol.si_strength == 5.0);
  CHECK(c.protocol.mask_rho == 0.25);
  CHECK(c.protocol.pretrain_fraction == 0.5);
  CHECK(c.data.synthetic.noise == 0.0);
  CHECK(c.protocol.pretrain_multiplier() == 5.0);

  CHECK(parse_run_config(R"({"seed": 9, "data": {"synthetic": {"seed": 4}}})").data.synthetic.seed == 4);
  CHECK_FALSE(parse_run_config(R"({"protocol": {"pretrain_lr_multiplier": null}})").protocol.pretrain_lr_multiplier);
  CHECK(*parse_run_config(R"({"protocol": {"pretrain_lr_multiplier": 3}})").protocol.pretrain_lr_multiplier == 3.0);
}

TEST_CASE("strict parsing names the offending key") {
  CHECK(key_of(R"({"bogus": 1})") == "bogus");
  CHECK(key_of(R"({"model": {"depthh": 3}})") == "model.depthh");
  CHECK(key_of(R"({"protocol": {"adamw": {"beta3": 0.5}}})") == "protocol.adamw.beta3");
  CHECK(key_of(R"({"data": {"synthetic": {"colour": 1}}})") == "data.synthetic.colour");
  CHECK(key_of(R"({"model": {"depth": "four"}})") == "model.depth");
  CHECK(key_of(R"({"model": {"depth": -1}})") == "model.depth");
  CHECK(key_of(R"({"protocol": {"eta": "fast"}})") == "protocol.eta");
  CHECK(key_of(R"({"protocol": {"framework": "mae"}})") == "protocol.framework");
  CHECK(key_of(R"({"glad": {"regularized_path": "both"}})") == "glad.regularized_path");
  CHECK(key_of(R"({"glad": 1})") == "glad");
  CHECK(key_of(R"([1, 2])") == "<root>");
  CHECK(code_of([] { parse_run_config("{"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_run_config(R"({"protocol": {"framework": "mim"}, "glad": {"enabled": true}})"); }) ==
        ErrorCode::ConfigConflict);
  CHECK(code_of([] { parse_run_config(R"({"data": {"held_out": 5}})"); }) == ErrorCode::ConfigConflict);
  CHECK(code_of([] { parse_run_config(R"({"model": {"num_classes": 4}})"); }) == ErrorCode::ConfigConflict);
  CHECK(code_of([] { load_run_config("/nonexistent/config.json"); }) == ErrorCode::ConfigError);
}

TEST_CASE("cli exit codes") {
  const fs::path root = fs::temp_directory_path() / "glad_test_cli_codes";
  fs::remove_all(root);
  write(root / "bad.json", R"({"model": {"depthh": 3}})");
  CHECK(run({"pretrain", "--config", (root / "bad.json").string()}) == 2);
  CHECK(run({"pretrain", "--config", (root / "missing.json").string()}) == 2);
  CHECK(run({"pretrain"}) == 2);
  CHECK(run({}) == 2);
  CHECK(run({"train", "--config", "x"}) == 2);
  CHECK(run({"--help"}) == 0);

  // A valid config without data is a runtime failure.
  write(root / "ok.json", tiny_config(root));
  CHECK(run({"pretrain", "--config", (root / "ok.json").string()}) == 1);
  CHECK(fs::exists(root / "run" / "tiny" / "config.resolved.json"));
  CHECK(run({"gen-data", "--config", (root / "ok.json").string()}) == 0);
  CHECK(run({"pretrain", "--config", (root / "ok.json").string(), "--task", "9"}) == 2);
  fs::remove_all(root);
}

TEST_CASE("cli pipeline is complete and reproducible") {
  const fs::path root = fs::temp_directory_path() / "glad_test_cli_pipeline";
  fs::remove_all(root);
  const fs::path cfg = root / "tiny.json";
  write(cfg, tiny_config(root));
  const std::string c = cfg.string();
  const fs::path run_dir = root / "run" / "tiny";

  REQUIRE(run({"gen-data", "--config", c}) == 0);
  const auto train_bytes = read_file_bytes(root / "data" / "train.glds");
  REQUIRE(run({"pretrain", "--config", c}) == 0);
  REQUIRE(run({"finetune", "--config", c}) == 0);
  REQUIRE(run({"probe", "--config", c}) == 0);
  REQUIRE(run({"analyze", "--config", c}) == 0);
  REQUIRE(run({"transfer-curve", "--config", c}) == 0);
  CHECK(read_file_bytes(root / "data" / "train.glds") == train_bytes);

  for (const char* f : {"config.resolved.json", "task1/checkpoint.bin", "task2/checkpoint.bin", "task2/metrics.csv",
                        "finetune/acc_matrix.csv", "finetune/bwt.csv", "probe/acc_matrix.csv", "probe/bwt.csv",
                        "analysis/attn_stats_task1-val.csv", "analysis/attn_stats_task3-val.csv",
                        "transfer_curve.csv"}) {
    CHECK_MESSAGE(fs::exists(run_dir / f), f);
  }
  CHECK_FALSE(fs::exists(run_dir / "task3"));

  // The resolved config alone reproduces the run.
  const auto first = read_file_bytes(run_dir / "task2" / "checkpoint.bin");
  const fs::path replay = root / "replay.json";
  fs::copy_file(run_dir / "config.resolved.json", replay);
  REQUIRE(run({"pretrain", "--config", replay.string()}) == 0);
  CHECK(read_file_bytes(run_dir / "task2" / "checkpoint.bin") == first);

  // Interrupt after task 1 into another directory, then resume.
  const fs::path other = root / "other";
  REQUIRE(run({"pretrain", "--config", c, "--task", "1", "--out", other.string()}) == 0);
  CHECK_FALSE(fs::exists(other / "tiny" / "task2"));
  REQUIRE(run({"pretrain", "--config", c, "--checkpoint", (other / "tiny" / "task1" / "checkpoint.bin").string(),
               "--out", other.string()}) == 0);
  CHECK(read_file_bytes(other / "tiny" / "task2" / "checkpoint.bin") == first);

  // Single-task fine-tune writes one row per checkpoint that has seen the task.
  REQUIRE(run({"finetune", "--config", c, "--task", "2"}) == 0);
  const auto rows = read_file_bytes(run_dir / "finetune" / "task2.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 2);
  fs::remove_all(root);
}
