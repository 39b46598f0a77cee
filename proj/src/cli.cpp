#include "glad/cli.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glad/config.hpp"

namespace glad {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::size_t> task;
  std::optional<std::string> checkpoint;
  std::optional<std::string> out;
};

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

fs::path data_dir(const RunConfig& c) { return fs::path(c.data.dir); }

TaskSequence load_tasks(const RunConfig& c) {
  const fs::path dir = data_dir(c);
  for (const char* f : {"train.glds", "val.glds"}) {
    if (!fs::exists(dir / f)) {
      throw Error(ErrorCode::DataMissing, (dir / f).string() + " not found; run gen-data first");
    }
  }
  auto tasks = make_task_sequence(load_dataset(dir / "train.glds"), load_dataset(dir / "val.glds"), c.data.tasks);
  return tasks;
}

TaskSequence pretrain_tasks(const TaskSequence& all, const RunConfig& c) {
  return TaskSequence(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(c.pretrain_task_count()));
}

// Checkpoints to evaluate: the one named on the command line, otherwise every
// task{j}/checkpoint.bin the pretrain step left behind.
std::vector<Checkpoint> load_checkpoints(const RunConfig& c, const Options& o) {
  std::vector<Checkpoint> out;
  if (o.checkpoint) {
    out.push_back(Checkpoint::load(*o.checkpoint));
    return out;
  }
  const RunPaths paths{c.run_dir()};
  for (std::size_t j = 1; j <= c.pretrain_task_count(); ++j) {
    const fs::path p = paths.task_dir(j) / "checkpoint.bin";
    if (fs::exists(p)) out.push_back(Checkpoint::load(p));
  }
  if (out.empty()) throw Error(ErrorCode::DataMissing, "no checkpoints under " + c.run_dir().string());
  return out;
}

std::size_t checked_task(const Options& o, std::size_t limit) {
  if (*o.task < 1 || *o.task > limit) {
    throw Error(ErrorCode::ConfigConflict, "--task must be in 1.." + std::to_string(limit));
  }
  return *o.task;
}

int cmd_gen_data(const RunConfig& c) {
  const auto data = generate_synthetic_datasets(c.data.synthetic);
  const fs::path dir = data_dir(c);
  save_dataset(data.train, dir / "train.glds");
  save_dataset(data.val, dir / "val.glds");
  std::fprintf(stderr, "wrote %zu train / %zu val images to %s\n", data.train.size(), data.val.size(),
               dir.string().c_str());
  return 0;
}

int cmd_pretrain(const RunConfig& c, const Options& o) {
  const TaskSequence tasks = pretrain_tasks(load_tasks(c), c);
  PretrainOptions opts;
  opts.paths.root = c.run_dir();
  std::size_t first = 1;
  if (o.checkpoint) {
    opts.resume = Checkpoint::load(*o.checkpoint);
    first = opts.resume->tasks_completed + 1;
    if (first > tasks.size()) {
      throw Error(ErrorCode::ConfigConflict, "checkpoint already covers every pre-training task");
    }
  }
  if (o.task) {
    const std::size_t through = checked_task(o, tasks.size());
    if (through < first) throw Error(ErrorCode::ConfigConflict, "--task precedes the resumed checkpoint");
    opts.stop_after = through - first + 1;
  }
  opts.on_task_end = [](std::size_t t, const ViTModel<float>&) { std::fprintf(stderr, "task %zu trained\n", t); };
  run_continual_pretraining(tasks, c.model, c.protocol, opts);
  return 0;
}

int cmd_evaluate(const RunConfig& c, const Options& o, EvalProtocol which) {
  const TaskSequence tasks = pretrain_tasks(load_tasks(c), c);
  const auto checkpoints = load_checkpoints(c, o);
  const fs::path dir = c.run_dir() / (which == EvalProtocol::finetune ? "finetune" : "probe");
  auto run = [&](const Checkpoint& ckpt, const TaskSpec& task) {
    return which == EvalProtocol::finetune ? finetune_task(ckpt, task, c.model, c.protocol)
                                           : linear_probe(ckpt, task, c.model, c.protocol);
  };

  if (o.task) {
    const std::size_t t = checked_task(o, tasks.size());
    std::string csv = "trained_through,accuracy,train_accuracy\n";
    char buf[96];
    for (const auto& ckpt : checkpoints) {
      if (ckpt.tasks_completed < t) continue;
      const EvalResult r = run(ckpt, tasks[t - 1]);
      std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g\n", ckpt.tasks_completed, r.accuracy, r.train_accuracy);
      csv += buf;
    }
    write_text(dir / ("task" + std::to_string(t) + ".csv"), csv);
    return 0;
  }

  const AccMatrix m = evaluate_acc_matrix(checkpoints, tasks, c.model, c.protocol, which);
  std::size_t T = 0;
  for (const auto& ckpt : checkpoints) T = std::max(T, ckpt.tasks_completed);
  write_text(dir / "acc_matrix.csv", format_acc_matrix_csv(m));
  // BWT needs the diagonal, which only exists when every checkpoint is present.
  bool full = true;
  for (std::size_t t = 1; t <= T; ++t) full = full && m.has(t, t) && m.has(t, T);
  if (full) write_text(dir / "bwt.csv", format_bwt_csv(m, T));
  return 0;
}

int cmd_analyze(const RunConfig& c, const Options& o) {
  const TaskSequence tasks = load_tasks(c);
  const auto checkpoints = load_checkpoints(c, o);
  std::vector<std::size_t> which;
  if (o.task) {
    which.push_back(checked_task(o, tasks.size()));
  } else {
    for (std::size_t t = 1; t <= tasks.size(); ++t) which.push_back(t);
  }
  ViTModel<float> model = make_model(c.model, c.protocol);
  for (std::size_t t : which) {
    const std::string dataset = "task" + std::to_string(t) + "-val";
    std::vector<LayerStats> stats;
    for (const auto& ckpt : checkpoints) {
      model.import_arrays(ckpt.params, kBackbone);
      model.reset_adaptors();
      auto s = collect_layer_stats(model, tasks[t - 1].val.all_images(), "task" + std::to_string(ckpt.tasks_completed),
                                   dataset);
      stats.insert(stats.end(), s.begin(), s.end());
    }
    emit_stats_csv(stats, c.run_dir() / "analysis" / ("attn_stats_" + dataset + ".csv"));
  }
  return 0;
}

int cmd_transfer_curve(const RunConfig& c, const Options& o) {
  const TaskSequence tasks = load_tasks(c);
  const auto checkpoints = load_checkpoints(c, o);
  const auto curve = run_transfer_eval(checkpoints, tasks.back(), c.model, c.protocol);
  write_text(c.run_dir() / "transfer_curve.csv", format_transfer_csv(curve));
  return 0;
}

bool is_config_error(const Error& e) {
  return e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::ConfigConflict;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"GLAD continual pre-training experiments"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"gen-data", "Generate the synthetic train/val datasets"},
      {"pretrain", "Continual pre-training over the non-held-out tasks"},
      {"finetune", "Fine-tune every checkpoint on the tasks it has seen"},
      {"probe", "Linear probe every checkpoint on the tasks it has seen"},
      {"analyze", "Attention distance and entropy statistics"},
      {"transfer-curve", "Fine-tune each checkpoint on the held-out task"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "Run config (JSON)")->required();
    sub->add_option("--task", o.task, "Task id (1-based)");
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    sub->add_option("--out", o.out, "Output directory override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  RunConfig c;
  try {
    c = load_run_config(o.config);
    if (o.out) {
      if (cmd == "gen-data") {
        c.data.dir = *o.out;
      } else {
        c.output_dir = *o.out;
      }
    }
    write_text(c.run_dir() / "config.resolved.json", resolved_config_json(c));
  } catch (const ConfigKeyError& e) {
    std::fprintf(stderr, "config error at '%s': %s\n", e.key().c_str(), e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return is_config_error(e) ? 2 : 1;
  }

  try {
    if (cmd == "gen-data") return cmd_gen_data(c);
    if (cmd == "pretrain") return cmd_pretrain(c, o);
    if (cmd == "finetune") return cmd_evaluate(c, o, EvalProtocol::finetune);
    if (cmd == "probe") return cmd_evaluate(c, o, EvalProtocol::probe);
    if (cmd == "analyze") return cmd_analyze(c, o);
    return cmd_transfer_curve(c, o);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return is_config_error(e) ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace glad
