#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glad/analytics.hpp"
#include "glad/checkpoint_io.hpp"
#include "glad/data.hpp"
#include "glad/objectives.hpp"
#include "glad/optim.hpp"
#include "glad/vit.hpp"

namespace glad {

enum class Framework { supervised, mim };
enum class Method { base, si };

const char* to_string(Framework f);
const char* to_string(Method m);

struct ProtocolConfig {
  Framework framework = Framework::supervised;
  Method method = Method::base;
  bool glad = false;
  GladConfig glad_config;

  // Budgets: epochs unless the matching *_steps override is nonzero.
  std::size_t pretrain_epochs_supervised = 60;
  std::size_t pretrain_epochs_mim = 100;
  std::size_t finetune_epochs = 30;
  std::size_t pretrain_steps = 0;
  std::size_t finetune_steps = 0;
  std::size_t probe_steps = 0;  // 0 = same budget as fine-tuning
  std::size_t batch_size = 128;

  // lr = eta * multiplier * batch / 512 for each phase.
  double eta = 2e-4;
  std::optional<double> pretrain_lr_multiplier;  // default by framework
  std::optional<double> finetune_lr_multiplier;
  double warmup_fraction = 0.05;
  double min_lr_ratio = 0.01;
  AdamWConfig adamw;

  double mask_rho = 0.4;  // probability a token stays visible
  MimOptions mim;

  double si_strength = 100.0;
  double si_damping = 0.1;

  double pretrain_fraction = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigConflict on inconsistent settings.
  void validate() const;
  double pretrain_multiplier() const;
  double finetune_multiplier() const;
};

// Everything needed to continue a continual-pre-training run after a task.
struct Checkpoint {
  std::vector<NamedArray> params;
  SiState<float> si;
  std::size_t tasks_completed = 0;
  RngState rng;

  std::vector<NamedArray> to_arrays() const;
  static Checkpoint from_arrays(const std::vector<NamedArray>& arrays);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

// acc(i, j): accuracy on task i with the backbone trained through task j
// (1-based task ids).
class AccMatrix {
 public:
  void set(std::size_t i, std::size_t j, double acc);
  double at(std::size_t i, std::size_t j) const;  // throws MissingEntry
  bool has(std::size_t i, std::size_t j) const { return cells_.count({i, j}) != 0; }
  const std::map<std::pair<std::size_t, std::size_t>, double>& cells() const { return cells_; }

 private:
  std::map<std::pair<std::size_t, std::size_t>, double> cells_;
};

// acc(t, T) - acc(t, t).
double backward_transfer(const AccMatrix& m, std::size_t t, std::size_t T);

struct BwtSummary {
  std::vector<double> per_task;  // t = 1 .. T-1
  double mean = 0.0;             // 0 when T < 2
};

BwtSummary backward_transfer_summary(const AccMatrix& m, std::size_t T);

struct RunPaths {
  std::filesystem::path root;  // run/<name>; empty disables file output
  std::filesystem::path task_dir(std::size_t t) const { return root / ("task" + std::to_string(t)); }
};

// Builds the float model a protocol trains: classifier for supervised runs,
// decoder for MIM, GLAD adaptors when enabled.
ViTModel<float> make_model(const ViTConfig& model, const ProtocolConfig& protocol);

struct PretrainOptions {
  RunPaths paths;
  std::optional<Checkpoint> resume;  // continue after resume->tasks_completed
  std::size_t stop_after = 0;        // tasks to finish in this call; 0 = all
  bool write_stats = true;
  // Observers for the model right after task setup and right after training.
  std::function<void(std::size_t task, const ViTModel<float>&)> on_task_start;
  std::function<void(std::size_t task, const ViTModel<float>&)> on_task_end;
};

// Continual training over `tasks`: for every task the backbone continues from the previous
// task, the classifier is freshly drawn, adaptors restart at ones, and a new
// optimizer is used. Returns one checkpoint per task trained in this call.
std::vector<Checkpoint> run_continual_pretraining(const TaskSequence& tasks, const ViTConfig& model,
                                                  const ProtocolConfig& protocol, const PretrainOptions& options = {});

struct EvalResult {
  double accuracy = 0.0;        // validation top-1
  double train_accuracy = 0.0;  // top-1 on the task's training set
};

double evaluate_accuracy(const ViTModel<float>& model, const Dataset& data, std::size_t batch_size = 128);

// Loads the backbone from `checkpoint`, attaches a fresh head and trains
// everything (adaptors too when GLAD is on) on the task with cross-entropy.
EvalResult finetune_task(const Checkpoint& checkpoint, const TaskSpec& task, const ViTConfig& model,
                         const ProtocolConfig& protocol, ViTModel<float>* trained = nullptr);

// Trains only a fresh head on frozen features.
EvalResult linear_probe(const Checkpoint& checkpoint, const TaskSpec& task, const ViTConfig& model,
                        const ProtocolConfig& protocol, ViTModel<float>* trained = nullptr);

enum class EvalProtocol { finetune, probe };

// Fills acc(i, j) for every checkpoint j and task i <= j.
AccMatrix evaluate_acc_matrix(const std::vector<Checkpoint>& checkpoints, const TaskSequence& tasks,
                              const ViTConfig& model, const ProtocolConfig& protocol, EvalProtocol which);

struct TransferPoint {
  std::size_t pretrain_tasks = 0;
  double accuracy = 0.0;
};

// Fine-tunes `held_out` from each checkpoint independently.
std::vector<TransferPoint> run_transfer_eval(const std::vector<Checkpoint>& checkpoints, const TaskSpec& held_out,
                                             const ViTConfig& model, const ProtocolConfig& protocol);

std::string format_transfer_csv(const std::vector<TransferPoint>& curve);
std::string format_acc_matrix_csv(const AccMatrix& m);
// Per-task acc(t, T) - acc(t, t) for t < T, then their mean.
std::string format_bwt_csv(const AccMatrix& m, std::size_t T);

}  // namespace glad
