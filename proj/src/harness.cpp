#include "glad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "glad/ops.hpp"
#include "glad/rng.hpp"

namespace glad {

const char* to_string(Framework f) { return f == Framework::supervised ? "supervised" : "mim"; }
const char* to_string(Method m) { return m == Method::base ? "base" : "si"; }

void ProtocolConfig::validate() const {
  auto conflict = [](const std::string& what) { throw Error(ErrorCode::ConfigConflict, what); };
  if (framework == Framework::mim && glad) {
    conflict("glad needs a labeled classifier phase; it cannot run with the mim framework");
  }
  glad_config.validate();
  if (batch_size == 0) conflict("batch_size must be positive");
  if (!(mask_rho >= 0.0 && mask_rho < 1.0)) conflict("mask_rho must lie in [0, 1) so some tokens are masked");
  if (!(pretrain_fraction > 0.0 && pretrain_fraction <= 1.0)) conflict("pretrain_fraction must lie in (0, 1]");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) conflict("warmup_fraction must lie in [0, 1]");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) conflict("min_lr_ratio must lie in [0, 1]");
  if (!(eta > 0.0)) conflict("eta must be positive");
}

double ProtocolConfig::pretrain_multiplier() const {
  if (pretrain_lr_multiplier) return *pretrain_lr_multiplier;
  return framework == Framework::mim ? 5.0 : 1.0;
}

double ProtocolConfig::finetune_multiplier() const {
  if (finetune_lr_multiplier) return *finetune_lr_multiplier;
  return framework == Framework::mim ? 5.0 : 0.5;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kSiOmega = "si.omega.";
constexpr const char* kSiReference = "si.reference.";
constexpr const char* kSiImportance = "si.importance.";
constexpr const char* kMetaTasks = "meta.tasks_completed";
constexpr const char* kMetaRng = "meta.rng";

// f32 holds 16-bit integers exactly.
void push_u64(std::vector<float>& out, std::uint64_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<float>((v >> (16 * k)) & 0xffffu));
}

std::uint64_t pop_u64(const std::vector<float>& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint64_t>(in.at(at + k)) << (16 * k);
  return v;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

std::vector<NamedArray> Checkpoint::to_arrays() const {
  std::vector<NamedArray> out = params;
  std::map<std::string, Shape> shapes;
  for (const auto& p : params) shapes[p.name] = p.shape;
  for (const auto& e : si.entries) {
    const Shape shape = shapes.count(e.name) ? shapes[e.name] : Shape{e.omega.size()};
    out.push_back({kSiOmega + e.name, shape, e.omega});
    out.push_back({kSiReference + e.name, shape, e.reference});
    out.push_back({kSiImportance + e.name, shape, e.importance});
  }
  out.push_back({kMetaTasks, {1}, {static_cast<float>(tasks_completed)}});
  NamedArray rng_entry{kMetaRng, {8}, {}};
  push_u64(rng_entry.values, rng.key);
  push_u64(rng_entry.values, rng.counter);
  out.push_back(std::move(rng_entry));
  return out;
}

Checkpoint Checkpoint::from_arrays(const std::vector<NamedArray>& arrays) {
  Checkpoint c;
  std::map<std::string, SiEntry<float>> si;
  std::vector<std::string> si_order;
  bool saw_meta = false;
  for (const auto& a : arrays) {
    if (starts_with(a.name, kSiOmega)) {
      const std::string name = a.name.substr(std::string(kSiOmega).size());
      si_order.push_back(name);
      si[name].name = name;
      si[name].omega = a.values;
    } else if (starts_with(a.name, kSiReference)) {
      si[a.name.substr(std::string(kSiReference).size())].reference = a.values;
    } else if (starts_with(a.name, kSiImportance)) {
      si[a.name.substr(std::string(kSiImportance).size())].importance = a.values;
    } else if (a.name == kMetaTasks) {
      c.tasks_completed = static_cast<std::size_t>(a.values.at(0));
      saw_meta = true;
    } else if (a.name == kMetaRng) {
      c.rng = {pop_u64(a.values, 0), pop_u64(a.values, 4)};
    } else {
      c.params.push_back(a);
    }
  }
  if (!saw_meta) throw Error(ErrorCode::MissingEntry, std::string("checkpoint lacks ") + kMetaTasks);
  for (const auto& name : si_order) {
    const auto& e = si[name];
    if (e.reference.size() != e.omega.size() || e.importance.size() != e.omega.size()) {
      throw Error(ErrorCode::MissingEntry, "incomplete SI state for " + name);
    }
    c.si.entries.push_back(e);
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const { save_checkpoint_file(path, to_arrays()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return from_arrays(load_checkpoint_file(path));
}

// ---------------------------------------------------------------------------
// Backward transfer

void AccMatrix::set(std::size_t i, std::size_t j, double acc) { cells_[{i, j}] = acc; }

double AccMatrix::at(std::size_t i, std::size_t j) const {
  auto it = cells_.find({i, j});
  if (it == cells_.end()) {
    throw Error(ErrorCode::MissingEntry, "acc(" + std::to_string(i) + ", " + std::to_string(j) + ") is missing");
  }
  return it->second;
}

double backward_transfer(const AccMatrix& m, std::size_t t, std::size_t T) { return m.at(t, T) - m.at(t, t); }

BwtSummary backward_transfer_summary(const AccMatrix& m, std::size_t T) {
  BwtSummary s;
  for (std::size_t t = 1; t < T; ++t) s.per_task.push_back(backward_transfer(m, t, T));
  if (!s.per_task.empty()) {
    double total = 0.0;
    for (double v : s.per_task) total += v;
    s.mean = total / static_cast<double>(s.per_task.size());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Training machinery

namespace {

ViTModel<float> build_model(ViTConfig cfg, HeadKind head, bool glad, std::uint64_t seed) {
  cfg.head_kind = head;
  cfg.glad = glad;
  return ViTModel<float>(cfg, CounterRng(seed, "init"));
}

std::string task_label(std::size_t t) { return "task" + std::to_string(t); }

// Cycles through shuffled epochs of `pool`, dropping each epoch's remainder.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, std::size_t batch, CounterRng rng)
      : pool_(std::move(pool)), batch_(std::min(batch, pool_.size())), rng_(rng) {}

  std::vector<std::size_t> next() {
    if (pos_ == 0 || pos_ + batch_ > pool_.size()) {
      rng_.shuffle(pool_.begin(), pool_.end());
      pos_ = 0;
    }
    std::vector<std::size_t> out(pool_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 pool_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

  std::size_t batches_per_epoch() const { return std::max<std::size_t>(1, pool_.size() / std::max<std::size_t>(1, batch_)); }
  const CounterRng& rng() const { return rng_; }

 private:
  std::vector<std::size_t> pool_;
  std::size_t batch_;
  CounterRng rng_;
  std::size_t pos_ = 0;
};

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<std::size_t> batch_labels(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.labels[i]);
  return out;
}

LrSchedule make_schedule(double lr, std::size_t steps, const ProtocolConfig& p) {
  const auto warmup = static_cast<std::size_t>(std::llround(p.warmup_fraction * static_cast<double>(steps)));
  return {lr, warmup, steps, lr * p.min_lr_ratio};
}

struct StepContext {
  std::vector<ParamRef<float>>& params;
  OptimizerState<float>& optimizer;
  const LrSchedule& schedule;
  SiState<float>* si = nullptr;
  std::vector<ParamRef<float>>* si_params = nullptr;
};

// One optimizer update: backward through `loss_fn`, AdamW at lr(step + 1),
// and the SI path-integral update from the realized parameter change.
template <typename LossFn>
LossTerms train_step(StepContext& ctx, std::size_t step, LossFn&& loss_fn) {
  zero_grads<float>(ctx.params);
  LossTerms terms;
  {
    Tape<float> tape;
    Tensor<float> total = loss_fn(terms);
    tape.backward(total);
  }
  std::vector<std::vector<float>> grads, before;
  if (ctx.si != nullptr) {
    for (const auto& p : *ctx.si_params) {
      grads.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
      before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
  }
  adamw_step<float>(ctx.params, ctx.optimizer, lr_at(ctx.schedule, step + 1));
  if (ctx.si != nullptr) {
    for (std::size_t k = 0; k < before.size(); ++k) {
      const auto now = (*ctx.si_params)[k].tensor.data();
      for (std::size_t i = 0; i < now.size(); ++i) before[k][i] = now[i] - before[k][i];
    }
    si_accumulate(*ctx.si, grads, before);
  }
  return terms;
}

std::size_t budget(std::size_t steps, std::size_t epochs, std::size_t batches_per_epoch) {
  return steps > 0 ? steps : epochs * batches_per_epoch;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<std::size_t> argmax_rows(const Tensor<float>& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (logits[r * c + k] > logits[r * c + best]) best = k;
    }
    out[r] = best;
  }
  return out;
}

Tensor<float> features_of(const ViTModel<float>& model, const Dataset& ds, std::size_t batch) {
  const std::size_t n = ds.size(), d = model.config().embed_dim;
  std::vector<float> out(n * d);
  for (std::size_t start = 0; start < n; start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + batch); ++i) idx.push_back(i);
    const auto f = model.forward(ds.images(idx), ForwardMode::features).output;
    std::copy(f.data().begin(), f.data().end(), out.begin() + static_cast<std::ptrdiff_t>(start * d));
  }
  return Tensor<float>({n, d}, std::move(out));
}

double head_accuracy(const Linear<float>& head, const Tensor<float>& features, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  const auto pred = argmax_rows(head(features));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

void require_labels(const TaskSpec& task) {
  if (!task.train.has_labels || !task.val.has_labels) {
    throw Error(ErrorCode::DataMissing, "task " + std::to_string(task.id) + " has no labels");
  }
  if (task.train.size() == 0) throw Error(ErrorCode::DataMissing, "task " + std::to_string(task.id) + " has no training images");
  if (task.val.size() == 0) throw Error(ErrorCode::DataMissing, "task " + std::to_string(task.id) + " has no validation images");
}

void check_head_shape(const TaskSpec& task, const ViTConfig& cfg) {
  if (task.train.num_classes != cfg.num_classes) {
    throw Error(ErrorCode::HeadShapeMismatch, "task " + std::to_string(task.id) + " has " +
                                                  std::to_string(task.train.num_classes) +
                                                  " classes but model.num_classes is " +
                                                  std::to_string(cfg.num_classes));
  }
}

}  // namespace

ViTModel<float> make_model(const ViTConfig& model, const ProtocolConfig& protocol) {
  const HeadKind head = protocol.framework == Framework::mim ? HeadKind::mim_decoder : HeadKind::classifier;
  return build_model(model, head, protocol.glad, protocol.seed);
}

double evaluate_accuracy(const ViTModel<float>& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const auto pred = argmax_rows(model.forward(data.images(idx), ForwardMode::classify).output);
    for (std::size_t k = 0; k < idx.size(); ++k) hits += pred[k] == data.labels[idx[k]];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<Checkpoint> run_continual_pretraining(const TaskSequence& tasks, const ViTConfig& model_cfg,
                                                  const ProtocolConfig& protocol, const PretrainOptions& options) {
  protocol.validate();
  if (tasks.empty()) throw Error(ErrorCode::DataMissing, "no pre-training tasks");
  const bool mim = protocol.framework == Framework::mim;
  const bool use_si = protocol.method == Method::si;
  const unsigned head_group = mim ? kDecoder : kClassifier;

  ViTModel<float> model = make_model(model_cfg, protocol);
  const CounterRng init(protocol.seed, "init");
  SiState<float> si;
  si.strength = protocol.si_strength;
  si.damping = protocol.si_damping;
  std::size_t first = 1;
  if (options.resume) {
    model.import_arrays(options.resume->params, kBackbone | (mim ? kDecoder : 0u));
    si.entries = options.resume->si.entries;
    first = options.resume->tasks_completed + 1;
  }
  std::size_t last = tasks.size();
  if (options.stop_after > 0) last = std::min(last, first + options.stop_after - 1);

  std::vector<Checkpoint> out;
  for (std::size_t t = first; t <= last; ++t) {
    const TaskSpec& task = tasks[t - 1];
    if (task.train.size() == 0) throw Error(ErrorCode::DataMissing, "task " + std::to_string(t) + " has no training images");
    if (!mim) {
      require_labels(task);
      check_head_shape(task, model_cfg);
      model.reset_classifier(task.train.num_classes, init.derive(task_label(t)));
    }
    model.reset_adaptors();
    auto backbone = model.parameters(kBackbone);
    if (use_si && si.empty()) si.reset(backbone);

    unsigned groups = kBackbone | head_group;
    if (protocol.glad && protocol.glad_config.train_adaptor) groups |= kAdaptor;
    auto params = model.parameters(groups);
    OptimizerState<float> optimizer(protocol.adamw);

    std::vector<std::size_t> pool = iota_indices(task.train.size());
    if (protocol.pretrain_fraction < 1.0) {
      CounterRng pick = CounterRng(protocol.seed, "subset").derive(task_label(t));
      pick.shuffle(pool.begin(), pool.end());
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(protocol.pretrain_fraction * static_cast<double>(pool.size()))));
      pool.resize(keep);
      std::sort(pool.begin(), pool.end());
    }
    BatchSampler sampler(pool, protocol.batch_size, CounterRng(protocol.seed, "data").derive(task_label(t)));
    CounterRng mask_rng = CounterRng(protocol.seed, "mask").derive(task_label(t));
    const std::size_t steps =
        budget(protocol.pretrain_steps, mim ? protocol.pretrain_epochs_mim : protocol.pretrain_epochs_supervised,
               sampler.batches_per_epoch());
    const double lr = scaled_lr(protocol.eta, protocol.pretrain_multiplier(), protocol.batch_size);
    const LrSchedule schedule = make_schedule(lr, steps, protocol);
    StepContext ctx{params, optimizer, schedule, use_si ? &si : nullptr, use_si ? &backbone : nullptr};

    if (options.on_task_start) options.on_task_start(t, model);

    std::ostringstream log;
    write_loss_log_header(log);
    const std::size_t K = model_cfg.tokens();
    for (std::size_t s = 0; s < steps; ++s) {
      const auto idx = sampler.next();
      const Tensor<float> images = task.train.images(idx);
      LossTerms terms = train_step(ctx, s, [&](LossTerms& out_terms) {
        Tensor<float> task_loss;
        std::optional<Tensor<float>> glad_term, si_term;
        if (mim) {
          std::vector<std::uint8_t> visible;
          do {
            visible = sample_mask(idx.size() * K, protocol.mask_rho, mask_rng);
          } while (std::find(visible.begin(), visible.end(), 0) == visible.end());
          task_loss = mim_loss(model, images, visible, protocol.mim).loss;
        } else {
          const auto labels = batch_labels(task.train, idx);
          auto r = ce_loss(model, images, labels);
          task_loss = r.loss;
          if (protocol.glad) {
            glad_term = scale(glad_regularizer(r.attention, protocol.glad_config),
                              static_cast<float>(protocol.glad_config.weight));
          }
        }
        if (use_si) si_term = si_penalty<float>(si, backbone);
        return total_loss(task_loss, glad_term, si_term, &out_terms);
      });
      write_loss_log_row(log, s, terms);
    }
    if (use_si) si_consolidate<float>(si, backbone);
    if (options.on_task_end) options.on_task_end(t, model);

    Checkpoint ckpt;
    ckpt.params = model.export_arrays(kAllParams);
    ckpt.si = si;
    ckpt.tasks_completed = t;
    ckpt.rng = sampler.rng().state();
    if (!options.paths.root.empty()) {
      const auto dir = options.paths.task_dir(t);
      ckpt.save(dir / "checkpoint.bin");
      write_text(dir / "metrics.csv", log.str());
      if (options.write_stats) {
        const auto stats = collect_layer_stats(model, task.val.all_images(), task_label(t), task_label(t) + "-val");
        emit_stats_csv(stats, dir / "attn_stats.csv");
      }
    }
    out.push_back(std::move(ckpt));
  }
  return out;
}

EvalResult finetune_task(const Checkpoint& checkpoint, const TaskSpec& task, const ViTConfig& model_cfg,
                         const ProtocolConfig& protocol, ViTModel<float>* trained) {
  protocol.validate();
  require_labels(task);
  check_head_shape(task, model_cfg);
  ViTModel<float> model = build_model(model_cfg, HeadKind::classifier, protocol.glad, protocol.seed);
  model.import_arrays(checkpoint.params, kBackbone);
  model.reset_classifier(task.train.num_classes, CounterRng(protocol.seed, "head").derive(task_label(task.id)));
  model.reset_adaptors();

  unsigned groups = kBackbone | kClassifier;
  if (protocol.glad) groups |= kAdaptor;
  auto params = model.parameters(groups);
  OptimizerState<float> optimizer(protocol.adamw);
  BatchSampler sampler(iota_indices(task.train.size()), protocol.batch_size,
                       CounterRng(protocol.seed, "finetune").derive(task_label(task.id)));
  const std::size_t steps = budget(protocol.finetune_steps, protocol.finetune_epochs, sampler.batches_per_epoch());
  const LrSchedule schedule =
      make_schedule(scaled_lr(protocol.eta, protocol.finetune_multiplier(), protocol.batch_size), steps, protocol);
  StepContext ctx{params, optimizer, schedule};
  for (std::size_t s = 0; s < steps; ++s) {
    const auto idx = sampler.next();
    const Tensor<float> images = task.train.images(idx);
    const auto labels = batch_labels(task.train, idx);
    train_step(ctx, s, [&](LossTerms& terms) {
      return total_loss<float>(ce_loss(model, images, labels).loss, std::nullopt, std::nullopt, &terms);
    });
  }
  EvalResult r{evaluate_accuracy(model, task.val), evaluate_accuracy(model, task.train)};
  if (trained != nullptr) *trained = std::move(model);
  return r;
}

EvalResult linear_probe(const Checkpoint& checkpoint, const TaskSpec& task, const ViTConfig& model_cfg,
                        const ProtocolConfig& protocol, ViTModel<float>* trained) {
  protocol.validate();
  require_labels(task);
  check_head_shape(task, model_cfg);
  ViTModel<float> model = build_model(model_cfg, HeadKind::classifier, protocol.glad, protocol.seed);
  model.import_arrays(checkpoint.params, kBackbone);
  model.reset_classifier(task.train.num_classes, CounterRng(protocol.seed, "head").derive(task_label(task.id)));
  model.reset_adaptors();

  const Tensor<float> train_features = features_of(model, task.train, 128);
  auto params = model.parameters(kClassifier);
  Linear<float>& head = model.classifier();
  OptimizerState<float> optimizer(protocol.adamw);
  BatchSampler sampler(iota_indices(task.train.size()), protocol.batch_size,
                       CounterRng(protocol.seed, "finetune").derive(task_label(task.id)));
  const std::size_t ft_steps = budget(protocol.finetune_steps, protocol.finetune_epochs, sampler.batches_per_epoch());
  const std::size_t steps = protocol.probe_steps > 0 ? protocol.probe_steps : ft_steps;
  const LrSchedule schedule =
      make_schedule(scaled_lr(protocol.eta, protocol.finetune_multiplier(), protocol.batch_size), steps, protocol);
  StepContext ctx{params, optimizer, schedule};
  for (std::size_t s = 0; s < steps; ++s) {
    const auto idx = sampler.next();
    const auto labels = batch_labels(task.train, idx);
    train_step(ctx, s, [&](LossTerms& terms) {
      const auto logits = head(gather_rows(train_features, idx));
      return total_loss<float>(cross_entropy(logits, labels), std::nullopt, std::nullopt, &terms);
    });
  }
  EvalResult r{head_accuracy(head, features_of(model, task.val, 128), task.val),
               head_accuracy(head, train_features, task.train)};
  if (trained != nullptr) *trained = std::move(model);
  return r;
}

AccMatrix evaluate_acc_matrix(const std::vector<Checkpoint>& checkpoints, const TaskSequence& tasks,
                              const ViTConfig& model, const ProtocolConfig& protocol, EvalProtocol which) {
  AccMatrix m;
  for (const auto& ckpt : checkpoints) {
    const std::size_t j = ckpt.tasks_completed;
    for (std::size_t i = 1; i <= j && i <= tasks.size(); ++i) {
      const auto r = which == EvalProtocol::finetune ? finetune_task(ckpt, tasks[i - 1], model, protocol)
                                                     : linear_probe(ckpt, tasks[i - 1], model, protocol);
      m.set(i, j, r.accuracy);
    }
  }
  return m;
}

std::vector<TransferPoint> run_transfer_eval(const std::vector<Checkpoint>& checkpoints, const TaskSpec& held_out,
                                             const ViTConfig& model, const ProtocolConfig& protocol) {
  if (checkpoints.empty()) throw Error(ErrorCode::DataMissing, "transfer evaluation needs checkpoints");
  std::vector<TransferPoint> curve;
  for (const auto& ckpt : checkpoints) {
    curve.push_back({ckpt.tasks_completed, finetune_task(ckpt, held_out, model, protocol).accuracy});
  }
  return curve;
}

std::string format_transfer_csv(const std::vector<TransferPoint>& curve) {
  std::string out = "pretrain_tasks,accuracy\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g\n", p.pretrain_tasks, p.accuracy);
    out += buf;
  }
  return out;
}

std::string format_acc_matrix_csv(const AccMatrix& m) {
  std::string out = "task,trained_through,accuracy\n";
  char buf[96];
  for (const auto& [key, acc] : m.cells()) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g\n", key.first, key.second, acc);
    out += buf;
  }
  return out;
}

std::string format_bwt_csv(const AccMatrix& m, std::size_t T) {
  const auto bwt = backward_transfer_summary(m, T);
  std::string out = "task,bwt\n";
  char buf[64];
  for (std::size_t t = 0; t < bwt.per_task.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g\n", t + 1, bwt.per_task[t]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.6g\n", bwt.mean);
  return out + buf;
}

}  // namespace glad
