#include "glad/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace glad {

namespace {

using json = nlohmann::ordered_json;

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigKeyError(where(), "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    convert(*it, out, prefix_ + key);
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    T v{};
    convert(*it, v, prefix_ + key);
    out = v;
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename Fn>
  void child(const char* key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    ObjectReader sub(*it, prefix_ + key + ".");
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigKeyError(prefix_ + it.key(), "unknown key");
    }
  }

 private:
  std::string where() const { return prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1); }

  static void convert(const json& v, bool& out, const std::string& key) {
    if (!v.is_boolean()) throw ConfigKeyError(key, "expected true or false");
    out = v.get<bool>();
  }
  static void convert(const json& v, double& out, const std::string& key) {
    if (!v.is_number()) throw ConfigKeyError(key, "expected a number");
    out = v.get<double>();
  }
  static void convert(const json& v, std::string& out, const std::string& key) {
    if (!v.is_string()) throw ConfigKeyError(key, "expected a string");
    out = v.get<std::string>();
  }
  template <typename U>
    requires std::is_unsigned_v<U>
  static void convert(const json& v, U& out, const std::string& key) {
    if (!v.is_number_unsigned()) throw ConfigKeyError(key, "expected a nonnegative integer");
    const auto raw = v.get<std::uint64_t>();
    if (raw > std::numeric_limits<U>::max()) throw ConfigKeyError(key, "value out of range");
    out = static_cast<U>(raw);
  }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& key, const std::string& text, std::initializer_list<std::pair<const char*, E>> options) {
  std::string valid;
  for (const auto& [name, value] : options) {
    if (text == name) return value;
    valid += valid.empty() ? name : std::string(", ") + name;
  }
  throw ConfigKeyError(key, "'" + text + "' is not one of " + valid);
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  protocol.validate();
  if (model.depth == 0) throw Error(ErrorCode::ConfigConflict, "model.depth must be at least 1");
  if (data.tasks == 0 || data.held_out >= data.tasks) {
    throw Error(ErrorCode::ConfigConflict, "data.held_out must leave at least one pre-training task");
  }
  if (protocol.glad && model.heads < 2) {
    throw Error(ErrorCode::ConfigConflict, "glad needs at least two heads per layer");
  }
  if (data.synthetic.classes_per_task != model.num_classes) {
    throw Error(ErrorCode::ConfigConflict, "model.num_classes must equal data.synthetic.classes_per_task");
  }
  if (name.empty() || name.find('/') != std::string::npos) {
    throw Error(ErrorCode::ConfigConflict, "name must be a plain directory name");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid JSON: ") + e.what());
  }
  RunConfig c;
  ObjectReader r(root, "");
  r.get("name", c.name);
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);

  r.child("model", [&](ObjectReader& m) {
    m.get("image_size", c.model.image_size);
    m.get("channels", c.model.channels);
    m.get("patch_size", c.model.patch_size);
    m.get("embed_dim", c.model.embed_dim);
    m.get("depth", c.model.depth);
    m.get("heads", c.model.heads);
    m.get("mlp_ratio", c.model.mlp_ratio);
    m.get("num_classes", c.model.num_classes);
  });

  ProtocolConfig& p = c.protocol;
  r.child("protocol", [&](ObjectReader& o) {
    std::string framework = to_string(p.framework), method = to_string(p.method);
    o.get("framework", framework);
    o.get("method", method);
    p.framework = parse_enum<Framework>("protocol.framework", framework,
                                        {{"supervised", Framework::supervised}, {"mim", Framework::mim}});
    p.method = parse_enum<Method>("protocol.method", method, {{"base", Method::base}, {"si", Method::si}});
    o.get("pretrain_epochs_supervised", p.pretrain_epochs_supervised);
    o.get("pretrain_epochs_mim", p.pretrain_epochs_mim);
    o.get("finetune_epochs", p.finetune_epochs);
    o.get("pretrain_steps", p.pretrain_steps);
    o.get("finetune_steps", p.finetune_steps);
    o.get("probe_steps", p.probe_steps);
    o.get("batch_size", p.batch_size);
    o.get("eta", p.eta);
    o.get("pretrain_lr_multiplier", p.pretrain_lr_multiplier);
    o.get("finetune_lr_multiplier", p.finetune_lr_multiplier);
    o.get("warmup_fraction", p.warmup_fraction);
    o.get("min_lr_ratio", p.min_lr_ratio);
    o.child("adamw", [&](ObjectReader& a) {
      a.get("beta1", p.adamw.beta1);
      a.get("beta2", p.adamw.beta2);
      a.get("eps", p.adamw.eps);
      a.get("weight_decay", p.adamw.weight_decay);
    });
    o.child("si", [&](ObjectReader& s) {
      s.get("strength", p.si_strength);
      s.get("damping", p.si_damping);
    });
  });

  r.child("glad", [&](ObjectReader& g) {
    g.get("enabled", p.glad);
    g.get("lambda", p.glad_config.lambda);
    g.get("epsilon", p.glad_config.epsilon);
    g.get("weight", p.glad_config.weight);
    g.get("train_adaptor", p.glad_config.train_adaptor);
    std::string path = to_string(p.glad_config.regularized_path);
    g.get("regularized_path", path);
    p.glad_config.regularized_path =
        parse_enum<AttentionPath>("glad.regularized_path", path,
                                  {{"adaptor_free", AttentionPath::adaptor_free},
                                   {"adaptor_guided", AttentionPath::adaptor_guided}});
  });

  r.child("mim", [&](ObjectReader& m) {
    m.get("mask_rho", p.mask_rho);
    m.get("mask_in_pixel_space", p.mim.mask_in_pixel_space);
    m.get("literal_target", p.mim.literal_target);
    m.get("normalize_targets", p.mim.normalize_targets);
  });

  SyntheticSpec& s = c.data.synthetic;
  r.child("data", [&](ObjectReader& d) {
    d.get("dir", c.data.dir);
    d.get("tasks", c.data.tasks);
    d.get("held_out", c.data.held_out);
    d.get("pretrain_fraction", p.pretrain_fraction);
    d.child("synthetic", [&](ObjectReader& y) {
      y.get("classes_per_task", s.classes_per_task);
      y.get("train_per_class", s.train_per_class);
      y.get("val_per_class", s.val_per_class);
      y.get("jitter", s.jitter);
      y.get("noise", s.noise);
      y.get("colour_jitter", s.colour_jitter);
      c.data.synthetic_seed_set = y.has("seed");
      y.get("seed", s.seed);
    });
  });
  r.finish();

  p.seed = c.seed;
  if (!c.data.synthetic_seed_set) s.seed = c.seed;
  c.data.synthetic_seed_set = true;
  s.tasks = static_cast<std::uint32_t>(c.data.tasks);
  s.image_size = static_cast<std::uint32_t>(c.model.image_size);
  s.channels = static_cast<std::uint32_t>(c.model.channels);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string resolved_config_json(const RunConfig& c) {
  const ProtocolConfig& p = c.protocol;
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["model"] = {{"image_size", c.model.image_size}, {"channels", c.model.channels},
                {"patch_size", c.model.patch_size}, {"embed_dim", c.model.embed_dim},
                {"depth", c.model.depth},           {"heads", c.model.heads},
                {"mlp_ratio", c.model.mlp_ratio},   {"num_classes", c.model.num_classes}};
  j["protocol"] = {{"framework", to_string(p.framework)},
                   {"method", to_string(p.method)},
                   {"pretrain_epochs_supervised", p.pretrain_epochs_supervised},
                   {"pretrain_epochs_mim", p.pretrain_epochs_mim},
                   {"finetune_epochs", p.finetune_epochs},
                   {"pretrain_steps", p.pretrain_steps},
                   {"finetune_steps", p.finetune_steps},
                   {"probe_steps", p.probe_steps},
                   {"batch_size", p.batch_size},
                   {"eta", p.eta},
                   {"pretrain_lr_multiplier", p.pretrain_multiplier()},
                   {"finetune_lr_multiplier", p.finetune_multiplier()},
                   {"warmup_fraction", p.warmup_fraction},
                   {"min_lr_ratio", p.min_lr_ratio},
                   {"adamw",
                    {{"beta1", p.adamw.beta1},
                     {"beta2", p.adamw.beta2},
                     {"eps", p.adamw.eps},
                     {"weight_decay", p.adamw.weight_decay}}},
                   {"si", {{"strength", p.si_strength}, {"damping", p.si_damping}}}};
  j["glad"] = {{"enabled", p.glad},
               {"lambda", p.glad_config.lambda},
               {"epsilon", p.glad_config.epsilon},
               {"weight", p.glad_config.weight},
               {"regularized_path", to_string(p.glad_config.regularized_path)},
               {"train_adaptor", p.glad_config.train_adaptor}};
  j["mim"] = {{"mask_rho", p.mask_rho},
              {"mask_in_pixel_space", p.mim.mask_in_pixel_space},
              {"literal_target", p.mim.literal_target},
              {"normalize_targets", p.mim.normalize_targets}};
  const SyntheticSpec& s = c.data.synthetic;
  j["data"] = {{"dir", c.data.dir},
               {"tasks", c.data.tasks},
               {"held_out", c.data.held_out},
               {"pretrain_fraction", p.pretrain_fraction},
               {"synthetic",
                {{"classes_per_task", s.classes_per_task},
                 {"train_per_class", s.train_per_class},
                 {"val_per_class", s.val_per_class},
                 {"jitter", s.jitter},
                 {"noise", s.noise},
                 {"colour_jitter", s.colour_jitter},
                 {"seed", s.seed}}}};
  return j.dump(2) + "\n";
}

}  // namespace glad
