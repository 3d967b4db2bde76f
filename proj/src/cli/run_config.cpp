#include <sika/cli.hpp>

#include <sika/errors.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace sika::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json &obj, const std::set<std::string> &allowed, const std::string &where) {
  if (!obj.is_object()) {
    throw ParameterError(where + ": expected an object");
  }
  for (const auto &[key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ParameterError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T> void read(const json &obj, const char *key, T &into, const std::string &where) {
  if (!obj.contains(key)) {
    return;
  }
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception &) {
    throw ParameterError(where + "." + key + ": wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

RunConfig parse_run_config(const json &doc, const std::filesystem::path &base_dir) {
  reject_unknown(doc, {"data", "model", "train", "seed", "threads", "out"}, "config");
  RunConfig c;

  if (!doc.contains("data")) {
    throw ParameterError("config: missing 'data' section");
  }
  const json &data = doc.at("data");
  reject_unknown(data, {"train", "test", "target", "task", "input_bounds"}, "data");
  std::string train_path, test_path, task = "regression";
  read(data, "train", train_path, "data");
  read(data, "test", test_path, "data");
  read(data, "target", c.target, "data");
  read(data, "task", task, "data");
  if (train_path.empty()) {
    throw ParameterError("data.train: a training CSV is required");
  }
  c.train_csv = resolve(base_dir, train_path);
  if (!test_path.empty()) {
    c.test_csv = resolve(base_dir, test_path);
  }
  c.task = parse_task(task);
  if (data.contains("input_bounds")) {
    std::vector<double> bounds;
    read(data, "input_bounds", bounds, "data");
    if (bounds.size() != 2 || !(bounds[1] > bounds[0])) {
      throw ParameterError("data.input_bounds: expected [lo, hi] with hi > lo");
    }
    c.input_bounds = std::make_pair(bounds[0], bounds[1]);
  }

  if (doc.contains("model")) {
    const json &model = doc.at("model");
    reject_unknown(model, {"hidden", "output", "squash", "noise_variance"}, "model");
    if (model.contains("hidden")) {
      if (!model.at("hidden").is_array()) {
        throw ParameterError("model.hidden: expected an array of layers");
      }
      c.hidden.clear();
      for (const auto &h : model.at("hidden")) {
        reject_unknown(h, {"out_dim", "level", "theta"}, "model.hidden[]");
        HiddenLayerConfig layer;
        read(h, "out_dim", layer.out_dim, "model.hidden[]");
        read(h, "level", layer.level, "model.hidden[]");
        read(h, "theta", layer.theta, "model.hidden[]");
        c.hidden.push_back(layer);
      }
    }
    if (model.contains("output")) {
      const json &out = model.at("output");
      reject_unknown(out, {"level", "theta"}, "model.output");
      read(out, "level", c.output_level, "model.output");
      read(out, "theta", c.output_theta, "model.output");
    }
    std::string squash = to_string(c.squash);
    read(model, "squash", squash, "model");
    c.squash = parse_squash(squash);
    read(model, "noise_variance", c.noise_variance, "model");
  }

  if (doc.contains("train")) {
    const json &t = doc.at("train");
    reject_unknown(t,
                   {"epochs", "batch_size", "train_samples", "test_samples", "learning_rate",
                    "weight_decay", "kl_warmup_fraction", "grad_clip_norm", "sampling"},
                   "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "train_samples", c.train.train_samples, "train");
    read(t, "test_samples", c.train.test_samples, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "weight_decay", c.train.weight_decay, "train");
    read(t, "kl_warmup_fraction", c.train.kl_warmup_fraction, "train");
    read(t, "grad_clip_norm", c.train.grad_clip_norm, "train");
    std::string sampling = to_string(c.train.sampling);
    read(t, "sampling", sampling, "train");
    c.train.sampling = parse_forward_mode(sampling);
  }
  read(doc, "seed", c.train.seed, "config");
  read(doc, "threads", c.train.threads, "config");
  std::string out;
  read(doc, "out", out, "config");
  if (!out.empty()) {
    c.out = resolve(base_dir, out);
  }

  if (c.hidden.empty()) {
    c.hidden.push_back({});
  }
  for (const auto &h : c.hidden) {
    if (h.out_dim < 1 || h.level < 1 || h.level > kMaxLevel || !(h.theta > 0.0)) {
      throw ParameterError("model.hidden: out_dim >= 1, level in [1, 20] and theta > 0 required");
    }
  }
  if (!(c.noise_variance > 0.0)) {
    throw ParameterError("model.noise_variance must be positive");
  }
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path &path, const Overrides &overrides) {
  std::ifstream in(path);
  if (!in) {
    throw ParameterError("cannot open config " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception &e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  RunConfig c = parse_run_config(doc, path.parent_path());
  if (overrides.seed) {
    c.train.seed = *overrides.seed;
  }
  if (overrides.threads) {
    c.train.threads = *overrides.threads;
  }
  if (overrides.out) {
    c.out = *overrides.out;
  }
  c.train.validate();
  return c;
}

json RunConfig::to_json() const {
  json hidden_layers = json::array();
  for (const auto &h : hidden) {
    hidden_layers.push_back({{"out_dim", h.out_dim}, {"level", h.level}, {"theta", h.theta}});
  }
  json data = {{"train", train_csv.string()}, {"target", target}, {"task", sika::to_string(task)}};
  if (!test_csv.empty()) {
    data["test"] = test_csv.string();
  }
  if (input_bounds) {
    data["input_bounds"] = {input_bounds->first, input_bounds->second};
  }
  return {
      {"data", data},
      {"model",
       {{"hidden", hidden_layers},
        {"output", {{"level", output_level}, {"theta", output_theta}}},
        {"squash", sika::to_string(squash)},
        {"noise_variance", noise_variance}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"train_samples", train.train_samples},
        {"test_samples", train.test_samples},
        {"learning_rate", train.learning_rate},
        {"weight_decay", train.weight_decay},
        {"kl_warmup_fraction", train.kl_warmup_fraction},
        {"grad_clip_norm", train.grad_clip_norm},
        {"sampling", sika::to_string(train.sampling)}}},
      {"seed", train.seed},
      {"threads", train.threads},
      {"out", out.string()},
  };
}

void write_run_metadata(const std::filesystem::path &dir, const std::string &command,
                        const json &config, double wall_seconds) {
  std::filesystem::create_directories(dir);
  const json meta = {{"command", command},
                     {"version", kVersion},
                     {"config", config},
                     {"wall_seconds", wall_seconds}};
  write_file_atomic(dir / ("run_" + command + ".json"), meta.dump(2) + "\n");
}

} // namespace sika::cli
