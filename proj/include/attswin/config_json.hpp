#pragma once

// JSON (de)serialization of model and training configuration. Unknown keys
// are rejected so typos fail fast.

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "attswin/network.hpp"

namespace attswin {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 24;
  int epochs = 100;
  std::uint64_t seed = 0;
  double lambda_ce = 0.5;
  double lambda_dice = 0.5;

  void validate() const {
    if (lr <= 0) throw std::invalid_argument("train config: lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be at least 1");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be nonnegative");
    if (lambda_ce < 0 || lambda_dice < 0)
      throw std::invalid_argument("train config: loss weights must be nonnegative");
  }
};

namespace detail {
inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where + " config");
}
}  // namespace detail

inline nlohmann::json model_to_json(const ModelConfig& c) {
  return nlohmann::json{{"image_size", c.image_size},
                        {"in_channels", c.in_channels},
                        {"patch_size", c.patch_size},
                        {"base_channels", c.base_channels},
                        {"depths", c.depths},
                        {"heads", c.heads},
                        {"window_size", c.window_size},
                        {"num_classes", c.num_classes},
                        {"attn_skips", c.attn_skips},
                        {"spatial_attention", c.spatial_attention},
                        {"cross_attention", c.cross_attention},
                        {"normalize_transfer", c.normalize_transfer},
                        {"model_scale", c.model_scale}};
}

inline ModelConfig model_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"image_size", "in_channels", "patch_size", "base_channels", "depths",
                               "heads", "window_size", "num_classes", "attn_skips", "spatial_attention",
                               "cross_attention", "normalize_transfer", "model_scale"},
                              "model");
  ModelConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.depths = j.value("depths", c.depths);
  c.heads = j.value("heads", c.heads);
  c.window_size = j.value("window_size", c.window_size);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.attn_skips = j.value("attn_skips", c.attn_skips);
  c.spatial_attention = j.value("spatial_attention", c.spatial_attention);
  c.cross_attention = j.value("cross_attention", c.cross_attention);
  c.normalize_transfer = j.value("normalize_transfer", c.normalize_transfer);
  c.model_scale = j.value("model_scale", c.model_scale);
  return c;
}

inline nlohmann::json train_to_json(const TrainConfig& c) {
  return nlohmann::json{{"lr", c.lr},           {"batch_size", c.batch_size},
                        {"epochs", c.epochs},   {"seed", c.seed},
                        {"lambda_ce", c.lambda_ce}, {"lambda_dice", c.lambda_dice}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"lr", "batch_size", "epochs", "seed", "lambda_ce", "lambda_dice"},
                              "train");
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.lambda_ce = j.value("lambda_ce", c.lambda_ce);
  c.lambda_dice = j.value("lambda_dice", c.lambda_dice);
  return c;
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"model", "train"}, "run");
  RunConfig rc;
  if (j.contains("model")) rc.model = model_from_json(j.at("model"));
  if (j.contains("train")) rc.train = train_from_json(j.at("train"));
  return rc;
}

// Desk-scale preset: 32x32 inputs, trains in minutes on a CPU.
inline RunConfig toy_preset() {
  RunConfig rc;
  rc.model.image_size = 32;
  rc.model.in_channels = 1;
  rc.model.patch_size = 2;
  rc.model.base_channels = 16;
  rc.model.depths = {2, 2, 2, 2};
  rc.model.heads = {1, 2, 4, 8};
  rc.model.window_size = 4;
  rc.train.batch_size = 4;
  rc.train.epochs = 200;
  return rc;
}

// Published full-scale setup: 224x224, lr 1e-4, batch 24, 100 epochs.
inline RunConfig paper_preset() {
  return RunConfig{};  // the defaults are exactly that configuration
}

inline RunConfig preset_by_name(const std::string& name) {
  if (name == "toy") return toy_preset();
  if (name == "paper") return paper_preset();
  throw std::invalid_argument("unknown preset '" + name + "' (expected toy or paper)");
}

}  // namespace attswin
