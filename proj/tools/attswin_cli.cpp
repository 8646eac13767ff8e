// Command-line entry point: training, evaluation, prediction, gradient
// checking, the ablation sweep and synthetic-data generation.
//
// Exit codes: 0 success, 1 configuration/data errors, 2 numeric failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attswin/checkpoint.hpp"
#include "attswin/config_json.hpp"
#include "attswin/dataset.hpp"
#include "attswin/gradcheck.hpp"
#include "attswin/loss.hpp"
#include "attswin/metrics.hpp"
#include "attswin/network.hpp"
#include "attswin/synth.hpp"
#include "attswin/train.hpp"

namespace fs = std::filesystem;
using namespace attswin;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::string data;
  std::string out = ".";
  std::string checkpoint;
  double threshold = 0.5;
  std::int64_t seed = -1;  // <0: keep the config's seed
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  auto* preset = cmd->add_option("--preset", o.preset, "bundled configuration: toy or paper");
  auto* config = cmd->add_option("--config", o.config_path, "JSON config file");
  preset->excludes(config);
  config->excludes(preset);
  cmd->add_option("--data", o.data, "dataset directory (paired *_img.pgm/_mask.pgm)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint path");
  cmd->add_option("--threshold", o.threshold, "foreground probability threshold");
  cmd->add_option("--seed", o.seed, "seed override");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig rc;
  if (!o.preset.empty()) {
    rc = preset_by_name(o.preset);
  } else if (!o.config_path.empty()) {
    std::ifstream is(o.config_path);
    if (!is) throw std::runtime_error("cannot open config file: " + o.config_path);
    rc = run_config_from_json(nlohmann::json::parse(is));
  }
  if (o.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(o.seed);
  rc.model.validate();
  rc.train.validate();
  return rc;
}

Dataset resolve_data(const CommonOpts& o, const RunConfig& rc, int fallback_count) {
  if (!o.data.empty()) return load_dataset(o.data, rc.model.image_size);
  std::cout << "no --data given: generating " << fallback_count << " synthetic samples (seed "
            << rc.train.seed << ")\n";
  return synth_lesions(fallback_count, rc.model.image_size, rc.model.image_size, rc.train.seed);
}

std::string metric_row(const MetricsRecord& m) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%llu,%llu,%llu,%llu", m.dsc, m.se, m.sp, m.acc,
                static_cast<unsigned long long>(m.tp), static_cast<unsigned long long>(m.fp),
                static_cast<unsigned long long>(m.tn), static_cast<unsigned long long>(m.fn));
  return buf;
}

int cmd_train(const CommonOpts& o) {
  auto rc = resolve_config(o);
  auto data = resolve_data(o, rc, /*fallback_count=*/16);
  fs::create_directories(o.out);
  AttSwinUNet<float> model(rc.model, rc.train.seed);
  const auto log_path = (fs::path(o.out) / "train_log.csv").string();
  const auto ckpt_path = (fs::path(o.out) / "checkpoint.atsw").string();
  auto result = train(model, data, rc.train, log_path, ckpt_path);
  if (!result.rows.empty()) {
    const auto& last = result.rows.back();
    std::cout << "trained " << last.epoch << " epochs, final loss " << last.loss << ", train DSC "
              << last.dsc << "\n";
  }
  std::cout << "wrote " << log_path << " and " << ckpt_path << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o) {
  if (o.checkpoint.empty()) throw std::runtime_error("eval requires --checkpoint");
  if (o.data.empty()) throw std::runtime_error("eval requires --data");
  auto model = model_from_checkpoint<float>(o.checkpoint);
  auto data = load_dataset(o.data, model.config().image_size);
  auto m = evaluate(model, data, o.threshold);
  fs::create_directories(o.out);
  const auto path = (fs::path(o.out) / "metrics.csv").string();
  std::ofstream os(path, std::ios::trunc);
  os << "dsc,se,sp,acc,tp,fp,tn,fn\n" << metric_row(m) << "\n";
  std::cout << "dsc " << m.dsc << " se " << m.se << " sp " << m.sp << " acc " << m.acc << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_predict(const CommonOpts& o) {
  if (o.checkpoint.empty()) throw std::runtime_error("predict requires --checkpoint");
  if (o.data.empty()) throw std::runtime_error("predict requires --data");
  auto model = model_from_checkpoint<float>(o.checkpoint);
  std::vector<std::string> stems;
  auto data = load_dataset(o.data, model.config().image_size, &stems);
  fs::create_directories(o.out);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto pred = predict_mask(model, data[i], o.threshold);
    std::vector<std::uint8_t> bytes(pred.size());
    for (std::size_t j = 0; j < pred.size(); ++j) bytes[j] = pred[j] ? 255 : 0;
    const auto path = (fs::path(o.out) / (stems[i] + "_pred.pgm")).string();
    write_pgm(path, data[i].w, data[i].h, bytes);
  }
  std::cout << "wrote " << data.size() << " prediction masks to " << o.out << "\n";
  return 0;
}

int cmd_synthdata(const CommonOpts& o, int count, int size) {
  const std::uint64_t seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : 0;
  auto data = synth_lesions(count, size, size, seed);
  save_dataset(o.out, data);
  std::cout << "wrote " << 2 * data.size() << " files (" << data.size() << " pairs) to " << o.out
            << "\n";
  return 0;
}

std::string layer_type_of(const std::string& name) {
  auto has = [&](const char* s) { return name.find(s) != std::string::npos; };
  if (has("bias_table")) return "relative_position_bias";
  if (has(".attn.")) return "msa_projection";
  if (has(".mlp.")) return "mlp";
  if (has("norm")) return "layer_norm";
  if (has("embed.")) return "patch_embed";
  if (has(".merge.")) return "patch_merge";
  if (has(".expand")) return "patch_expand";
  if (has(".cross.")) return "cross_attention";
  if (has(".fuse")) return "skip_fusion";
  if (has("head.")) return "segmentation_head";
  return "other";
}

int cmd_gradcheck(const CommonOpts& o) {
  RunConfig base = (o.preset.empty() && o.config_path.empty()) ? toy_preset() : resolve_config(o);
  if (o.seed >= 0) base.train.seed = static_cast<std::uint64_t>(o.seed);
  base.model.validate();

  AttSwinUNet<double> model(base.model, base.train.seed);
  if (!o.checkpoint.empty()) load_into(load_checkpoint(o.checkpoint), model);
  auto sample = synth_lesion_sample(base.model.image_size, base.model.image_size,
                                    Rng::mix(base.train.seed, 0x6adcu));
  auto img = sample.image_tensor<double>();
  auto loss = [&]() { return segmentation_loss(model.forward(img), sample.mask, 0.5, 0.5); };

  // group parameter tensors by layer type and sample 10% of each (at least one)
  std::map<std::string, std::vector<std::size_t>> groups;
  auto& entries = model.params().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) groups[layer_type_of(entries[i].name)].push_back(i);

  bool all_pass = true;
  const double tol = 1e-3;
  Rng pick(Rng::mix(base.train.seed, 0x9ccu));
  for (auto& [type, indices] : groups) {
    pick.shuffle(indices);
    const std::size_t take = std::max<std::size_t>(1, indices.size() / 10);
    double worst = 0;
    std::string worst_name = entries[indices[0]].name;
    for (std::size_t k = 0; k < take; ++k) {
      auto& p = entries[indices[k]];
      auto rep = finite_diff_check(loss, p.tensor, tol, /*max_samples=*/2,
                                   Rng::mix(base.train.seed, indices[k]), p.name);
      if (rep.max_rel_err >= worst) {
        worst = rep.max_rel_err;
        worst_name = p.name;
      }
    }
    const bool pass = worst <= tol;
    all_pass = all_pass && pass;
    std::printf("%-24s max rel err %.3e (%zu of %zu tensors, worst %s) %s\n", type.c_str(), worst,
                take, indices.size(), worst_name.c_str(), pass ? "OK" : "FAIL");
  }
  return all_pass ? 0 : 2;
}

int cmd_ablate(const CommonOpts& o) {
  RunConfig rc = (o.preset.empty() && o.config_path.empty()) ? toy_preset() : resolve_config(o);
  if (o.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(o.seed);

  // shared data split: train on the bulk, report metrics on the held-out tail
  Dataset train_set, test_set;
  if (!o.data.empty()) {
    auto all = load_dataset(o.data, rc.model.image_size);
    if (all.size() < 2) throw std::runtime_error("ablate needs at least 2 samples in " + o.data);
    const std::size_t cut = all.size() - std::max<std::size_t>(1, all.size() / 5);
    train_set.assign(all.begin(), all.begin() + static_cast<long>(cut));
    test_set.assign(all.begin() + static_cast<long>(cut), all.end());
  } else {
    std::cout << "no --data given: generating 64 train + 16 test synthetic samples (seed "
              << rc.train.seed << ")\n";
    train_set = synth_lesions(64, rc.model.image_size, rc.model.image_size, rc.train.seed);
    test_set = synth_lesions(16, rc.model.image_size, rc.model.image_size,
                             Rng::mix(rc.train.seed, 0x7e57u));
  }

  fs::create_directories(o.out);
  const auto path = (fs::path(o.out) / "ablation.csv").string();
  std::ofstream os(path, std::ios::trunc);
  os << "setting,dsc,se,sp,acc\n";
  for (const auto& row : ablation_rows()) {
    try {
      auto cfg = apply_ablation(rc.model, row);
      cfg.validate();
      AttSwinUNet<float> model(cfg, rc.train.seed);
      train(model, train_set, rc.train);
      auto m = evaluate(model, test_set, o.threshold);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", m.dsc, m.se, m.sp, m.acc);
      os << row << "," << buf << "\n";
      std::cout << row << ": dsc " << m.dsc << "\n";
    } catch (const std::exception& e) {
      os << row << ",nan,nan,nan,nan\n";
      std::cerr << row << " failed: " << e.what() << "\n";
    }
    os.flush();
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-augmented Swin U-Net for binary segmentation"};
  app.require_subcommand(1);

  CommonOpts train_o, eval_o, predict_o, grad_o, ablate_o, synth_o;
  int synth_count = 16;
  int synth_size = 32;

  auto* c_train = app.add_subcommand("train", "train a model and write train_log.csv + checkpoint");
  add_common(c_train, train_o);
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset, write metrics.csv");
  add_common(c_eval, eval_o);
  auto* c_predict = app.add_subcommand("predict", "write per-image P5 prediction masks");
  add_common(c_predict, predict_o);
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference gradient suite per layer type");
  add_common(c_grad, grad_o);
  auto* c_ablate = app.add_subcommand("ablate", "run the ablation table rows, write ablation.csv");
  add_common(c_ablate, ablate_o);
  auto* c_synth = app.add_subcommand("synth-data", "materialize a synthetic dataset directory");
  add_common(c_synth, synth_o);
  c_synth->add_option("--count", synth_count, "number of samples");
  c_synth->add_option("--size", synth_size, "image height/width");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_train->parsed()) return cmd_train(train_o);
    if (c_eval->parsed()) return cmd_eval(eval_o);
    if (c_predict->parsed()) return cmd_predict(predict_o);
    if (c_grad->parsed()) return cmd_gradcheck(grad_o);
    if (c_ablate->parsed()) return cmd_ablate(ablate_o);
    if (c_synth->parsed()) return cmd_synthdata(synth_o, synth_count, synth_size);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
