#pragma once

// Adam training loop with a deterministic shuffle sequence, per-epoch loss
// and train-set metrics, CSV logging and a final checkpoint.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "attswin/checkpoint.hpp"
#include "attswin/config_json.hpp"
#include "attswin/loss.hpp"
#include "attswin/metrics.hpp"
#include "attswin/network.hpp"
#include "attswin/optim.hpp"
#include "attswin/random.hpp"

namespace attswin {

// Non-finite loss: training aborts naming the failing step.
struct NumericError : std::runtime_error {
  long step;
  explicit NumericError(long step_)
      : std::runtime_error("non-finite loss at training step " + std::to_string(step_)), step(step_) {}
};

struct EpochLog {
  int epoch = 0;
  double loss = 0, dsc = 0, se = 0, sp = 0, acc = 0;
};

struct TrainResult {
  std::vector<EpochLog> rows;
};

inline std::string format_epoch_row(const EpochLog& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f", r.epoch, r.loss, r.dsc, r.se, r.sp,
                r.acc);
  return buf;
}

inline void write_train_log(const std::string& path, const TrainResult& result) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open training log for writing: " + path);
  os << "epoch,loss,dsc,se,sp,acc\n";
  for (const auto& r : result.rows) os << format_epoch_row(r) << "\n";
}

template <typename T>
TrainResult train(AttSwinUNet<T>& model, const Dataset& data, const TrainConfig& cfg,
                  const std::string& log_path = {}, const std::string& checkpoint_path = {}) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  Adam<T> opt({.lr = cfg.lr});
  Rng shuffle_rng(Rng::mix(cfg.seed, 0x5u));

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor<T>> images;
      std::vector<std::uint8_t> masks;
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = data[order[i]];
        images.push_back(s.template image_tensor<T>());
        masks.insert(masks.end(), s.mask.begin(), s.mask.end());
      }
      auto logits = model.forward_batch(images);
      auto loss = segmentation_loss(logits, masks, static_cast<T>(cfg.lambda_ce),
                                    static_cast<T>(cfg.lambda_dice));
      ++step;
      const double lval = static_cast<double>(loss.item());
      if (!std::isfinite(lval)) throw NumericError(step);
      loss.backward();
      // parameters outside the active path (disabled ablation switches)
      // carry a zero gradient
      for (auto& p : model.params().entries())
        if (!p.tensor.has_grad()) p.tensor.mutable_grad();
      opt.step(model.params());
      epoch_loss += lval;
      ++batches;
    }
    auto metrics = evaluate(model, data);
    result.rows.push_back(EpochLog{epoch, epoch_loss / batches, metrics.dsc, metrics.se, metrics.sp,
                                   metrics.acc});
  }
  if (!log_path.empty()) write_train_log(log_path, result);
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, model);
  return result;
}

}  // namespace attswin
