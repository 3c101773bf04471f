#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scct/checkpoint.hpp"
#include "scct/dataset.hpp"
#include "scct/model.hpp"
#include "scct/optim.hpp"
#include "scct/transducer_loss.hpp"

namespace scct {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0 = no limit
  bool shuffle = true;
  std::uint64_t seed = 1;
  std::string out_dir;  // empty = keep everything in memory
  std::size_t log_every = 0;
  // Weight of the joiner settling penalty added to the NLL, so the recursion
  // reaches a fixed point instead of only its N-th iterate being fit.
  double sc_residual_weight = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, batch_size, max_steps,
                                                shuffle, seed, out_dir, log_every,
                                                sc_residual_weight)

struct LossRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossRecord, step, loss, wall_ms)

struct TrainResult {
  ModelParams params;
  OptimState optim;
  std::vector<LossRecord> curve;
  std::size_t epochs_completed = 0;
};

inline std::string checkpoint_path(const std::string& out_dir) {
  return (std::filesystem::path(out_dir) / "checkpoint.scj").string();
}

inline std::string loss_curve_path(const std::string& out_dir) {
  return (std::filesystem::path(out_dir) / "loss_curve.jsonl").string();
}

// Mean transducer NLL of one utterance, with gradients accumulated into
// `params` scaled by `weight`.
// Returns the NLL; the residual penalty only enters the gradient.
inline double utterance_loss_and_grad(const Utterance& u, ModelParams& params,
                                      const ModelConfig& cfg, double weight,
                                      double residual_weight = 0.0) {
  GradTape tape;
  TapeScope scope(tape);
  const GridResult g = forward_grid(u.features, u.target, u.hints, params, cfg, LoopMode::kTrain);
  Tensor objective = transducer_nll(g.grid);
  const double value = objective.item();
  if (residual_weight > 0.0) {
    objective = add(objective, scale(settling_penalty(g.iterates), residual_weight));
  }
  if (std::isfinite(value) && std::isfinite(objective.item())) {
    backward(tape, scale(objective, weight));
  }
  return std::isfinite(objective.item()) ? value : objective.item();
}

inline Checkpoint make_checkpoint(const ModelConfig& cfg, const ModelParams& p,
                                  const OptimState& st, std::size_t epochs_completed,
                                  const SynthConfig& synth) {
  Checkpoint ck;
  ck.config = cfg;
  ck.params = p.clone();
  ck.optim = st;
  ck.extra = {{"epochs_completed", epochs_completed}, {"synth", synth}};
  return ck;
}

// Mini-batch Adam on the transducer NLL. Deterministic given the configs and
// the manifest; wall-clock time only reaches the loss-curve records.
inline TrainResult train_loop(const std::vector<ManifestEntry>& manifest,
                              const SynthConfig& synth, const ModelConfig& cfg,
                              const OptimConfig& ocfg, const TrainConfig& tcfg,
                              const std::optional<Checkpoint>& resume = std::nullopt,
                              const std::function<void(const LossRecord&)>& on_step = {}) {
  cfg.validate();
  if (manifest.empty()) throw ContractError("train_loop: empty dataset");
  if (tcfg.batch_size == 0) throw ContractError("train_loop: batch_size must be >= 1");

  const Vocab vocab;
  if (vocab.size() != cfg.vocab_size) {
    throw ContractError("train_loop: model vocab_size " + std::to_string(cfg.vocab_size) +
                        " does not match the character vocabulary (" +
                        std::to_string(vocab.size()) + ")");
  }
  std::vector<Utterance> data;
  data.reserve(manifest.size());
  for (const auto& e : manifest) data.push_back(materialize(e, synth, vocab));

  TrainResult res;
  if (resume) {
    if (nlohmann::json(resume->config) != nlohmann::json(cfg)) {
      throw DimensionError("train_loop: resume checkpoint config differs from model config");
    }
    res.params = resume->params.clone();
    res.optim = resume->optim ? *resume->optim : OptimState::for_params(res.params, ocfg);
    res.optim.cfg = ocfg;
    res.epochs_completed = resume->extra.is_object()
                               ? resume->extra.value("epochs_completed", std::size_t{0})
                               : 0;
  } else {
    res.params = init_params(cfg, tcfg.seed);
    res.optim = OptimState::for_params(res.params, ocfg);
  }

  std::ofstream curve_out;
  if (!tcfg.out_dir.empty()) {
    std::filesystem::create_directories(tcfg.out_dir);
    curve_out.open(loss_curve_path(tcfg.out_dir), std::ios::app);
    if (!curve_out) throw std::runtime_error("cannot write loss curve in '" + tcfg.out_dir + "'");
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(data.size());
  std::uint64_t steps_this_run = 0;
  const std::size_t first_epoch = res.epochs_completed;
  for (std::size_t epoch = first_epoch; epoch < first_epoch + tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (tcfg.shuffle) {
      Rng rng(tcfg.seed * 0x100000001b3ULL + epoch);
      std::shuffle(order.begin(), order.end(), rng);
    }
    bool stop = false;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      const double w = 1.0 / static_cast<double>(end - start);
      double total = 0.0;
      std::string cause = "non-finite loss";
      try {
        for (std::size_t i = start; i < end; ++i) {
          total += w * utterance_loss_and_grad(data[order[i]], res.params, cfg, w,
                                                tcfg.sc_residual_weight);
        }
      } catch (const NumericError& e) {
        total = std::numeric_limits<double>::quiet_NaN();
        cause = e.what();
      }
      if (!std::isfinite(total)) {
        std::string dump;
        if (!tcfg.out_dir.empty()) {
          dump = (std::filesystem::path(tcfg.out_dir) / "nan_batch.jsonl").string();
          std::vector<ManifestEntry> bad;
          for (std::size_t i = start; i < end; ++i) bad.push_back(manifest[order[i]]);
          write_manifest(dump, bad);
        }
        std::string ids;
        for (std::size_t i = start; i < end; ++i) ids += " " + manifest[order[i]].utterance_id;
        throw NumericError(cause + " at step " + std::to_string(res.optim.step + 1) +
                           "; batch:" + ids + (dump.empty() ? "" : "; dumped to " + dump));
      }
      adam_step(res.params, res.optim);
      LossRecord rec{res.optim.step, total,
                     std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count()};
      res.curve.push_back(rec);
      if (curve_out) curve_out << nlohmann::json(rec).dump() << '\n' << std::flush;
      if (on_step) on_step(rec);
      if (tcfg.log_every && rec.step % tcfg.log_every == 0) {
        std::fprintf(stderr, "step %llu loss %.4f (%.1fs)\n",
                     static_cast<unsigned long long>(rec.step), rec.loss, rec.wall_ms / 1000.0);
      }
      ++steps_this_run;
      if (tcfg.max_steps && steps_this_run >= tcfg.max_steps) {
        stop = true;
        break;
      }
    }
    if (!stop) ++res.epochs_completed;
    if (!tcfg.out_dir.empty()) {
      save_checkpoint(checkpoint_path(tcfg.out_dir),
                      make_checkpoint(cfg, res.params, res.optim, res.epochs_completed, synth));
    }
    if (stop) break;
  }
  return res;
}

}  // namespace scct
