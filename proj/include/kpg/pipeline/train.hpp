#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpg/core/adam.hpp"
#include "kpg/core/errors.hpp"
#include "kpg/core/log.hpp"
#include "kpg/model/model.hpp"
#include "kpg/pipeline/config.hpp"
#include "kpg/pipeline/dataset.hpp"
#include "kpg/pipeline/views.hpp"

namespace kpg {

struct TrainLogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string frame;
  std::size_t nodes = 0;
  double loss = 0.0;
};

struct TrainOptions {
  // Empty: nothing is written to disk.
  std::string run_dir;
  // Stop after this many optimizer steps (0: run every epoch).
  std::size_t max_steps = 0;
  std::function<void(const TrainLogRow&)> on_step;
};

struct TrainResult {
  Model<float> model;
  std::vector<TrainLogRow> log;
  std::size_t skipped = 0;  // frames without enough surviving key-points
};

namespace detail {

class RunWriter {
 public:
  RunWriter(const std::string& dir, const TrainConfig& cfg) : dir_(dir) {
    if (dir_.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir_) / "checkpoints");
    save_config((fs::path(dir_) / "config.json").string(), cfg);
    log_.open(fs::path(dir_) / "log.csv", std::ios::trunc);
    if (!log_) throw IoError("cannot write log in '" + dir_ + "'");
    log_ << "step,epoch,frame,nodes,loss\n" << std::setprecision(9);
  }

  void row(const TrainLogRow& r) {
    if (dir_.empty()) return;
    log_ << r.step << ',' << r.epoch << ',' << r.frame << ',' << r.nodes << ',' << r.loss << '\n';
    log_.flush();
  }

  void checkpoint(const Model<float>& m, std::size_t step) {
    if (dir_.empty()) return;
    m.save((std::filesystem::path(dir_) / "checkpoints" / ("step_" + std::to_string(step) + ".bin")).string());
  }

  void final_model(const Model<float>& m) {
    if (!dir_.empty()) m.save((std::filesystem::path(dir_) / "model.bin").string());
  }

  void nan_dump(const nlohmann::json& j) {
    if (dir_.empty()) return;
    std::ofstream out(std::filesystem::path(dir_) / "nan_dump.json", std::ios::trunc);
    out << j.dump(2) << '\n';
  }

 private:
  std::string dir_;
  std::ofstream log_;
};

}  // namespace detail

// One optimizer step per frame: augment, build both views, run the CNN over
// both views' patches in one batch, the GNN on each graph, then the
// contrastive loss. Frames must already be preprocessed.
inline TrainResult train(const std::vector<Image>& frames, const std::vector<std::string>& names,
                         const TrainConfig& cfg, const TrainOptions& opt = {}) {
  cfg.validate();
  if (frames.empty()) throw ContractError("train: the training split is empty");
  if (names.size() != frames.size()) throw ContractError("train: one name per frame required");

  TrainResult result{init_model<float>(cfg.seed, cfg.patch_side), {}, 0};
  auto& model = result.model;
  Adam<float> adam(model.trainable(), AdamConfig{cfg.learning_rate});
  const auto view_opt = ViewOptions::from(cfg);
  const auto loss_cfg = cfg.contrastive();
  std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  detail::RunWriter writer(opt.run_dir, cfg);

  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto f : order) {
      if (opt.max_steps && step >= opt.max_steps) break;
      const Image& frame = frames[f];
      const auto aug = sample_augmentation(rng, cfg.augmentation, image_center(frame));
      const auto views = build_graph_views(frame, aug.transform, view_opt);
      if (!views) {
        ++result.skipped;
        continue;
      }
      const std::size_t n = views->size();
      std::vector<Patch> batch = views->patches;
      batch.insert(batch.end(), views->augmented_patches.begin(), views->augmented_patches.end());
      const auto visual = cnn_forward(patches_to_tensor<float>(batch, cfg.patch_side), model.cnn, Mode::kTrain);
      std::vector<std::size_t> first(n), second(n);
      std::iota(first.begin(), first.end(), 0);
      std::iota(second.begin(), second.end(), n);

      const ImageSize size{frame.width, frame.height};
      KeypointGraph<float> gv, gw;
      gv.positions = views->positions;
      gv.image_size = size;
      gv.visual = gather_rows(visual, first);
      gw.positions = views->augmented_positions;
      gw.image_size = size;
      gw.visual = gather_rows(visual, second);
      gnn_forward(gv, model.gnn);
      gnn_forward(gw, model.gnn);
      const auto loss = total_loss(gv.global, gw.global, model.head, loss_cfg, rng);

      ++step;
      const double value = loss.item();
      if (!std::isfinite(value)) {
        nlohmann::json dump{{"step", step},
                            {"epoch", epoch},
                            {"frame", names[f]},
                            {"augmentation", family_name(aug.family)},
                            {"transform", aug.transform.matrix()},
                            {"nodes", n},
                            {"loss", std::to_string(value)}};
        for (const auto& t : model.named_tensors()) {
          if (!t.tensor.all_finite()) dump["non_finite_tensors"].push_back(t.name);
        }
        writer.nan_dump(dump);
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (frame '" + names[f] + "')");
      }
      adam.zero_grad();
      backward(loss);
      adam.step();

      TrainLogRow row{step, epoch, names[f], n, value};
      writer.row(row);
      if (opt.on_step) opt.on_step(row);
      result.log.push_back(std::move(row));
      if (step % cfg.checkpoint_every == 0) writer.checkpoint(model, step);
    }
  }
  if (step == 0) throw ContractError("train: no frame produced a usable pair of views");
  if (step % cfg.checkpoint_every != 0) writer.checkpoint(model, step);
  writer.final_model(model);
  return result;
}

inline TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainOptions& opt = {}) {
  std::vector<Image> frames;
  std::vector<std::string> names;
  for (const auto& path : ds.train_frames()) {
    try {
      frames.push_back(load_frame(path));
      names.push_back(path);
    } catch (const std::exception& e) {
      warn("skipping '" + path + "': " + e.what());
    }
  }
  return train(frames, names, cfg, opt);
}

// Mean loss per epoch, in epoch order.
inline std::vector<double> epoch_mean_losses(const std::vector<TrainLogRow>& log) {
  std::vector<double> sums, counts;
  for (const auto& r : log) {
    if (r.epoch > sums.size()) {
      sums.resize(r.epoch, 0.0);
      counts.resize(r.epoch, 0.0);
    }
    sums[r.epoch - 1] += r.loss;
    counts[r.epoch - 1] += 1.0;
  }
  std::vector<double> out;
  for (std::size_t e = 0; e < sums.size(); ++e) {
    if (counts[e] > 0) out.push_back(sums[e] / counts[e]);
  }
  return out;
}

}  // namespace kpg
