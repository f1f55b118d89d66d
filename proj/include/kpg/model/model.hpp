#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kpg/core/checkpoint.hpp"
#include "kpg/model/cnn.hpp"
#include "kpg/model/contrastive.hpp"
#include "kpg/model/gnn.hpp"

namespace kpg {

// Every learnable tensor of the matcher: patch CNN, attentional GNN and the
// loss-only projection head.
template <typename T>
struct Model {
  CnnParams<T> cnn;
  GnnParams<T> gnn;
  ProjectionHead<T> head;

  std::size_t patch_side() const { return cnn.patch_side; }

  std::vector<NamedTensor<T>> named_tensors() const {
    auto out = cnn.named_tensors();
    for (auto& t : gnn.named_tensors()) out.push_back(std::move(t));
    for (auto& t : head.named_tensors()) out.push_back(std::move(t));
    return out;
  }

  std::vector<Tensor<T>> trainable() const {
    std::vector<Tensor<T>> out;
    for (const auto& t : named_tensors()) {
      if (t.trainable) out.push_back(t.tensor);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : named_tensors()) n += t.trainable ? t.tensor.numel() : 0;
    return n;
  }

  std::vector<CheckpointRecord> to_records() const {
    std::vector<CheckpointRecord> records;
    for (const auto& t : named_tensors()) records.push_back(to_record(t.name, t.tensor));
    return records;
  }

  // Overwrites values in place; every model tensor must be present with a
  // matching shape.
  void load_records(const std::vector<CheckpointRecord>& records) {
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;
    for (auto& t : named_tensors()) {
      const auto it = by_name.find(t.name);
      if (it == by_name.end()) throw IoError("checkpoint lacks tensor '" + t.name + "'");
      if (it->second->shape != t.tensor.shape()) {
        throw ShapeError("checkpoint tensor '" + t.name + "' has shape " + shape_str(it->second->shape) +
                         ", model expects " + shape_str(t.tensor.shape()));
      }
      auto dst = t.tensor.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
    }
  }

  void save(const std::string& path) const { write_checkpoint(path, to_records()); }
};

template <typename T>
Model<T> init_model(std::uint64_t seed, std::size_t patch_side = 128) {
  return {init_cnn<T>(seed, patch_side), init_gnn<T>(seed + 1), init_projection_head<T>(seed + 2)};
}

// Patch side is recovered from the layer-7 kernel extent.
template <typename T>
Model<T> load_model(const std::string& path) {
  const auto records = read_checkpoint(path);
  std::size_t side = 0;
  for (const auto& r : records) {
    if (r.name == "cnn.layer7.weight" && r.shape.size() == 4) side = r.shape[3] * 16;
  }
  if (side == 0) throw IoError("checkpoint '" + path + "' has no cnn.layer7.weight");
  auto model = init_model<T>(0, side);
  model.load_records(records);
  return model;
}

// CNN then GNN over one image's patches. Returns the graph with every
// feature stage populated; `global` holds the matching descriptors.
template <typename T>
KeypointGraph<T> encode_graph(const Model<T>& model, const Tensor<T>& patches, std::vector<Point2> positions,
                              ImageSize size) {
  KeypointGraph<T> g;
  g.positions = std::move(positions);
  g.image_size = size;
  g.visual = cnn_forward(patches, model.cnn);
  gnn_forward(g, model.gnn);
  return g;
}

}  // namespace kpg
