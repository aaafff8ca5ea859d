// SPDX-License-Identifier: Apache-2.0
#include "volta/embed/embed.hpp"

#include <algorithm>

#include "volta/common/error.hpp"

namespace volta::embed {

torch::Tensor crop_tensor(const ingest::RecordStore& store, const std::vector<std::size_t>& rows) {
  std::vector<const float*> ptrs;
  ptrs.reserve(rows.size());
  for (auto r : rows) {
    require(r < store.size(), "crop row out of range");
    ptrs.push_back(store.crop(r).data());
  }
  return nets::images_to_tensor(ptrs, store.crop_size, 3);
}

torch::Tensor encode(nets::ModelBundle& model, const torch::Tensor& crops, cluster::EmbeddingSource source,
                     const std::string& layer) {
  require(layer == "features" || layer == "projection", "layer must be 'features' or 'projection'");
  torch::NoGradGuard no_grad;
  model->eval();
  const bool momentum = source == cluster::EmbeddingSource::momentum_encoder;
  auto features = momentum ? model->momentum_features(crops) : model->backbone_features(crops);
  if (layer == "projection") {
    features = momentum ? model->key_projector->forward(features) : model->query_projector->forward(features);
  }
  return features;
}

cluster::EmbeddingMatrix embed_cells(nets::ModelBundle& model, const ingest::RecordStore& store,
                                     const std::vector<std::size_t>& rows, cluster::EmbeddingSource source,
                                     const std::string& layer, int batch_size) {
  require(batch_size >= 1, "batch_size must be >= 1");
  cluster::EmbeddingMatrix out;
  out.source = source;
  out.layer = layer;
  out.dim = static_cast<std::size_t>(layer == "features" ? model->spec().cell.output_dim : model->spec().proj_dim);
  out.values.reserve(rows.size() * out.dim);
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < rows.size(); begin += bs) {
    const std::vector<std::size_t> chunk(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                         rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), begin + bs)));
    const auto f = encode(model, crop_tensor(store, chunk), source, layer).to(torch::kFloat32).contiguous();
    const float* p = f.data_ptr<float>();
    out.values.insert(out.values.end(), p, p + f.numel());
  }
  for (auto r : rows) out.cell_ids.push_back(store.cells[r].cell_id);
  out.validate();
  return out;
}

}  // namespace volta::embed
