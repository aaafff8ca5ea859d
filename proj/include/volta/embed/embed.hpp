// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "volta/cluster/embedding.hpp"
#include "volta/ingest/record_store.hpp"
#include "volta/nets/model.hpp"

namespace volta::embed {

/// Stacks the unaugmented normalised crops of `rows` into (n, 3, S, S).
torch::Tensor crop_tensor(const ingest::RecordStore& store, const std::vector<std::size_t>& rows);

/// Encoder outputs for the given crops in evaluation mode without autograd.
/// layer "features" gives the encoder output, "projection" the matching
/// projector output (key projector for the momentum encoder).
torch::Tensor encode(nets::ModelBundle& model, const torch::Tensor& crops, cluster::EmbeddingSource source,
                     const std::string& layer);

cluster::EmbeddingMatrix embed_cells(nets::ModelBundle& model, const ingest::RecordStore& store,
                                     const std::vector<std::size_t>& rows, cluster::EmbeddingSource source,
                                     const std::string& layer = "features", int batch_size = 256);

}  // namespace volta::embed
