// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace volta::cluster {

enum class EmbeddingSource { momentum_encoder, backbone };

EmbeddingSource parse_embedding_source(const std::string& name);
std::string to_string(EmbeddingSource source);

/// n x dim row-major float matrix of per-cell representations.
/// On disk: embeddings.bin (float32) + index.json.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<std::string> cell_ids;
  EmbeddingSource source = EmbeddingSource::momentum_encoder;
  std::string layer = "features";  // "features" (backbone output) or "projection"

  [[nodiscard]] std::size_t rows() const { return cell_ids.size(); }
  [[nodiscard]] std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  /// Throws ContractViolation on shape mismatch, non-finite values or
  /// duplicate cell ids.
  void validate() const;

  void save(const std::filesystem::path& dir) const;
  static EmbeddingMatrix load(const std::filesystem::path& dir);
};

}  // namespace volta::cluster
