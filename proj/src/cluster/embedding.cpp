// SPDX-License-Identifier: Apache-2.0
#include "volta/cluster/embedding.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "volta/common/error.hpp"

namespace volta::cluster {

namespace fs = std::filesystem;
using nlohmann::json;

EmbeddingSource parse_embedding_source(const std::string& name) {
  if (name == "momentum_encoder" || name == "momentum") return EmbeddingSource::momentum_encoder;
  if (name == "backbone") return EmbeddingSource::backbone;
  throw ConfigError("unknown embedding source '" + name + "' (expected momentum_encoder or backbone)");
}

std::string to_string(EmbeddingSource source) {
  return source == EmbeddingSource::backbone ? "backbone" : "momentum_encoder";
}

void EmbeddingMatrix::validate() const {
  require(values.size() == rows() * dim, "embedding matrix size does not match rows x dim");
  for (float v : values) require(std::isfinite(v), "embedding matrix contains non-finite values");
  std::unordered_set<std::string> seen;
  for (const auto& id : cell_ids) require(seen.insert(id).second, "duplicate cell id " + id);
}

void EmbeddingMatrix::save(const fs::path& dir) const {
  validate();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "embeddings.bin", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "embeddings.bin").string());
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  json index{{"format_version", 1},
             {"n", rows()},
             {"dim", dim},
             {"source", to_string(source)},
             {"layer", layer},
             {"cell_ids", cell_ids}};
  std::ofstream out(dir / "index.json");
  if (!out) throw DataError("cannot write " + (dir / "index.json").string());
  out << index.dump(1) << '\n';
}

EmbeddingMatrix EmbeddingMatrix::load(const fs::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw DataError("embedding index not found: " + (dir / "index.json").string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw DataError("cannot parse embedding index: " + std::string(e.what()));
  }
  EmbeddingMatrix m;
  m.dim = index.at("dim").get<std::size_t>();
  m.source = parse_embedding_source(index.at("source").get<std::string>());
  m.layer = index.value("layer", std::string("features"));
  m.cell_ids = index.at("cell_ids").get<std::vector<std::string>>();
  m.values.resize(m.rows() * m.dim);
  std::ifstream bin(dir / "embeddings.bin", std::ios::binary);
  if (!bin) throw DataError("embeddings.bin not found in " + dir.string());
  bin.read(reinterpret_cast<char*>(m.values.data()),
           static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (bin.gcount() != static_cast<std::streamsize>(m.values.size() * sizeof(float))) {
    throw DataError("embeddings.bin is shorter than index.json declares");
  }
  m.validate();
  return m;
}

}  // namespace volta::cluster
