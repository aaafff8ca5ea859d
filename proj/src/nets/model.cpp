// SPDX-License-Identifier: Apache-2.0
#include "volta/nets/model.hpp"

#include <algorithm>
#include <cstring>

#include "volta/common/digest.hpp"
#include "volta/common/error.hpp"

namespace volta::nets {

ModelBundleImpl::ModelBundleImpl(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int feat = spec_.cell.output_dim;
  backbone = register_module("backbone", make_encoder(spec_.cell));
  query_projector = register_module("query_projector", Mlp(feat, spec_.proj_hidden, spec_.proj_dim));
  predictor = register_module("predictor", Mlp(spec_.proj_dim, spec_.pred_hidden, spec_.proj_dim));
  momentum_encoder = register_module("momentum_encoder", make_encoder(spec_.cell));
  key_projector = register_module("key_projector", Mlp(feat, spec_.proj_hidden, spec_.proj_dim));
  if (spec_.with_env) {
    env_encoder = register_module("env_encoder", make_encoder(spec_.env));
    env_projector =
        register_module("env_projector", Mlp(spec_.env.output_dim, spec_.env_hidden, spec_.proj_dim));
    cell_env_head = register_module("cell_env_head", Mlp(feat, spec_.proj_hidden, spec_.proj_dim));
  }
  for (auto& p : momentum_encoder->parameters()) p.set_requires_grad(false);
  for (auto& p : key_projector->parameters()) p.set_requires_grad(false);
  sync_momentum();
}

void check_input(const torch::Tensor& x, const EncoderSpec& spec, const char* what) {
  require(x.dim() == 4 && x.size(1) == spec.in_channels && x.size(2) == spec.input_size &&
              x.size(3) == spec.input_size,
          std::string(what) + ": expected (N, " + std::to_string(spec.in_channels) + ", " +
              std::to_string(spec.input_size) + ", " + std::to_string(spec.input_size) + ") input");
}

ModelBundleImpl::QueryOutput ModelBundleImpl::forward_query(const torch::Tensor& views) {
  check_input(views, spec_.cell, "forward_query");
  QueryOutput out;
  out.features = backbone->forward(views);
  out.z = predictor->forward(query_projector->forward(out.features));
  return out;
}

torch::Tensor ModelBundleImpl::forward_key(const torch::Tensor& views) {
  check_input(views, spec_.cell, "forward_key");
  torch::NoGradGuard no_grad;
  return key_projector->forward(momentum_encoder->forward(views));
}

torch::Tensor ModelBundleImpl::momentum_features(const torch::Tensor& views) {
  check_input(views, spec_.cell, "momentum_features");
  torch::NoGradGuard no_grad;
  return momentum_encoder->forward(views);
}

torch::Tensor ModelBundleImpl::backbone_features(const torch::Tensor& views) {
  check_input(views, spec_.cell, "backbone_features");
  return backbone->forward(views);
}

torch::Tensor ModelBundleImpl::forward_env(const torch::Tensor& env_views) {
  require(spec_.with_env, "model was built without the environment branch");
  check_input(env_views, spec_.env, "forward_env");
  return env_projector->forward(env_encoder->forward(env_views));
}

torch::Tensor ModelBundleImpl::project_cell_for_env(const torch::Tensor& features) {
  require(spec_.with_env, "model was built without the environment branch");
  require(features.dim() == 2 && features.size(1) == spec_.cell.output_dim,
          "project_cell_for_env: expected (N, " + std::to_string(spec_.cell.output_dim) + ") features");
  return cell_env_head->forward(features);
}

namespace {

void pair_tensors(const torch::nn::Module& q, const torch::nn::Module& k, const std::string& qname,
                  const std::string& kname,
                  std::vector<std::pair<std::string, std::pair<torch::Tensor, torch::Tensor>>>& out) {
  const auto qp = q.named_parameters(true);
  const auto kp = k.named_parameters(true);
  require(qp.size() == kp.size(), "momentum update: " + qname + " and " + kname + " differ in structure");
  for (std::size_t i = 0; i < qp.size(); ++i) {
    const auto& a = qp[i];
    const auto& b = kp[i];
    require(a.key() == b.key() && a.value().sizes() == b.value().sizes(),
            "momentum update: parameter " + a.key() + " has no matching counterpart");
    out.push_back({qname + "." + a.key(), {a.value(), b.value()}});
  }
  const auto qb = q.named_buffers(true);
  const auto kb = k.named_buffers(true);
  require(qb.size() == kb.size(), "momentum update: " + qname + " and " + kname + " differ in buffers");
  for (std::size_t i = 0; i < qb.size(); ++i) {
    require(qb[i].key() == kb[i].key() && qb[i].value().sizes() == kb[i].value().sizes(),
            "momentum update: buffer " + qb[i].key() + " has no matching counterpart");
    out.push_back({qname + "." + qb[i].key(), {qb[i].value(), kb[i].value()}});
  }
}

}  // namespace

std::vector<std::pair<std::string, std::pair<torch::Tensor, torch::Tensor>>> ModelBundleImpl::momentum_pairs() const {
  std::vector<std::pair<std::string, std::pair<torch::Tensor, torch::Tensor>>> out;
  pair_tensors(*backbone, *momentum_encoder, "backbone", "momentum_encoder", out);
  pair_tensors(*query_projector, *key_projector, "query_projector", "key_projector", out);
  return out;
}

void ModelBundleImpl::momentum_update(double m) {
  require(m >= 0.0 && m <= 1.0, "momentum must be in [0, 1]");
  torch::NoGradGuard no_grad;
  for (auto& [name, pair] : momentum_pairs()) {
    auto& [q, k] = pair;
    if (!k.is_floating_point()) {
      k.copy_(q);
      continue;
    }
    k.mul_(m).add_(q, 1.0 - m);
  }
}

void ModelBundleImpl::sync_momentum() {
  torch::NoGradGuard no_grad;
  for (auto& [name, pair] : momentum_pairs()) pair.second.copy_(pair.first);
}

std::vector<torch::Tensor> ModelBundleImpl::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  auto add = [&out](const torch::nn::Module& m) {
    for (const auto& p : m.parameters()) out.push_back(p);
  };
  add(*backbone);
  add(*query_projector);
  add(*predictor);
  if (spec_.with_env) {
    add(*env_encoder);
    add(*env_projector);
    add(*cell_env_head);
  }
  return out;
}

void save_checkpoint(const ModelBundle& bundle, const CheckpointMeta& meta, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  bundle->save(archive);
  archive.write("meta.step", c10::IValue(meta.step));
  archive.write("meta.epoch", c10::IValue(meta.epoch));
  archive.write("meta.config_hash", c10::IValue(meta.config_hash));
  archive.write("meta.model_hash", c10::IValue(meta.model_hash));
  archive.write("meta.spec", c10::IValue(spec_to_json(bundle->spec())));
  const auto tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp);
  } catch (const c10::Error& e) {
    throw DataError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot write checkpoint " + path.string() + ": " + ec.message());
}

namespace {

CheckpointMeta read_meta(torch::serialize::InputArchive& archive) {
  CheckpointMeta meta;
  c10::IValue v;
  archive.read("meta.step", v);
  meta.step = v.toInt();
  archive.read("meta.epoch", v);
  meta.epoch = v.toInt();
  archive.read("meta.config_hash", v);
  meta.config_hash = v.toStringRef();
  archive.read("meta.model_hash", v);
  meta.model_hash = v.toStringRef();
  archive.read("meta.spec", v);
  meta.spec_json = v.toStringRef();
  return meta;
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  return read_meta(archive);
}

ModelBundle load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta_out,
                            const std::string& expected_model_hash) {
  auto archive = open_archive(path);
  const CheckpointMeta meta = read_meta(archive);
  if (!expected_model_hash.empty() && meta.model_hash != expected_model_hash) {
    throw ConfigError("checkpoint " + path.string() + " was trained with model configuration " +
                      meta.model_hash + " but the current configuration hashes to " + expected_model_hash);
  }
  ModelBundle bundle(spec_from_json(meta.spec_json));
  try {
    bundle->load(archive);
  } catch (const c10::Error& e) {
    throw DataError("checkpoint " + path.string() + " does not match its model spec: " + e.what_without_backtrace());
  }
  if (meta_out != nullptr) *meta_out = meta;
  return bundle;
}

std::string parameter_digest(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> named;
  for (const auto& p : module.named_parameters(true)) named.emplace_back(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) named.emplace_back(b.key(), b.value());
  std::sort(named.begin(), named.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string bytes;
  for (const auto& [name, t] : named) {
    const auto c = t.detach().contiguous().cpu();
    bytes += name;
    bytes.push_back('\0');
    bytes.append(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
  }
  return sha256_hex(std::string_view(bytes));
}

torch::Tensor images_to_tensor(const std::vector<const float*>& rows, int side, int channels) {
  const auto n = static_cast<std::int64_t>(rows.size());
  const std::size_t per = static_cast<std::size_t>(side) * side * channels;
  auto t = torch::empty({n, side, side, channels}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (std::int64_t i = 0; i < n; ++i) std::memcpy(dst + i * per, rows[static_cast<std::size_t>(i)], per * sizeof(float));
  return t.permute({0, 3, 1, 2}).contiguous();
}

}  // namespace volta::nets
