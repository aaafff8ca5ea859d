// SPDX-License-Identifier: Apache-2.0
#include "volta/nets/spec.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

#include "volta/common/error.hpp"

namespace volta::nets {

using nlohmann::json;

void EncoderSpec::validate() const {
  if (arch != "convnet4" && arch != "preact_resnet18" && arch != "lambda_net" && arch != "mlp") {
    throw ConfigError("unknown encoder architecture '" + arch + "'");
  }
  if (input_size < 1 || in_channels < 1 || output_dim < 1) {
    throw ConfigError("encoder sizes must be positive");
  }
  if (widths.empty() || std::any_of(widths.begin(), widths.end(), [](int w) { return w < 1; })) {
    throw ConfigError("encoder widths must be a non-empty list of positive integers");
  }
  if (arch == "preact_resnet18" && widths.size() != 4) {
    throw ConfigError("preact_resnet18 needs exactly 4 stage widths");
  }
  if (arch == "lambda_net") {
    for (std::size_t i = 1; i < widths.size(); ++i) {
      if (widths[i] % 4 != 0) throw ConfigError("lambda_net widths after the stem must be divisible by 4 heads");
    }
  }
  if (groups < 1) throw ConfigError("GroupNorm groups must be >= 1");
}

void ModelSpec::validate() const {
  cell.validate();
  if (with_env) env.validate();
  if (proj_hidden < 1 || proj_dim < 1 || pred_hidden < 1 || env_hidden < 1) {
    throw ConfigError("head widths must be positive");
  }
}

namespace {

json encoder_json(const EncoderSpec& e) {
  return {{"arch", e.arch},           {"input_size", e.input_size}, {"in_channels", e.in_channels},
          {"output_dim", e.output_dim}, {"widths", e.widths},         {"groups", e.groups}};
}

EncoderSpec encoder_from(const json& j) {
  EncoderSpec e;
  e.arch = j.at("arch").get<std::string>();
  e.input_size = j.at("input_size").get<int>();
  e.in_channels = j.at("in_channels").get<int>();
  e.output_dim = j.at("output_dim").get<int>();
  e.widths = j.at("widths").get<std::vector<int>>();
  e.groups = j.at("groups").get<int>();
  return e;
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec) {
  const json j = {{"cell", encoder_json(spec.cell)},   {"env", encoder_json(spec.env)},
                  {"proj_hidden", spec.proj_hidden}, {"proj_dim", spec.proj_dim},
                  {"pred_hidden", spec.pred_hidden}, {"env_hidden", spec.env_hidden},
                  {"with_env", spec.with_env}};
  return j.dump();
}

ModelSpec spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelSpec s;
    s.cell = encoder_from(j.at("cell"));
    s.env = encoder_from(j.at("env"));
    s.proj_hidden = j.at("proj_hidden").get<int>();
    s.proj_dim = j.at("proj_dim").get<int>();
    s.pred_hidden = j.at("pred_hidden").get<int>();
    s.env_hidden = j.at("env_hidden").get<int>();
    s.with_env = j.at("with_env").get<bool>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model spec: ") + e.what());
  }
}

}  // namespace volta::nets
