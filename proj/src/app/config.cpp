// SPDX-License-Identifier: Apache-2.0
#include "volta/app/config.hpp"

#include <toml++/toml.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "volta/common/digest.hpp"
#include "volta/common/error.hpp"

namespace volta::app {

using nlohmann::json;

namespace {

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("unsupported TOML value type (dates and times are not accepted)");
}

/// Reads keys of one table and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(where() + " must be a table");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      const auto& v = doc_.at(key);
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      }
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  void range(const char* key, augment::Range& out) {
    std::vector<double> v{out.first, out.second};
    get(key, v);
    if (v.size() != 2) throw ConfigError(where(key) + " must be a [low, high] pair");
    out = {v[0], v[1]};
  }

  [[nodiscard]] bool has(const char* key) const { return doc_.contains(key); }

  Section sub(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    return {doc_.contains(key) ? doc_.at(key) : empty, where(key)};
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return doc_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : doc_.items()) {
      if (!used_.contains(k)) throw ConfigError("unknown configuration key " + where(k.c_str()));
    }
  }

 private:
  [[nodiscard]] std::string where(const char* key = nullptr) const {
    std::string p = path_.empty() ? "" : path_;
    if (key != nullptr) p += (p.empty() ? "" : ".") + std::string(key);
    return p.empty() ? "<root>" : "'" + p + "'";
  }

  const json& doc_;
  std::string path_;
  std::set<std::string> used_;
};

json encoder_to_json(const nets::EncoderSpec& e) {
  return {{"arch", e.arch},           {"input_size", e.input_size}, {"in_channels", e.in_channels},
          {"output_dim", e.output_dim}, {"widths", e.widths},         {"groups", e.groups}};
}

void read_encoder(Section s, nets::EncoderSpec& e) {
  s.get("arch", e.arch);
  s.get("input_size", e.input_size);
  s.get("in_channels", e.in_channels);
  s.get("output_dim", e.output_dim);
  s.get("widths", e.widths);
  s.get("groups", e.groups);
  s.finish();
}

std::string fill_name(ingest::FillMode f) { return f == ingest::FillMode::zero ? "zero" : "dataset_mean"; }

ingest::FillMode parse_fill(const std::string& s) {
  if (s == "zero") return ingest::FillMode::zero;
  if (s == "dataset_mean") return ingest::FillMode::dataset_mean;
  throw ConfigError("unknown fill mode '" + s + "' (dataset_mean, zero)");
}

std::string aggregation_name(subtype::SlideAggregation a) {
  return a == subtype::SlideAggregation::sum_counts ? "sum_counts" : "mean_distribution";
}

}  // namespace

json RunConfig::to_json() const {
  json ingest_j = {{"window_scale", ingest.window_scale},
                   {"crop_size", ingest.crop_size},
                   {"env_size", ingest.env_size},
                   {"env_input_size", ingest.env_input_size},
                   {"mask_policy", ingest::to_string(ingest.mask_policy)},
                   {"fill", fill_name(ingest.fill)},
                   {"label_map", ingest.label_map},
                   {"preprocess_hook", ingest.preprocess_hook}};
  if (ingest.ihc) {
    json markers = json::array();
    for (const auto& b : ingest.ihc->decoder.biomarkers) {
      markers.push_back({{"name", b.name},
                         {"channel", b.channel},
                         {"positive_threshold", b.positive_threshold},
                         {"invert", b.invert}});
    }
    ingest_j["ihc"] = {{"window_factor", ingest.ihc->window_factor},
                       {"dominance_threshold", ingest.ihc->dominance_threshold},
                       {"biomarkers", markers}};
  }
  if (ingest.normalization) {
    ingest_j["normalization"] = {{"mean", ingest.normalization->mean}, {"std", ingest.normalization->std}};
  }
  const auto& a = augment;
  json augment_j = {
      {"jitter",
       {{"brightness", a.jitter.brightness},
        {"contrast", a.jitter.contrast},
        {"saturation", a.jitter.saturation},
        {"hue", a.jitter.hue}}},
      {"blur_sigma", {a.blur_sigma.first, a.blur_sigma.second}},
      {"blur_kernel_fraction", a.blur_kernel_fraction},
      {"rotation_degrees", {a.rotation_degrees.first, a.rotation_degrees.second}},
      {"crop_scale", {a.crop_scale.first, a.crop_scale.second}},
      {"crop_ratio", {a.crop_ratio.first, a.crop_ratio.second}},
      {"p_jitter", a.p_jitter},
      {"p_grayscale", a.p_grayscale},
      {"p_blur", a.p_blur},
      {"p_hflip", a.p_hflip},
      {"p_vflip", a.p_vflip},
      {"p_rotation", a.p_rotation},
      {"multi_crop", a.multi_crop}};
  json model_j = {{"cell", encoder_to_json(model.cell)},   {"env", encoder_to_json(model.env)},
                  {"proj_hidden", model.proj_hidden}, {"proj_dim", model.proj_dim},
                  {"pred_hidden", model.pred_hidden}, {"env_hidden", model.env_hidden},
                  {"with_env", model.with_env}};
  const auto& h = hyperparams;
  json hyper_j = {{"tau", h.tau},           {"lambda", h.lambda},         {"momentum", h.momentum},
                  {"batch_size", h.batch_size}, {"queue_size", h.queue_size}, {"epochs", h.epochs},
                  {"warmup_epochs", h.warmup_epochs}, {"lr", h.lr},     {"weight_decay", h.weight_decay}};
  json eval_j = {{"k", eval.k},
                 {"n_init", eval.n_init},
                 {"max_iter", eval.max_iter},
                 {"source", cluster::to_string(eval.source)},
                 {"layer", eval.layer},
                 {"batch_size", eval.batch_size}};
  const auto& f = finetune;
  json finetune_j = {{"head_depth", f.head_depth},       {"hidden", f.hidden},
                     {"freeze_backbone", f.freeze_backbone}, {"label_fraction", f.label_fraction},
                     {"epochs", f.epochs},               {"batch_size", f.batch_size},
                     {"lr", f.lr},                       {"backbone_lr", f.backbone_lr},
                     {"weight_decay", f.weight_decay},   {"momentum", f.momentum},
                     {"source", cluster::to_string(f.source)}};
  json names = json::object();
  for (const auto& [id, name] : subtype.cluster_names) names[std::to_string(id)] = name;
  json subtype_j = {{"patch_size", subtype.patch_size},     {"groups", subtype.groups},
                    {"per_group", subtype.per_group},       {"k", subtype.k},
                    {"pca_variance", subtype.pca_variance}, {"n_flat", subtype.n_flat},
                    {"aggregation", aggregation_name(subtype.aggregation)}, {"cluster_names", names}};
  const auto& s = synthetic;
  json synthetic_j = {{"variant", synthetic::to_string(s.variant)},
                      {"n_train", s.n_train},
                      {"n_test", s.n_test},
                      {"image_size", s.image_size},
                      {"cells_per_image", s.cells_per_image},
                      {"texture_match", s.texture_match},
                      {"n_slides", s.n_slides},
                      {"slide_size", s.slide_size},
                      {"cells_per_slide", s.cells_per_slide},
                      {"clusters", s.clusters}};
  return {{"seed", seed},
          {"output_dir", output_dir},
          {"workers", workers},
          {"ingest", ingest_j},
          {"augment", augment_j},
          {"model", model_j},
          {"hyperparams", hyper_j},
          {"eval", eval_j},
          {"finetune", finetune_j},
          {"subtype", subtype_j},
          {"synthetic", synthetic_j}};
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.get("workers", c.workers);
  {
    auto s = root.sub("ingest");
    auto& in = c.ingest;
    s.get("window_scale", in.window_scale);
    s.get("crop_size", in.crop_size);
    s.get("env_size", in.env_size);
    s.get("env_input_size", in.env_input_size);
    std::string policy = ingest::to_string(in.mask_policy);
    s.get("mask_policy", policy);
    in.mask_policy = ingest::parse_mask_policy(policy);
    std::string fill = fill_name(in.fill);
    s.get("fill", fill);
    in.fill = parse_fill(fill);
    s.get("label_map", in.label_map);
    s.get("preprocess_hook", in.preprocess_hook);
    if (s.has("ihc")) {
      auto ih = s.sub("ihc");
      ingest::IhcConfig cfg;
      ih.get("window_factor", cfg.window_factor);
      ih.get("dominance_threshold", cfg.dominance_threshold);
      if (ih.has("biomarkers")) {
        const auto& list = ih.raw("biomarkers");
        if (!list.is_array()) throw ConfigError("'ingest.ihc.biomarkers' must be an array of tables");
        for (const auto& item : list) {
          Section b(item, "ingest.ihc.biomarkers");
          ingest::BiomarkerChannel ch;
          b.get("name", ch.name);
          b.get("channel", ch.channel);
          b.get("positive_threshold", ch.positive_threshold);
          b.get("invert", ch.invert);
          b.finish();
          cfg.decoder.biomarkers.push_back(ch);
        }
      }
      ih.finish();
      in.ihc = cfg;
    }
    if (s.has("normalization")) {
      auto ns = s.sub("normalization");
      ingest::Normalization n;
      ns.get("mean", n.mean);
      ns.get("std", n.std);
      ns.finish();
      n.defined = true;
      in.normalization = n;
    }
    s.finish();
  }
  {
    auto s = root.sub("augment");
    auto& a = c.augment;
    auto j = s.sub("jitter");
    j.get("brightness", a.jitter.brightness);
    j.get("contrast", a.jitter.contrast);
    j.get("saturation", a.jitter.saturation);
    j.get("hue", a.jitter.hue);
    j.finish();
    s.range("blur_sigma", a.blur_sigma);
    s.get("blur_kernel_fraction", a.blur_kernel_fraction);
    s.range("rotation_degrees", a.rotation_degrees);
    s.range("crop_scale", a.crop_scale);
    s.range("crop_ratio", a.crop_ratio);
    s.get("p_jitter", a.p_jitter);
    s.get("p_grayscale", a.p_grayscale);
    s.get("p_blur", a.p_blur);
    s.get("p_hflip", a.p_hflip);
    s.get("p_vflip", a.p_vflip);
    s.get("p_rotation", a.p_rotation);
    s.get("multi_crop", a.multi_crop);
    s.finish();
  }
  {
    auto s = root.sub("model");
    auto& m = c.model;
    read_encoder(s.sub("cell"), m.cell);
    read_encoder(s.sub("env"), m.env);
    s.get("proj_hidden", m.proj_hidden);
    s.get("proj_dim", m.proj_dim);
    s.get("pred_hidden", m.pred_hidden);
    s.get("env_hidden", m.env_hidden);
    s.get("with_env", m.with_env);
    s.finish();
  }
  {
    auto s = root.sub("hyperparams");
    auto& h = c.hyperparams;
    s.get("tau", h.tau);
    s.get("lambda", h.lambda);
    s.get("momentum", h.momentum);
    s.get("batch_size", h.batch_size);
    s.get("queue_size", h.queue_size);
    s.get("epochs", h.epochs);
    s.get("warmup_epochs", h.warmup_epochs);
    s.get("lr", h.lr);
    s.get("weight_decay", h.weight_decay);
    s.finish();
  }
  {
    auto s = root.sub("eval");
    auto& e = c.eval;
    s.get("k", e.k);
    s.get("n_init", e.n_init);
    s.get("max_iter", e.max_iter);
    std::string source = cluster::to_string(e.source);
    s.get("source", source);
    e.source = cluster::parse_embedding_source(source);
    s.get("layer", e.layer);
    s.get("batch_size", e.batch_size);
    s.finish();
  }
  {
    auto s = root.sub("finetune");
    auto& f = c.finetune;
    s.get("head_depth", f.head_depth);
    s.get("hidden", f.hidden);
    s.get("freeze_backbone", f.freeze_backbone);
    s.get("label_fraction", f.label_fraction);
    s.get("epochs", f.epochs);
    s.get("batch_size", f.batch_size);
    s.get("lr", f.lr);
    s.get("backbone_lr", f.backbone_lr);
    s.get("weight_decay", f.weight_decay);
    s.get("momentum", f.momentum);
    std::string source = cluster::to_string(f.source);
    s.get("source", source);
    f.source = cluster::parse_embedding_source(source);
    s.finish();
  }
  {
    auto s = root.sub("subtype");
    auto& t = c.subtype;
    s.get("patch_size", t.patch_size);
    s.get("groups", t.groups);
    s.get("per_group", t.per_group);
    s.get("k", t.k);
    s.get("pca_variance", t.pca_variance);
    s.get("n_flat", t.n_flat);
    std::string agg = aggregation_name(t.aggregation);
    s.get("aggregation", agg);
    t.aggregation = subtype::parse_slide_aggregation(agg);
    std::map<std::string, std::string> names;
    s.get("cluster_names", names);
    for (const auto& [id, name] : names) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(id, &used);
        if (used != id.size()) throw std::invalid_argument(id);
        t.cluster_names[v] = name;
      } catch (const std::exception&) {
        throw ConfigError("'subtype.cluster_names' keys must be cluster ids, got '" + id + "'");
      }
    }
    s.finish();
  }
  {
    auto s = root.sub("synthetic");
    auto& y = c.synthetic;
    std::string variant = synthetic::to_string(y.variant);
    s.get("variant", variant);
    y.variant = synthetic::parse_variant(variant);
    s.get("n_train", y.n_train);
    s.get("n_test", y.n_test);
    s.get("image_size", y.image_size);
    s.get("cells_per_image", y.cells_per_image);
    s.get("texture_match", y.texture_match);
    s.get("n_slides", y.n_slides);
    s.get("slide_size", y.slide_size);
    s.get("cells_per_slide", y.cells_per_slide);
    s.get("clusters", y.clusters);
    s.finish();
  }
  root.finish();
  c.set_workers(c.workers);
  c.set_seed(c.seed);
  return c;
}

RunConfig RunConfig::from_toml(const std::string& text) {
  try {
    const auto table = toml::parse(text);
    return from_json(toml_to_json(table));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "invalid TOML at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      return from_json(json::parse(buf.str()));
    } catch (const json::parse_error& e) {
      throw ConfigError("invalid JSON configuration " + path.string() + ": " + e.what());
    }
  }
  return from_toml(buf.str());
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  finetune.seed = value;
  synthetic.seed = value;
}

void RunConfig::set_workers(int value) {
  workers = value;
  ingest.workers = value;
}

std::string RunConfig::hash() const {
  auto doc = to_json();
  doc.erase("output_dir");
  doc.erase("workers");
  return sha256_hex(std::string_view(doc.dump()));
}

std::string RunConfig::model_hash() const { return sha256_hex(std::string_view(nets::spec_to_json(model))); }

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  augment.validate();
  model.validate();
  hyperparams.validate();
  finetune.validate();
  if (ingest.crop_size != model.cell.input_size) {
    throw ConfigError("ingest.crop_size must equal model.cell.input_size");
  }
  if (model.with_env && ingest.env_input_size != model.env.input_size) {
    throw ConfigError("ingest.env_input_size must equal model.env.input_size");
  }
  if (ingest.env_size < 1 || ingest.env_input_size < 1 || ingest.crop_size < 1 || !(ingest.window_scale > 0.0)) {
    throw ConfigError("ingest sizes must be positive");
  }
  if (eval.k < 0 || eval.n_init < 1 || eval.max_iter < 1 || eval.batch_size < 1) {
    throw ConfigError("eval.k must be >= 0 and n_init, max_iter, batch_size >= 1");
  }
  if (eval.layer != "features" && eval.layer != "projection") {
    throw ConfigError("eval.layer must be 'features' or 'projection'");
  }
  if (subtype.patch_size < 1 || subtype.groups < 1 || subtype.per_group < 1 || subtype.k < 1 || subtype.n_flat < 1) {
    throw ConfigError("subtype sizes and counts must be >= 1");
  }
  if (!(subtype.pca_variance > 0.0 && subtype.pca_variance <= 1.0)) {
    throw ConfigError("subtype.pca_variance must be in (0, 1]");
  }
  synthetic.validate();
}

}  // namespace volta::app
