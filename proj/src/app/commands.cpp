// SPDX-License-Identifier: Apache-2.0
#include "volta/app/commands.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>

#include "volta/app/manifest.hpp"
#include "volta/cluster/morphometrics.hpp"
#include "volta/common/error.hpp"
#include "volta/common/log.hpp"
#include "volta/contrastive/contrastive.hpp"
#include "volta/embed/embed.hpp"
#include "volta/finetune/finetune.hpp"
#include "volta/ingest/io.hpp"
#include "volta/nets/model.hpp"
#include "volta/subtype/overlay.hpp"

namespace volta::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunManifest start(const std::string& command, const RunConfig& config, const Argv& argv) {
  torch::set_num_threads(config.workers);
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.config_hash = config.hash();
  m.config = config.to_json();
  m.started = utc_now();
  return m;
}

void finish(RunManifest& m, const fs::path& out_dir) {
  m.finished = utc_now();
  m.add_outputs(out_dir);
  m.save(out_dir);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
  if (!out) throw DataError("cannot write " + path.string());
}

std::string parent_config_hash(const fs::path& dir) {
  const auto path = fs::is_directory(dir) ? dir / kManifestName : dir.parent_path() / kManifestName;
  if (!fs::exists(path)) return {};
  return RunManifest::load(path).config_hash;
}

std::vector<std::size_t> store_rows(const ingest::RecordStore& store, const std::vector<std::string>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    const auto r = store.find(id);
    if (!r) throw DataError("cell " + id + " is not in the record store");
    rows.push_back(*r);
  }
  return rows;
}

}  // namespace

ingest::RecordStore cmd_extract(const fs::path& manifest, const RunConfig& config, const fs::path& out_dir,
                                const Argv& argv) {
  config.validate();
  auto m = start("extract", config, argv);
  const auto dataset = ingest::DatasetManifest::load(manifest);
  m.add_input(manifest);
  for (const auto& r : dataset.records) {
    m.add_input(r.image);
    m.add_input(r.mask);
    if (r.labels) m.add_input(*r.labels);
    if (r.ihc) m.add_input(*r.ihc);
  }
  auto store = ingest::build_dataset(dataset, config.ingest);
  store.save(out_dir);
  log::info("extracted " + std::to_string(store.size()) + " cells (" + std::to_string(store.skipped.size()) +
            " skipped) into " + out_dir.string());
  finish(m, out_dir);
  return store;
}

TrainSummary cmd_train(const fs::path& store_dir, const RunConfig& config, const fs::path& out_dir,
                       const Argv& argv) {
  config.validate();
  auto m = start("train", config, argv);
  const auto store = ingest::RecordStore::load(store_dir);
  m.add_input(store_dir);
  m.lineage["record_store"] = {{"path", store_dir.string()}, {"config_hash", parent_config_hash(store_dir)}};
  contrastive::TrainOptions opts;
  opts.hyper = config.hyperparams;
  opts.augment = config.augment;
  opts.model = config.model;
  opts.seed = config.seed;
  opts.workers = config.workers;
  opts.output_dir = out_dir;
  opts.config_hash = config.hash();
  opts.model_hash = config.model_hash();
  const auto result = contrastive::train(store, opts);
  write_json(out_dir / "config.json", config.to_json());
  finish(m, out_dir);
  return {result.checkpoints, result.epoch_means};
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  if (!fs::is_directory(path)) return path;
  std::vector<fs::path> found;
  const std::regex pattern(R"(checkpoint_e\d+\.pt)");
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && std::regex_match(e.path().filename().string(), pattern)) found.push_back(e.path());
  }
  if (found.empty()) throw DataError("no checkpoint_eNNNN.pt in " + path.string());
  return *std::max_element(found.begin(), found.end());
}

cluster::EmbeddingMatrix cmd_embed(const fs::path& checkpoint, const fs::path& store_dir,
                                   std::optional<ingest::Split> split, cluster::EmbeddingSource source,
                                   const std::string& layer, const RunConfig* expected, const fs::path& out_dir,
                                   const Argv& argv) {
  const RunConfig defaults;
  const RunConfig& config = expected != nullptr ? *expected : defaults;
  if (expected != nullptr) config.validate();
  auto m = start("embed", config, argv);
  const auto ckpt = resolve_checkpoint(checkpoint);
  nets::CheckpointMeta meta;
  auto model = nets::load_checkpoint(ckpt, &meta, expected != nullptr ? expected->model_hash() : "");
  if (expected == nullptr) m.config_hash = meta.config_hash;
  const auto store = ingest::RecordStore::load(store_dir);
  m.add_input(ckpt);
  m.add_input(store_dir);
  m.lineage["checkpoint"] = {{"path", ckpt.string()}, {"config_hash", meta.config_hash},
                             {"model_hash", meta.model_hash}, {"step", meta.step}};
  std::vector<std::size_t> rows;
  if (split) {
    rows = store.rows(*split);
  } else {
    rows.resize(store.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  }
  if (rows.empty()) throw DataError("no cells to embed");
  auto emb = embed::embed_cells(model, store, rows, source, layer, config.eval.batch_size);
  emb.save(out_dir);
  finish(m, out_dir);
  return emb;
}

cluster::ClusterAssignment cmd_cluster(const fs::path& embeddings_dir, const fs::path& store_dir, int k,
                                       const RunConfig& config, const fs::path& out_dir, const Argv& argv) {
  config.validate();
  auto m = start("cluster", config, argv);
  const auto emb = cluster::EmbeddingMatrix::load(embeddings_dir);
  const auto store = ingest::RecordStore::load(store_dir);
  m.add_input(embeddings_dir);
  m.add_input(store_dir);
  m.lineage["embeddings"] = {{"path", embeddings_dir.string()}, {"config_hash", parent_config_hash(embeddings_dir)}};
  const auto rows = store_rows(store, emb.cell_ids);
  if (k <= 0) {
    std::vector<std::string> labels;
    for (auto r : rows) {
      if (store.cells[r].label) labels.push_back(*store.cells[r].label);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    k = labels.empty() ? config.subtype.k : static_cast<int>(labels.size());
  }
  if (static_cast<std::size_t>(k) > emb.rows()) {
    throw ContractViolation("k=" + std::to_string(k) + " exceeds the " + std::to_string(emb.rows()) + " cells");
  }
  cluster::KMeansOptions opts;
  opts.k = k;
  opts.seed = config.seed;
  opts.n_init = config.eval.n_init;
  opts.max_iter = config.eval.max_iter;
  opts.workers = config.workers;
  const auto assignment = cluster::kmeans(emb.values, emb.rows(), emb.dim, opts);

  fs::create_directories(out_dir);
  std::vector<AssignmentRow> out_rows;
  std::vector<int> areas;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = store.cells[rows[i]];
    out_rows.push_back({c.cell_id, c.slide_id, c.centroid_row, c.centroid_col, assignment.labels[i]});
    areas.push_back(c.area);
  }
  write_assignments(out_dir / "assignments.csv", out_rows);
  std::vector<SlideRow> slides;
  for (const auto& s : store.slides) slides.push_back({s.slide_id, s.height, s.width, ""});
  write_slides(out_dir / "slides.csv", slides);
  write_json(out_dir / "cluster.json", {{"k", assignment.k},
                                        {"inertia", assignment.inertia},
                                        {"seed", assignment.seed},
                                        {"n", emb.rows()},
                                        {"source", cluster::to_string(emb.source)},
                                        {"layer", emb.layer}});
  std::ofstream morph(out_dir / "morphometrics.csv");
  morph << "cluster,count,mean,min,q1,median,q3,max\n";
  for (const auto& a : cluster::cluster_morphometrics(assignment.labels, areas)) {
    morph << a.cluster << ',' << a.count << ',' << a.mean << ',' << a.min << ',' << a.q1 << ',' << a.median << ','
          << a.q3 << ',' << a.max << '\n';
  }
  morph.close();
  finish(m, out_dir);
  return assignment;
}

cluster::MetricsReport cmd_eval(const fs::path& assignments, const fs::path& store_dir, const fs::path& out_dir,
                                const Argv& argv) {
  const RunConfig defaults;
  auto m = start("eval", defaults, argv);
  const auto rows = read_assignments(assignments);
  const auto store = ingest::RecordStore::load(store_dir);
  m.add_input(assignments);
  m.add_input(store_dir);
  m.config_hash = parent_config_hash(assignments);
  std::vector<int> predicted;
  std::vector<std::string> truth;
  for (const auto& r : rows) {
    const auto idx = store.find(r.cell_id);
    if (!idx) throw DataError("cell " + r.cell_id + " is not in the record store");
    if (!store.cells[*idx].label) continue;
    predicted.push_back(r.cluster);
    truth.push_back(*store.cells[*idx].label);
  }
  if (predicted.empty()) throw DataError("no labelled cells among the assignments");
  if (predicted.size() < rows.size()) {
    log::warn(std::to_string(rows.size() - predicted.size()) + " unlabelled cells left out of the evaluation");
  }
  const auto truth_ids = cluster::encode_labels(truth);
  const auto report = cluster::evaluate_clustering(predicted, truth_ids);
  auto classes = truth;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  fs::create_directories(out_dir);
  write_json(out_dir / "metrics.json", {{"ami", report.ami},
                                        {"ari", report.ari},
                                        {"purity", report.purity},
                                        {"n", report.n},
                                        {"k", report.k},
                                        {"classes", classes},
                                        {"clusters", report.table.a_ids},
                                        {"contingency", report.table.counts}});
  finish(m, out_dir);
  return report;
}

FinetuneReport cmd_finetune(const fs::path& checkpoint, const fs::path& store_dir, const RunConfig& config,
                            const fs::path& out_dir, const Argv& argv) {
  config.validate();
  auto m = start("finetune", config, argv);
  const auto ckpt = resolve_checkpoint(checkpoint);
  nets::CheckpointMeta meta;
  auto model = nets::load_checkpoint(ckpt, &meta, config.model_hash());
  const auto store = ingest::RecordStore::load(store_dir);
  m.add_input(ckpt);
  m.add_input(store_dir);
  m.lineage["checkpoint"] = {{"path", ckpt.string()}, {"config_hash", meta.config_hash}, {"step", meta.step}};
  const auto& ft = config.finetune;
  auto encoder = ft.source == cluster::EmbeddingSource::momentum_encoder ? model->momentum_encoder : model->backbone;
  FinetuneReport report;
  report.backbone_digest_before = nets::parameter_digest(*encoder);
  const auto train_rows = store.rows(ingest::Split::train);
  const auto test_rows = store.rows(ingest::Split::test);
  auto result = finetune::train_classifier(model, store, train_rows, ft);
  report.backbone_digest_after = nets::parameter_digest(*encoder);
  report.top1_train = result.train_accuracy;
  report.n_train = result.n_train;
  if (!test_rows.empty()) {
    report.top1_test = finetune::evaluate_top1(model, result, store, test_rows, ft.source);
    report.n_test = test_rows.size();
  }
  fs::create_directories(out_dir);
  torch::save(result.head, (out_dir / "head.pt").string());
  if (!ft.freeze_backbone) {
    nets::CheckpointMeta out_meta = meta;
    out_meta.config_hash = config.hash();
    nets::save_checkpoint(model, out_meta, out_dir / "finetuned.pt");
  }
  write_json(out_dir / "finetune.json", {{"top1_test", report.top1_test},
                                         {"top1_train", report.top1_train},
                                         {"n_train", report.n_train},
                                         {"n_test", report.n_test},
                                         {"label_fraction", ft.label_fraction},
                                         {"head_depth", ft.head_depth},
                                         {"freeze_backbone", ft.freeze_backbone},
                                         {"source", cluster::to_string(ft.source)},
                                         {"classes", result.class_names},
                                         {"epoch_losses", result.epoch_losses},
                                         {"backbone_digest_before", report.backbone_digest_before},
                                         {"backbone_digest_after", report.backbone_digest_after}});
  finish(m, out_dir);
  return report;
}

SubtypeOutcome cmd_subtype(const fs::path& assignments, const fs::path& slides, const RunConfig& config,
                           const fs::path& out_dir, const Argv& argv) {
  config.validate();
  auto m = start("subtype", config, argv);
  m.add_input(assignments);
  m.add_input(slides);
  auto outcome = run_subtype(read_assignments(assignments), read_slides(slides), config.subtype, config.seed);
  write_subtype_outputs(outcome, out_dir);
  finish(m, out_dir);
  return outcome;
}

synthetic::SyntheticSummary cmd_synthetic(const RunConfig& config, const fs::path& out_dir, const Argv& argv) {
  config.synthetic.validate();
  auto m = start("synthetic", config, argv);
  const auto summary = synthetic::generate(config.synthetic, out_dir);
  finish(m, out_dir);
  return summary;
}

fs::path cmd_overlay(const fs::path& store_dir, const fs::path& assignments, const std::string& slide_id,
                     double alpha, const fs::path& out_dir, const Argv& argv) {
  const RunConfig defaults;
  auto m = start("overlay", defaults, argv);
  m.config_hash = parent_config_hash(assignments);
  const auto store = ingest::RecordStore::load(store_dir);
  const auto it = std::find_if(store.slides.begin(), store.slides.end(),
                               [&](const ingest::SlideMeta& s) { return s.slide_id == slide_id; });
  if (it == store.slides.end()) throw DataError("slide '" + slide_id + "' is not in the record store");
  const auto image = ingest::read_rgb(it->image_path);
  const auto mask = ingest::read_mask(it->mask_path, image.rows, image.cols);
  m.add_input(it->image_path);
  m.add_input(it->mask_path);
  m.add_input(assignments);
  std::map<std::string, int> cluster_of;
  for (const auto& r : read_assignments(assignments)) cluster_of[r.cell_id] = r.cluster;
  std::vector<ingest::CellInstance> drawn;
  std::vector<int> clusters;
  for (auto& inst : ingest::instances_from_labels(mask.labels, slide_id)) {
    const auto c = cluster_of.find(inst.cell_id);
    if (c == cluster_of.end()) continue;
    clusters.push_back(c->second);
    drawn.push_back(std::move(inst));
  }
  const auto overlay = subtype::render_overlay(image, drawn, clusters, subtype::default_palette(), alpha);
  fs::create_directories(out_dir);
  const auto path = out_dir / ("overlay_" + slide_id + ".png");
  ingest::write_rgb(path, overlay);
  finish(m, out_dir);
  return path;
}

}  // namespace volta::app
