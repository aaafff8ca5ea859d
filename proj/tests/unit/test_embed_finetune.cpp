// SPDX-License-Identifier: Apache-2.0
#include "support/torch_doctest.hpp"

#include <map>
#include <numeric>
#include <random>

#include "support/toy_model.hpp"
#include "support/toy_store.hpp"
#include "volta/common/error.hpp"
#include "volta/contrastive/contrastive.hpp"
#include "volta/embed/embed.hpp"
#include "volta/finetune/finetune.hpp"

using namespace volta;
using cluster::EmbeddingSource;

namespace {

std::vector<std::size_t> all_rows(const ingest::RecordStore& s) {
  std::vector<std::size_t> r(s.size());
  std::iota(r.begin(), r.end(), 0);
  return r;
}

/// Crops whose mean intensity encodes the class, so any encoder separates them.
ingest::RecordStore class_coded_store(std::size_t n, unsigned seed) {
  auto s = volta::testing::toy_store(n, 16, 16, seed, 2, true);
  for (std::size_t i = 0; i < n; ++i) {
    const float shift = s.cells[i].label == "class0" ? -2.0F : 2.0F;
    float* p = s.crops.data() + i * s.crop_floats();
    for (std::size_t j = 0; j < s.crop_floats(); ++j) p[j] = 0.1F * p[j] + shift;
  }
  return s;
}

finetune::FinetuneConfig quick_config() {
  finetune::FinetuneConfig c;
  c.epochs = 30;
  c.batch_size = 16;
  c.lr = 0.05;
  c.backbone_lr = 0.01;
  return c;
}

}  // namespace

TEST_CASE("embeddings do not depend on the batch size") {
  const auto store = volta::testing::toy_store(9, 16, 16, 1);
  torch::manual_seed(1);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  const auto rows = all_rows(store);
  const auto a = embed::embed_cells(m, store, rows, EmbeddingSource::momentum_encoder, "features", 1);
  const auto b = embed::embed_cells(m, store, rows, EmbeddingSource::momentum_encoder, "features", 8);
  REQUIRE(a.values.size() == b.values.size());
  CHECK(a.dim == 32);
  CHECK(a.rows() == 9);
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-5));
  const auto p = embed::embed_cells(m, store, rows, EmbeddingSource::momentum_encoder, "projection", 4);
  CHECK(p.dim == 8);
  CHECK(p.layer == "projection");
}

TEST_CASE("embedding contracts") {
  const auto store = volta::testing::toy_store(4, 16, 16, 2);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  CHECK_THROWS_AS(embed::embed_cells(m, store, {0, 1, 1}, EmbeddingSource::backbone), ContractViolation);
  CHECK_THROWS_AS(embed::embed_cells(m, store, {0, 9}, EmbeddingSource::backbone), ContractViolation);
  CHECK_THROWS_AS(embed::embed_cells(m, store, {0}, EmbeddingSource::backbone, "pooled"), ContractViolation);
  CHECK_THROWS_AS(embed::embed_cells(m, store, {0}, EmbeddingSource::backbone, "features", 0), ContractViolation);
}

TEST_CASE("momentum and backbone embeddings part after a training step") {
  const auto store = volta::testing::toy_store(8, 16, 16, 3);
  torch::manual_seed(3);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  const auto rows = all_rows(store);
  const auto before_k = embed::embed_cells(m, store, rows, EmbeddingSource::momentum_encoder);
  const auto before_q = embed::embed_cells(m, store, rows, EmbeddingSource::backbone);
  CHECK(before_k.values == before_q.values);
  contrastive::HyperParams h;
  h.momentum = 0.9;
  h.queue_size = 0;
  h.lr = 1e-2;
  contrastive::NegativeQueue q(0, 8);
  auto opt = contrastive::make_optimizer(m, h);
  m->train();
  contrastive::training_step(m, contrastive::build_batch(store, rows, {}, true, 0, 0, 0, 1), q, h, opt);
  const auto after_k = embed::embed_cells(m, store, rows, EmbeddingSource::momentum_encoder);
  const auto after_q = embed::embed_cells(m, store, rows, EmbeddingSource::backbone);
  CHECK(after_k.values != after_q.values);
  CHECK(after_k.values != before_k.values);
}

TEST_CASE("stratified label subsampling") {
  std::vector<std::string> labels;
  for (int i = 0; i < 20; ++i) labels.push_back("a");
  for (int i = 0; i < 7; ++i) labels.push_back("b");
  labels.push_back("c");
  auto count = [&](const std::vector<std::size_t>& idx) {
    std::map<std::string, int> c;
    for (auto i : idx) ++c[labels[i]];
    return c;
  };
  SUBCASE("ten percent keeps at least one per class") {
    const auto idx = finetune::subsample_labels(labels, 0.1, 1);
    const auto c = count(idx);
    CHECK(c.at("a") == 2);
    CHECK(c.at("b") == 1);
    CHECK(c.at("c") == 1);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
  }
  SUBCASE("fraction 1 keeps everything") {
    const auto idx = finetune::subsample_labels(labels, 1.0, 1);
    CHECK(idx.size() == labels.size());
  }
  SUBCASE("exact fractions are not rounded up") {
    CHECK(count(finetune::subsample_labels(labels, 0.5, 3)).at("a") == 10);
    CHECK(count(finetune::subsample_labels(labels, 0.3, 3)).at("a") == 6);
  }
  SUBCASE("seed changes the pick, not the counts") {
    const auto a = finetune::subsample_labels(labels, 0.5, 1);
    const auto b = finetune::subsample_labels(labels, 0.5, 2);
    CHECK(a.size() == b.size());
    CHECK(a != b);
    CHECK(a == finetune::subsample_labels(labels, 0.5, 1));
  }
  SUBCASE("listed classes without records are skipped") {
    const std::vector<std::string> classes{"a", "b", "c", "d"};
    CHECK(finetune::subsample_labels(labels, 0.1, 1, classes).size() == 4);
  }
  SUBCASE("bad fractions") {
    CHECK_THROWS_AS(finetune::subsample_labels(labels, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(finetune::subsample_labels(labels, 1.5, 1), ConfigError);
  }
}

TEST_CASE("classifier head dimensions") {
  finetune::ClassifierHead linear(32, 3, 1);
  CHECK((linear->forward(torch::randn({5, 32})).sizes() == torch::IntArrayRef{5, 3}));
  CHECK(linear->parameters().size() == 2);
  finetune::ClassifierHead deep(32, 4, 2, 16);
  CHECK((deep->forward(torch::randn({2, 32})).sizes() == torch::IntArrayRef{2, 4}));
  CHECK(deep->parameters().size() == 4);
  CHECK(deep->classes() == 4);
}

TEST_CASE("top-1 accuracy") {
  const std::vector<int> truth{0, 1, 2, 1};
  CHECK(finetune::top1(std::vector<int>{0, 1, 2, 1}, truth) == 1.0);
  CHECK(finetune::top1(std::vector<int>{0, 0, 2, 0}, truth) == 0.5);
  CHECK(finetune::top1(std::vector<int>{2, 0, 1, 0}, truth) == 0.0);
  CHECK_THROWS_AS(finetune::top1(std::vector<int>{}, std::vector<int>{}), ContractViolation);
  CHECK_THROWS_AS(finetune::top1(std::vector<int>{1}, truth), ContractViolation);
}

TEST_CASE("a linear head fits separable features") {
  std::mt19937 gen(4);
  std::normal_distribution<float> g(0.0F, 0.3F);
  const int n = 90, d = 6;
  auto x = torch::empty({n, d});
  std::vector<int> y;
  for (int i = 0; i < n; ++i) {
    y.push_back(i % 3);
    for (int j = 0; j < d; ++j) x[i][j] = g(gen) + (j == y.back() ? 3.0F : 0.0F);
  }
  auto cfg = quick_config();
  cfg.epochs = 60;
  const auto r = finetune::train_head(x, y, 3, cfg);
  CHECK(r.train_accuracy >= 0.99);
  CHECK(r.epoch_losses.back() < r.epoch_losses.front());
  CHECK(r.n_train == static_cast<std::size_t>(n));
}

TEST_CASE("frozen fine-tuning leaves the model untouched") {
  const auto store = class_coded_store(60, 5);
  torch::manual_seed(5);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  const auto digest = nets::parameter_digest(*m);
  auto cfg = quick_config();
  cfg.label_fraction = 0.5;
  const auto train_rows = store.rows(ingest::Split::train);
  const auto r = finetune::train_classifier(m, store, train_rows, cfg);
  CHECK(nets::parameter_digest(*m) == digest);
  CHECK((r.class_names == std::vector<std::string>{"class0", "class1"}));
  CHECK(r.n_train == 20);
  const double acc = finetune::evaluate_top1(m, r, store, store.rows(ingest::Split::test), cfg.source);
  CHECK(acc >= 0.9);
}

TEST_CASE("unfrozen fine-tuning moves the chosen encoder only") {
  const auto store = class_coded_store(30, 6);
  torch::manual_seed(6);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  const auto momentum_before = nets::parameter_digest(*m->momentum_encoder);
  const auto backbone_before = nets::parameter_digest(*m->backbone);
  auto cfg = quick_config();
  cfg.freeze_backbone = false;
  cfg.epochs = 3;
  (void)finetune::train_classifier(m, store, store.rows(ingest::Split::train), cfg);
  CHECK(nets::parameter_digest(*m->momentum_encoder) != momentum_before);
  CHECK(nets::parameter_digest(*m->backbone) == backbone_before);
  for (const auto& p : m->momentum_encoder->parameters()) CHECK_FALSE(p.requires_grad());
}

TEST_CASE("fine-tuning without labels is a data error") {
  auto store = volta::testing::toy_store(6, 16, 16, 7);
  for (auto& c : store.cells) c.label.reset();
  nets::ModelBundle m(volta::testing::small_conv_spec());
  CHECK_THROWS_AS(finetune::train_classifier(m, store, all_rows(store), quick_config()), DataError);
}
