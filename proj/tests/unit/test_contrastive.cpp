// SPDX-License-Identifier: Apache-2.0
#include "support/torch_doctest.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "support/loss_oracle.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_model.hpp"
#include "support/toy_store.hpp"
#include "volta/common/error.hpp"
#include "volta/contrastive/contrastive.hpp"

using namespace volta;
using namespace volta::contrastive;
using volta::testing::Rows;

namespace {

Rows random_unit_rows(std::size_t n, std::size_t d, std::mt19937_64& gen) {
  std::normal_distribution<double> g;
  Rows out(n, std::vector<double>(d));
  for (auto& r : out) {
    for (auto& v : r) v = g(gen);
    r = volta::testing::unit(r);
  }
  return out;
}

torch::Tensor to_tensor(const Rows& rows) {
  auto t = torch::empty({static_cast<long>(rows.size()), static_cast<long>(rows.front().size())}, torch::kFloat64);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t[i][j] = rows[i][j];
  return t;
}

HyperParams toy_hyper() {
  HyperParams h;
  h.batch_size = 8;
  h.queue_size = 16;
  h.epochs = 3;
  h.warmup_epochs = 1;
  h.momentum = 0.9;
  h.lr = 1e-2;
  return h;
}

}  // namespace

TEST_CASE("cell loss matches the scalar oracle") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + trial % 4, d = 2 + trial % 7, qn = trial % 9;
    const double tau = 0.05 + 0.1 * (trial % 5);
    const auto z = random_unit_rows(n, d, gen);
    const auto k = random_unit_rows(n, d, gen);
    const auto neg = random_unit_rows(qn, d, gen);
    NegativeQueue queue(8, static_cast<int>(d));
    if (qn > 0) queue.push(to_tensor(neg));
    const Rows kept(neg.begin() + static_cast<long>(qn > 8 ? qn - 8 : 0), neg.end());
    const double got = info_nce_cell(to_tensor(z), to_tensor(k), queue, tau).item<double>();
    const double want = volta::testing::scalar_info_nce(z, k, kept, tau);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("environment loss matches the scalar oracle") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 4, d = 2 + trial % 6;
    const auto c = random_unit_rows(n, d, gen);
    const auto e = random_unit_rows(n, d, gen);
    const double got = info_nce_env(to_tensor(c), to_tensor(e), 0.07).item<double>();
    CHECK(got == doctest::Approx(volta::testing::scalar_info_nce(c, e, {}, 0.07)).epsilon(1e-10));
  }
}

TEST_CASE("uniform candidates give log of the candidate count") {
  // One query orthogonal to its key and to three queued keys: every logit is 0.
  const auto eye = torch::eye(5, torch::kFloat64);
  NegativeQueue queue(4, 5);
  queue.push(eye.slice(0, 2, 5));
  const double got = info_nce_cell(eye.slice(0, 0, 1), eye.slice(0, 1, 2), queue, 0.07).item<double>();
  CHECK(got == std::log(4.0));
  const double env = info_nce_env(eye.slice(0, 0, 1), eye.slice(0, 1, 2), 0.5).item<double>();
  CHECK(env == 0.0);
}

TEST_CASE("single positive without negatives gives zero loss") {
  const auto v = torch::tensor({{0.6, 0.8}}, torch::kFloat64);
  NegativeQueue empty(0, 2);
  CHECK(info_nce_cell(v, v, empty, 0.07).item<double>() == 0.0);
}

TEST_CASE("loss contracts") {
  const auto v = torch::tensor({{1.0, 0.0}, {0.0, 1.0}}, torch::kFloat64);
  NegativeQueue queue(4, 2);
  CHECK_THROWS_AS(info_nce_cell(v, v, queue, 0.0), ContractViolation);
  CHECK_THROWS_AS(info_nce_env(v, v, -1.0), ContractViolation);
  CHECK_THROWS_AS(info_nce_cell(v * 2.0, v, queue, 0.1), ContractViolation);
  CHECK_THROWS_AS(info_nce_env(v, v.slice(0, 0, 1), 0.1), ContractViolation);
  NegativeQueue wide(4, 3);
  wide.push(torch::tensor({{1.0, 0.0, 0.0}}, torch::kFloat64));
  CHECK_THROWS_AS(info_nce_cell(v, v, wide, 0.1), ContractViolation);
}

TEST_CASE("loss lies between 0 and ln(M) + 2 / tau") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 5, d = 3, qn = trial % 6;
    const double tau = 0.07 + 0.02 * (trial % 4);
    NegativeQueue queue(6, 3);
    if (qn > 0) queue.push(to_tensor(random_unit_rows(qn, d, gen)));
    const double l =
        info_nce_cell(to_tensor(random_unit_rows(n, d, gen)), to_tensor(random_unit_rows(n, d, gen)), queue, tau)
            .item<double>();
    CHECK(l >= 0.0);
    CHECK(l <= std::log(static_cast<double>(n + queue.size())) + 2.0 / tau + 1e-9);
  }
}

TEST_CASE("total loss combines with lambda") {
  const auto b = total_loss(2.0, 3.0, 0.5);
  CHECK(b.total == 3.5);
  CHECK(total_loss(2.0, 3.0, 0.0).total == 2.0);
  CHECK(total_loss(1.25, 0.75, 1.0).total == 2.0);
}

TEST_CASE("queue is a FIFO of the most recent keys") {
  NegativeQueue q(5, 2);
  auto key = [](double angle) { return torch::tensor({{std::cos(angle), std::sin(angle)}}, torch::kFloat64); };
  std::vector<double> pushed;
  for (int i = 0; i < 12; ++i) {
    q.push(key(0.1 * i));
    pushed.push_back(0.1 * i);
    CHECK(q.size() == std::min(i + 1, 5));
    const auto c = q.contents();
    const std::size_t first = pushed.size() - static_cast<std::size_t>(q.size());
    for (int r = 0; r < q.size(); ++r) CHECK(c[r][0].item<double>() == std::cos(pushed[first + r]));
  }
  CHECK_THROWS_AS(q.push(torch::tensor({{2.0, 0.0}}, torch::kFloat64)), ContractViolation);
  CHECK_THROWS_AS(q.push(torch::ones({1, 3}, torch::kFloat64)), ContractViolation);
  q.clear();
  CHECK(q.size() == 0);
  NegativeQueue off(0, 2);
  off.push(key(0.3));
  CHECK(off.size() == 0);
}

TEST_CASE("learning-rate schedule") {
  HyperParams h;
  h.lr = 0.1;
  h.epochs = 10;
  h.warmup_epochs = 2;
  CHECK(lr_at(h, 0, 0, 4) == doctest::Approx(0.1 * 0.25 / 2));
  CHECK(lr_at(h, 1, 3, 4) == doctest::Approx(0.1));
  CHECK(lr_at(h, 5, 3, 4) == doctest::Approx(0.05));
  CHECK(lr_at(h, 9, 3, 4) == doctest::Approx(0.0).epsilon(1e-12));
  double prev = 1.0;
  for (int e = 2; e < 10; ++e)
    for (int s = 0; s < 4; ++s) {
      const double lr = lr_at(h, e, s, 4);
      CHECK(lr <= prev);
      prev = lr;
    }
  h.warmup_epochs = 0;
  CHECK(lr_at(h, 0, 0, 1) == doctest::Approx(0.1 * 0.5 * (1 + std::cos(std::numbers::pi * 0.1))));
  CHECK_THROWS_AS(lr_at(h, 0, 4, 4), ContractViolation);
}

TEST_CASE("batches do not depend on the worker count") {
  const auto store = volta::testing::toy_store(12, 16, 16, 3);
  const std::vector<std::size_t> rows{0, 3, 5, 7, 11};
  const augment::AugmentationConfig cfg;
  const auto a = build_batch(store, rows, cfg, true, 9, 1, 2, 1);
  const auto b = build_batch(store, rows, cfg, true, 9, 1, 2, 3);
  CHECK(torch::equal(a.query_views, b.query_views));
  CHECK(torch::equal(a.key_views, b.key_views));
  CHECK(torch::equal(a.env_views, b.env_views));
  CHECK((a.query_views.sizes() == torch::IntArrayRef{5, 3, 16, 16}));
  const auto c = build_batch(store, rows, cfg, false, 9, 1, 3, 1);
  CHECK_FALSE(torch::equal(a.query_views, c.query_views));
  CHECK_FALSE(c.env_views.defined());
  // A row's views depend on the row itself, not on its batch companions.
  const auto solo = build_batch(store, {5}, cfg, true, 9, 1, 2, 1);
  CHECK(torch::equal(solo.query_views[0], a.query_views[2]));
}

TEST_CASE("training step is deterministic") {
  const auto store = volta::testing::toy_store(8, 16, 16, 4);
  const auto hyper = toy_hyper();
  std::vector<std::size_t> rows(8);
  std::iota(rows.begin(), rows.end(), 0);
  auto run = [&] {
    torch::manual_seed(42);
    nets::ModelBundle m(volta::testing::small_conv_spec());
    NegativeQueue q(hyper.queue_size, 8);
    auto opt = make_optimizer(m, hyper);
    std::vector<LossBreakdown> out;
    for (int s = 0; s < 3; ++s) out.push_back(training_step(m, build_batch(store, rows, {}, true, 1, 0, s, 1), q, hyper, opt));
    return std::make_pair(out, nets::parameter_digest(*m));
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.second == b.second);
  for (std::size_t i = 0; i < a.first.size(); ++i) {
    CHECK(a.first[i].total == b.first[i].total);
    CHECK(a.first[i].l_env == b.first[i].l_env);
  }
}

TEST_CASE("lambda 0 reduces to the cell loss and leaves the environment branch alone") {
  const auto store = volta::testing::toy_store(8, 16, 16, 5);
  auto hyper = toy_hyper();
  hyper.lambda = 0.0;
  hyper.queue_size = 0;
  std::vector<std::size_t> rows(8);
  std::iota(rows.begin(), rows.end(), 0);
  torch::manual_seed(7);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  NegativeQueue q(0, 8);
  auto opt = make_optimizer(m, hyper);
  const auto env_before = nets::parameter_digest(*m->env_encoder);
  const auto head_before = nets::parameter_digest(*m->cell_env_head);
  const auto backbone_before = nets::parameter_digest(*m->backbone);
  const auto batch = build_batch(store, rows, {}, true, 1, 0, 0, 1);
  const auto losses = compute_losses(m, batch, q, hyper);
  CHECK(losses.total.item<double>() == losses.l_cell.item<double>());
  CHECK(losses.l_env.defined());
  CHECK_FALSE(losses.l_env.requires_grad());
  const auto b = training_step(m, batch, q, hyper, opt);
  CHECK(b.total == b.l_cell);
  CHECK(b.l_env > 0.0);
  CHECK(nets::parameter_digest(*m->env_encoder) == env_before);
  CHECK(nets::parameter_digest(*m->cell_env_head) == head_before);
  CHECK(nets::parameter_digest(*m->backbone) != backbone_before);
  CHECK(q.size() == 0);
}

TEST_CASE("lambda 1 trains the environment branch") {
  const auto store = volta::testing::toy_store(8, 16, 16, 6);
  const auto hyper = toy_hyper();
  std::vector<std::size_t> rows(8);
  std::iota(rows.begin(), rows.end(), 0);
  torch::manual_seed(7);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  NegativeQueue q(hyper.queue_size, 8);
  auto opt = make_optimizer(m, hyper);
  const auto env_before = nets::parameter_digest(*m->env_encoder);
  const auto b = training_step(m, build_batch(store, rows, {}, true, 1, 0, 0, 1), q, hyper, opt);
  CHECK(b.total == doctest::Approx(b.l_cell + b.l_env));
  CHECK(nets::parameter_digest(*m->env_encoder) != env_before);
  CHECK(q.size() == 8);
}

TEST_CASE("non-finite loss fails before any parameter changes") {
  const auto store = volta::testing::toy_store(4, 16, 16, 7);
  const auto hyper = toy_hyper();
  torch::manual_seed(8);
  nets::ModelBundle m(volta::testing::small_conv_spec());
  NegativeQueue q(hyper.queue_size, 8);
  auto opt = make_optimizer(m, hyper);
  auto batch = build_batch(store, {0, 1, 2, 3}, {}, true, 1, 0, 0, 1);
  batch.query_views[1][0][3][3] = std::numeric_limits<float>::quiet_NaN();
  const auto before = nets::parameter_digest(*m);
  CHECK_THROWS_AS(training_step(m, batch, q, hyper, opt), NumericalFailure);
  CHECK(nets::parameter_digest(*m) == before);
  CHECK(q.size() == 0);
}

TEST_CASE("training lowers the mean epoch loss") {
  // Property on a fixed toy store; no queue and no warm-up so every epoch sees
  // the same candidate count.
  const auto store = volta::testing::toy_store(32, 16, 16, 9);
  TrainOptions opt;
  opt.hyper = toy_hyper();
  opt.hyper.queue_size = 0;
  opt.hyper.warmup_epochs = 0;
  opt.hyper.epochs = 8;
  opt.hyper.batch_size = 16;
  opt.hyper.lr = 3e-3;
  opt.augment = augment::AugmentationConfig::identity();
  opt.model = volta::testing::small_conv_spec();
  const auto r = train(store, opt);
  REQUIRE(r.epoch_means.size() == 8);
  CHECK(r.epoch_means.back() < r.epoch_means.front());
  CHECK(r.losses.size() == 16);
}

TEST_CASE("train writes checkpoints and the loss table") {
  volta::testing::TempDir dir;
  const auto store = volta::testing::toy_store(10, 16, 16, 10);
  TrainOptions opt;
  opt.hyper = toy_hyper();
  opt.hyper.epochs = 2;
  opt.model = volta::testing::small_conv_spec();
  opt.output_dir = dir.path();
  opt.model_hash = "m";
  int calls = 0;
  opt.on_step = [&](const LossRow&) { ++calls; };
  const auto r = train(store, opt);
  CHECK(calls == 4);
  REQUIRE(r.checkpoints.size() == 2);
  CHECK(std::filesystem::exists(dir / "checkpoint_e0001.pt"));
  CHECK(nets::read_checkpoint_meta(dir / "checkpoint_e0002.pt").step == 4);
  std::ifstream in(dir / "losses.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,step,L_cell,L_env,total,lr");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 4);

  SUBCASE("size mismatches and empty stores are refused") {
    auto bad = opt;
    bad.output_dir.clear();
    bad.model.cell.input_size = 32;
    CHECK_THROWS_AS(train(store, bad), ConfigError);
    auto test_only = store;
    for (auto& c : test_only.cells) c.split = ingest::Split::test;
    CHECK_THROWS_AS(train(test_only, opt), DataError);
  }
}
