#include <doctest.h>

#include <random>
#include <set>

#include "fixtures.h"
#include "oracles.h"
#include "partatlas/anchors.h"
#include "partatlas/error.h"
#include "partatlas/synthetic.h"

using namespace partatlas;

namespace {

double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

// Objective written directly from its definition.
double objective_oracle(const Eigen::MatrixXd& w, const DescriptorStore& store,
                        const WeakImageSet& data, double lambda, double gamma) {
  double reg = 0, fit = 0, orth = 0;
  int n = 0;
  for (const auto& item : data.items) n += store[item.image].proposal_count() > 0;
  for (int k = 0; k < w.rows(); ++k) {
    reg += 0.5 * lambda * w.row(k).squaredNorm();
    for (const auto& item : data.items) {
      const ImageRecord& im = store[item.image];
      double best = -INFINITY;
      for (int p = 0; p < im.proposal_count(); ++p) {
        best = std::max(best, w.row(k).dot(im.descriptor(p)));
      }
      fit -= item.label * std::max(0.0, best) / n;
    }
    for (int q = 0; q < w.rows(); ++q) {
      if (q == k) continue;
      const double c = w.row(k).dot(w.row(q)) / (w.row(k).norm() * w.row(q).norm());
      orth += gamma * c * c;
    }
  }
  return reg + fit + orth;
}

}  // namespace

TEST_CASE("objective terms match the definition") {
  const Dataset ds = fixture::random_dataset(31, 10, 6, 5);
  const WeakImageSet set = ds.weak_set("part");
  std::mt19937_64 rng(32);
  AnchorBank bank;
  bank.hyper.num_anchors = 4;
  bank.hyper.lambda = 0.3;
  bank.hyper.gamma = 0.7;
  bank.weights = Eigen::MatrixXd::Random(4, 5);
  const AnchorObjective t = anchor_objective_terms(bank, ds.store, set);
  CHECK(t.total() == doctest::Approx(objective_oracle(bank.weights, ds.store, set, 0.3, 0.7)).epsilon(1e-12));
  CHECK(anchor_objective(bank, ds.store, set) == doctest::Approx(t.total()).epsilon(1e-15));
  CHECK(t.orthogonality == doctest::Approx(0.7 * orthogonality_penalty(bank.weights)));
  CHECK(t.skipped_images == 0);
}

TEST_CASE("analytic gradient agrees with central differences") {
  const Dataset ds = fixture::random_dataset(33, 12, 8, 6);
  const WeakImageSet set = ds.weak_set("part");
  std::mt19937_64 rng(34);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 20; ++t) {
    AnchorBank bank;
    bank.hyper.num_anchors = 5;
    bank.hyper.lambda = 0.05 + 0.1 * (t % 3);
    bank.hyper.gamma = 1.0;
    bank.weights.resize(5, 6);
    for (int i = 0; i < bank.weights.size(); ++i) bank.weights.data()[i] = n(rng);
    const Eigen::MatrixXd g = anchor_objective_gradient(bank, ds.store, set);
    const Eigen::MatrixXd fd = oracle::finite_difference(
        [&](const Eigen::MatrixXd& w) {
          AnchorBank b = bank;
          b.weights = w;
          return anchor_objective(b, ds.store, set);
        },
        bank.weights);
    CHECK(relative_error(g, fd) <= 1e-4);
  }
}

TEST_CASE("orthogonality gradient agrees with central differences") {
  std::mt19937_64 rng(35);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd w(4, 7);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = n(rng) * (1 + t);
    const Eigen::MatrixXd fd = oracle::finite_difference(
        [](const Eigen::MatrixXd& x) { return orthogonality_penalty(x); }, w, 1e-6 * (1 + t));
    CHECK(relative_error(orthogonality_gradient(w), fd) <= 1e-5);
  }
}

TEST_CASE("orthogonality penalty vanishes for orthogonal rows and is scale free") {
  Eigen::MatrixXd w = Eigen::MatrixXd::Identity(3, 5) * 4.0;
  CHECK(orthogonality_penalty(w) == 0.0);
  Eigen::MatrixXd same(2, 3);
  same << 1, 2, 3, 2, 4, 6;
  CHECK(orthogonality_penalty(same) == doctest::Approx(2.0));
  Eigen::MatrixXd with_zero(2, 3);
  with_zero << 1, 2, 3, 0, 0, 0;
  CHECK(orthogonality_penalty(with_zero) == 0.0);
  CHECK(orthogonality_gradient(with_zero).row(1).isZero());
}

TEST_CASE("initial anchors are distinct positive proposals") {
  const Dataset ds = fixture::random_dataset(36, 10, 6, 5);
  const WeakImageSet set = ds.weak_set("part");
  AnchorHyperparams h;
  h.num_anchors = 12;
  h.seed = 9;
  const AnchorBank bank = initialize_anchors(ds.store, set, h);
  std::set<std::vector<double>> rows;
  for (int k = 0; k < bank.size(); ++k) {
    const Eigen::VectorXd r = bank.weights.row(k).transpose();
    rows.insert(std::vector<double>(r.data(), r.data() + r.size()));
    bool found = false;
    for (const auto& item : set.items) {
      if (item.label < 0) continue;
      for (int p = 0; p < ds.store[item.image].proposal_count(); ++p) {
        found |= ds.store[item.image].descriptor(p) == r;
      }
    }
    CHECK(found);
  }
  CHECK(rows.size() == 12u);
  h.num_anchors = 31;
  CHECK_THROWS_AS(initialize_anchors(ds.store, set, h), ConfigError);
}

TEST_CASE("training is deterministic and lowers the objective") {
  TwoPatternProfile p;
  p.seed = 3;
  const TwoPatternWorld w = generate_two_pattern(p);
  AnchorHyperparams h;
  h.num_anchors = 4;
  h.lambda = 0.1;
  h.iterations = 2000;
  h.log_interval = 500;
  h.seed = 5;
  std::vector<ObjectiveSample> log;
  const AnchorBank a = train_anchors(w.store, w.set, h, &log);
  const AnchorBank b = train_anchors(w.store, w.set, h);
  CHECK(a == b);
  REQUIRE(log.size() >= 2);
  CHECK(log.front().iteration == 0);
  CHECK(log.back().objective < log.front().objective);
  CHECK(anchor_objective(a, w.store, w.set) < anchor_objective(initialize_anchors(w.store, w.set, h), w.store, w.set));
  h.seed = 6;
  CHECK_FALSE(train_anchors(w.store, w.set, h) == a);
}

TEST_CASE("anchor detections are nms over raw scores") {
  const Dataset ds = fixture::random_dataset(37, 4, 15, 5);
  AnchorBank bank;
  bank.weights = Eigen::MatrixXd::Random(3, 5);
  const ImageRecord& im = ds.store[1];
  const ImageDetections dets = detect_anchors(bank, im, 4, 0.3);
  const Eigen::MatrixXd s = bank.scores(im);
  REQUIRE(dets.size() == 3u);
  for (int k = 0; k < 3; ++k) {
    std::vector<double> col(s.rows());
    for (int p = 0; p < s.rows(); ++p) {
      col[p] = s(p, k);
      CHECK(s(p, k) == doctest::Approx(bank.weights.row(k).dot(im.descriptor(p))));
    }
    const auto kept = oracle::nms(im.proposals, col, 0.3, 4);
    REQUIRE(dets[k].size() == kept.size());
    for (size_t i = 0; i < kept.size(); ++i) {
      CHECK(dets[k][i].box == im.proposals[kept[i]]);
      CHECK(dets[k][i].score == col[kept[i]]);
    }
  }
  CHECK(detect_anchors(bank, ds.store, 4, 0.3, 3)[1] == dets);
  CHECK_THROWS(detect_anchors(bank, im, 0, 0.3));
  CHECK_THROWS(detect_anchors(bank, im, 3, 1.0));
}

TEST_CASE("hyperparameter validation") {
  AnchorHyperparams h;
  CHECK_NOTHROW(h.validate());
  h.num_anchors = 1;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h.gamma = 0;
  CHECK_NOTHROW(h.validate());
  h.momentum = 1.0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = AnchorHyperparams{};
  h.learning_rate = 0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
}
