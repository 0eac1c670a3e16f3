#include <doctest.h>

#include <random>

#include "fixtures.h"
#include "oracles.h"
#include "partatlas/anchors.h"
#include "partatlas/error.h"
#include "partatlas/mil.h"
#include "partatlas/synthetic.h"

using namespace partatlas;

namespace {

struct Bench {
  SyntheticWorld world;
  std::vector<ImageFeatures> features;
  WeakImageSet set;
};

Bench small_bench(uint64_t seed) {
  SyntheticProfile p;
  p.num_images = 60;
  p.seed = seed;
  Bench b{generate_synthetic(p), {}, {}};
  const Dataset& ds = b.world.dataset;
  AnchorHyperparams h;
  h.num_anchors = 6;
  h.lambda = 0.1;
  h.iterations = 1500;
  h.log_interval = 0;
  h.seed = seed;
  const AnchorBank bank = train_anchors(ds.store, ds.anchor_set(), h);
  const auto dets = detect_anchors(bank, ds.store, 5, 0.3);
  b.features = compute_features(ds.store, &dets, EmbeddingConfig{});
  b.set = ds.weak_set("cap");
  return b;
}

double objective_oracle(const Eigen::VectorXd& w, double lambda, const BagEmbeddings& bags,
                        const WeakImageSet& data, const Selections* sel) {
  double loss = 0;
  for (size_t i = 0; i < data.items.size(); ++i) {
    const auto& it = data.items[i];
    const Eigen::MatrixXd& bag = bags[it.image];
    double s = -INFINITY;
    if (it.label > 0 && sel) {
      s = bag.row((*sel)[i]).dot(w);
    } else {
      for (int p = 0; p < bag.rows(); ++p) s = std::max(s, bag.row(p).dot(w));
    }
    loss += std::max(0.0, 1 - it.label * s);
  }
  return 0.5 * lambda * w.squaredNorm() + loss / data.items.size();
}

}  // namespace

TEST_CASE("mil objective matches the definition") {
  const Dataset ds = fixture::random_dataset(41, 8, 5, 4);
  const WeakImageSet set = ds.weak_set("part");
  const auto features = compute_features(ds.store, nullptr, EmbeddingConfig{});
  const BagEmbeddings bags = embed_bags(features, Variant::kBC, set);
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> pick(0, 4);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd w = Eigen::VectorXd::Random(8) * 3;
    Selections sel(set.items.size());
    for (auto& s : sel) s = pick(rng);
    CHECK(mil_objective(w, 0.01, bags, set, &sel) ==
          doctest::Approx(objective_oracle(w, 0.01, bags, set, &sel)).epsilon(1e-12));
    CHECK(mil_objective(w, 0.01, bags, set) ==
          doctest::Approx(objective_oracle(w, 0.01, bags, set, nullptr)).epsilon(1e-12));
  }
}

TEST_CASE("the w-step never does worse than its starting point") {
  const Dataset ds = fixture::random_dataset(43, 12, 6, 5);
  const WeakImageSet set = ds.weak_set("part");
  const auto features = compute_features(ds.store, nullptr, EmbeddingConfig{});
  const BagEmbeddings bags = embed_bags(features, Variant::kB, set);
  Selections sel(set.items.size(), 0);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(5);
  MilSolver solver;
  for (int r = 0; r < 10; ++r) {
    const double before = mil_objective(w, 1e-3, bags, set, &sel);
    w = solve_w(w, 1e-3, bags, set, sel, solver, r);
    CHECK(mil_objective(w, 1e-3, bags, set, &sel) <= before);
  }
  CHECK(mil_objective(w, 1e-3, bags, set, &sel) < 1.0);
}

TEST_CASE("relocalization is the exhaustive argmax with lowest-index ties") {
  std::mt19937_64 rng(44);
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd bag = Eigen::MatrixXd::Random(9, 4);
    if (t % 3 == 0) bag.row(7) = bag.row(2);
    const Eigen::VectorXd w = Eigen::VectorXd::Random(4);
    CHECK(relocalize(w, bag) == oracle::argmax_row(w, bag));
  }
  const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(3, 2);
  CHECK(relocalize(Eigen::VectorXd::Ones(2), same) == 0);
}

TEST_CASE("round-0 selection prefers a whole-image proposal, else the largest") {
  ImageRecord im;
  im.id = "a";
  im.width = 10;
  im.height = 10;
  im.proposals = {Region(0, 0, 5, 5), Region(1, 1, 9, 9), Region(0, 0, 10, 10)};
  CHECK(initial_selection(im) == 2);
  im.proposals.pop_back();
  CHECK(initial_selection(im) == 1);
}

TEST_CASE("training descends per phase and is deterministic") {
  const Bench b = small_bench(45);
  const Dataset& ds = b.world.dataset;
  for (Variant v : {Variant::kB, Variant::kBC, Variant::kBG, Variant::kBCG}) {
    CAPTURE(to_string(v));
    MilConfig cfg;
    cfg.variant = v;
    const MilResult r = train_part(ds.store, b.features, b.set, cfg, std::nullopt, "cap");
    REQUIRE(r.log.size() == 10u);
    for (size_t i = 1; i < r.log.size(); ++i) {
      if (r.log[i].phase == r.log[i - 1].phase) {
        CHECK(r.log[i].objective <= r.log[i - 1].objective + 1e-3);
      }
    }
    CHECK(r.log.front().phase == (has_geometry(v) ? appearance_variant(v) : v));
    CHECK(r.log.back().phase == v);
    CHECK(r.model.dim() == embedding_dim(v, ds.store.dim(), has_geometry(v) ? 6 : 0));
    cfg.threads = 4;
    const MilResult again = train_part(ds.store, b.features, b.set, cfg, std::nullopt, "cap");
    CHECK(again.model == r.model);
    CHECK(again.selections == r.selections);
  }
}

TEST_CASE("a zero-beta exemplar changes nothing") {
  const Bench b = small_bench(46);
  const Dataset& ds = b.world.dataset;
  int ex = -1;
  for (const auto& it : b.set.items) {
    if (it.label > 0) {
      ex = it.image;
      break;
    }
  }
  MilConfig cfg;
  const MilResult plain = train_part(ds.store, b.features, b.set, cfg, std::nullopt, "cap");
  const ExemplarSpec spec{ex, ds.store[ex].proposals[1], 0.0};
  const MilResult with = train_part(ds.store, b.features, b.set, cfg, spec, "cap");
  CHECK(with.model == plain.model);
  CHECK(with.selections == plain.selections);
  CHECK(with.log == plain.log);
}

TEST_CASE("scores and detections follow the learned weights") {
  const Bench b = small_bench(47);
  const Dataset& ds = b.world.dataset;
  const MilResult r = train_part(ds.store, b.features, b.set, MilConfig{}, std::nullopt, "cap");
  const int img = 3;
  const Eigen::VectorXd s = score_proposals(r.model, b.features[img]);
  const Eigen::VectorXd want = b.features[img].embed_all(Variant::kBCG) * r.model.w;
  CHECK((s - want).cwiseAbs().maxCoeff() <= 1e-12);
  const auto dets = detect_part(r.model, ds.store[img], b.features[img], 3, 0.3);
  const std::vector<double> scores(s.data(), s.data() + s.size());
  const auto kept = oracle::nms(ds.store[img].proposals, scores, 0.3, 3);
  REQUIRE(dets.size() == kept.size());
  for (size_t i = 0; i < kept.size(); ++i) CHECK(dets[i].box == ds.store[img].proposals[kept[i]]);
}

TEST_CASE("configuration errors") {
  MilConfig cfg;
  cfg.schedule.joint_rounds = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.variant = Variant::kBC;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const Dataset ds = fixture::random_dataset(48, 6, 4, 3);
  const auto features = compute_features(ds.store, nullptr, EmbeddingConfig{});
  CHECK_THROWS_AS(train_part(ds.store, features, ds.weak_set("part"), MilConfig{}), ConfigError);
  WeakImageSet only_pos;
  only_pos.items = {{0, 1}};
  MilConfig b;
  b.variant = Variant::kB;
  CHECK_THROWS_AS(train_part(ds.store, features, only_pos, b), ConfigError);
}
