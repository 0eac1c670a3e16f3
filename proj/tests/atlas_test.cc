#include <doctest.h>

#include "partatlas/anchors.h"
#include "partatlas/atlas.h"
#include "partatlas/error.h"
#include "partatlas/synthetic.h"

using namespace partatlas;

namespace {

struct Fixture {
  SyntheticWorld world;
  AnchorBank bank;
  std::vector<PartModel> models;
};

// Anchors and part models trained on noise-free congruent scenes.
const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticProfile p;
    p.num_images = 80;
    p.congruent_pairs = true;
    p.noise = 0;
    p.seed = 91;
    Fixture out{generate_synthetic(p), {}, {}};
    const Dataset& ds = out.world.dataset;
    AnchorHyperparams h;
    h.num_anchors = 12;
    h.lambda = 0.1;
    h.iterations = 3000;
    h.log_interval = 0;
    h.seed = 91;
    out.bank = train_anchors(ds.store, ds.anchor_set(), h);
    const auto dets = detect_anchors(out.bank, ds.store, 5, 0.3);
    const auto features = compute_features(ds.store, &dets, EmbeddingConfig{});
    for (const auto& c : ds.vocabulary) {
      out.models.push_back(
          train_part(ds.store, features, ds.weak_set(c), MilConfig{}, std::nullopt, c).model);
    }
    return out;
  }();
  return f;
}

// The two images of one congruent pair as a dataset of their own.
Dataset pair_dataset(const SyntheticWorld& w, int a, int b) {
  const Dataset& ds = w.dataset;
  Dataset out;
  out.vocabulary = ds.vocabulary;
  out.store = DescriptorStore(ds.store.dim());
  out.ground_truth.emplace();
  for (int i : {a, b}) {
    out.store.add(ds.store[i]);
    out.labels.push_back(ds.labels[i]);
    out.ground_truth->push_back((*ds.ground_truth)[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("edges of a congruent pair point to the counterpart boxes") {
  const Fixture& f = fixture();
  const auto& [a, b] = f.world.pairs.front();
  const Dataset ds = pair_dataset(f.world, a, b);
  const AtlasGraph g = export_atlas(f.models, f.bank, ds, AtlasConfig{});
  REQUIRE(g.nodes.size() == 2u);
  CHECK(g.nodes[0].image_id == f.world.dataset.store[a].id);
  CHECK(g.nodes[0].parts.size() == 3u);
  CHECK(g.nodes[1].parts.size() == 3u);
  CHECK(g.nodes[0].anchors.size() <= 12u);
  REQUIRE(g.edges.size() == 6u);
  CHECK_NOTHROW(g.validate());

  const Region& fa = *f.world.scenes[a].object;
  const Region& fb = *f.world.scenes[b].object;
  for (const AtlasEdge& e : g.edges) {
    CHECK(e.target_node == 1 - e.source_node);
    const AtlasBox& src = g.nodes[e.source_node].parts[e.source_box];
    const AtlasBox& dst = g.nodes[e.target_node].parts[e.target_box];
    CHECK(src.concept_name == dst.concept_name);
    const Region& from = e.source_node == 0 ? fa : fb;
    const Region& to = e.source_node == 0 ? fb : fa;
    const double s = to.width() / from.width();
    const Region mapped = src.box.transformed(s, to.x1() - s * from.x1(), to.y1() - s * from.y1());
    CHECK(iou(mapped, dst.box) >= 0.99);

    double sum = e.other_contribution;
    for (const auto& c : e.contributions) sum += c.value;
    CHECK(sum == doctest::Approx(e.similarity).epsilon(1e-6));
    CHECK(e.contributions.size() == 10u);
    for (size_t i = 1; i < e.contributions.size(); ++i) {
      CHECK(e.contributions[i - 1].value >= e.contributions[i].value);
    }
    CHECK(e.similarity <= 1.0 + 1e-9);
  }
}

TEST_CASE("edge budget keeps the most similar edges") {
  const Fixture& f = fixture();
  AtlasConfig cfg;
  cfg.threads = 4;
  const AtlasGraph all = export_atlas(f.models, f.bank, f.world.dataset, cfg);
  CHECK(all.nodes.size() == 80u);
  CHECK_FALSE(all.edges.empty());
  cfg.top_edges = 5;
  const AtlasGraph top = export_atlas(f.models, f.bank, f.world.dataset, cfg);
  REQUIRE(top.edges.size() == 5u);
  double kth = 0;
  std::vector<double> sims;
  for (const auto& e : all.edges) sims.push_back(e.similarity);
  std::sort(sims.rbegin(), sims.rend());
  kth = sims[4];
  for (const auto& e : top.edges) CHECK(e.similarity >= kth);
  // Negative images carry no part boxes.
  for (int i = 0; i < f.world.dataset.store.size(); ++i) {
    if (f.world.scenes[i].kind == SceneKind::kNegative) CHECK(all.nodes[i].parts.empty());
  }
  cfg.top_edges = 0;
  const AtlasGraph none = export_atlas(f.models, f.bank, f.world.dataset, cfg);
  CHECK(none.edges.empty());
  CHECK(atlas_from_json(Json::parse(to_json(none).dump())) == none);
}

TEST_CASE("atlas files round trip and are validated") {
  const Fixture& f = fixture();
  const auto& [a, b] = f.world.pairs.front();
  const AtlasGraph g = export_atlas(f.models, f.bank, pair_dataset(f.world, a, b), AtlasConfig{});
  const Json j = to_json(g);
  CHECK(j.at("format") == "partatlas-atlas");
  CHECK(atlas_from_json(Json::parse(j.dump())) == g);

  Json dangling = j;
  dangling["edges"][0]["target"]["box"] = 7;
  CHECK_THROWS_AS(atlas_from_json(dangling), DataError);
  Json unsorted = j;
  auto& cs = unsorted["edges"][0]["contributions"];
  std::swap(cs[0], cs[1]);
  CHECK_THROWS_AS(atlas_from_json(unsorted), DataError);
  Json future = j;
  future["version"] = 2;
  CHECK_THROWS_AS(atlas_from_json(future), DataError);
}

TEST_CASE("models must fit the bank") {
  const Fixture& f = fixture();
  AnchorBank small = f.bank;
  small.weights.conservativeResize(4, Eigen::NoChange);
  CHECK_THROWS_AS(export_atlas(f.models, small, f.world.dataset, AtlasConfig{}), DataError);
}
