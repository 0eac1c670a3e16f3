#include "partatlas/atlas.h"

#include <algorithm>
#include <limits>

#include "partatlas/embedding.h"
#include "partatlas/error.h"
#include "partatlas/matching.h"
#include "partatlas/parallel.h"

namespace partatlas {

namespace {

struct BoxFeatures {
  Eigen::VectorXd a;  // unit appearance (or zero)
  Eigen::VectorXd g;  // unit geometry (or zero)
};

BoxFeatures box_features(const ImageRecord& image, const ImageDetections& dets,
                         const Region& r, const OverlapConfig& overlap) {
  BoxFeatures f{match_embedding(image, dets, r, MatchVariant::kA, true, overlap),
                match_embedding(image, dets, r, MatchVariant::kAnchorG, true,
                                overlap)};
  return f;
}

}  // namespace

void AtlasGraph::validate() const {
  const int n = static_cast<int>(nodes.size());
  auto check_end = [&](int node, int box, const char* which) {
    if (node < 0 || node >= n ||
        box < 0 || box >= static_cast<int>(nodes[node].parts.size())) {
      throw DataError(std::string("atlas edge ") + which +
                      " references a missing node or box");
    }
  };
  for (const auto& e : edges) {
    check_end(e.source_node, e.source_box, "source");
    check_end(e.target_node, e.target_box, "target");
    if (static_cast<int>(e.contributions.size()) > kMaxContributions) {
      throw DataError("atlas edge lists more than " +
                      std::to_string(kMaxContributions) + " contributions");
    }
    for (size_t i = 1; i < e.contributions.size(); ++i) {
      if (e.contributions[i].value > e.contributions[i - 1].value) {
        throw DataError("atlas edge contributions are not sorted");
      }
    }
  }
}

AtlasGraph export_atlas(const std::vector<PartModel>& models,
                        const AnchorBank& bank, const Dataset& ds,
                        const AtlasConfig& cfg) {
  for (const auto& m : models) {
    if (has_geometry(m.variant) && m.num_anchors != bank.size()) {
      throw DataError("part model '" + m.concept_name + "' expects " +
                      std::to_string(m.num_anchors) + " anchors, bank has " +
                      std::to_string(bank.size()));
    }
    if (m.appearance_dim != ds.store.dim()) {
      throw DataError("part model '" + m.concept_name +
                      "' has a different descriptor dimension than the dataset");
    }
  }
  const DescriptorStore& store = ds.store;
  const int n = store.size();
  const auto dets = detect_anchors(bank, store, cfg.detections_per_anchor,
                                   cfg.nms_iou, cfg.threads);
  EmbeddingConfig ecfg;
  ecfg.overlap = cfg.overlap;
  const auto features = compute_features(store, &dets, ecfg, cfg.threads);

  AtlasGraph g;
  g.nodes.resize(n);
  std::vector<std::vector<BoxFeatures>> feats(n);
  parallel_for(n, cfg.threads, [&](int i) {
    const ImageRecord& image = store[i];
    AtlasNode& node = g.nodes[i];
    node.image_id = image.id;
    node.uri = image.uri;
    for (int k = 0; k < bank.size(); ++k) {
      if (!dets[i][k].empty()) {
        node.anchors.push_back({k, dets[i][k][0].box, dets[i][k][0].score});
      }
    }
    for (const auto& m : models) {
      const auto& labels = ds.labels.size() > static_cast<size_t>(i)
                               ? ds.labels[i]
                               : std::map<std::string, int>{};
      auto it = labels.find(m.concept_name);
      if (it != labels.end() && it->second < 0) continue;
      for (const auto& d : detect_part(m, image, features[i],
                                       cfg.parts_per_image, cfg.nms_iou)) {
        node.parts.push_back({m.concept_name, d.box, d.score});
        feats[i].push_back(box_features(image, dets[i], d.box, cfg.overlap));
      }
    }
  });

  // Best match of every part box among the part boxes of other nodes.
  std::vector<std::vector<AtlasEdge>> per_node(n);
  const int k_anchors = bank.size();
  parallel_for(n, cfg.threads, [&](int i) {
    for (int b = 0; b < static_cast<int>(feats[i].size()); ++b) {
      const BoxFeatures& s = feats[i][b];
      double best = -std::numeric_limits<double>::infinity();
      int best_node = -1, best_box = -1;
      double best_app = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        for (int c = 0; c < static_cast<int>(feats[j].size()); ++c) {
          const BoxFeatures& t = feats[j][c];
          const double app = s.a.dot(t.a);
          const double sim = app * s.g.dot(t.g);
          if (sim > best) {
            best = sim;
            best_node = j;
            best_box = c;
            best_app = app;
          }
        }
      }
      if (best_node < 0) continue;
      const BoxFeatures& t = feats[best_node][best_box];
      std::vector<AtlasContribution> terms(k_anchors);
      for (int k = 0; k < k_anchors; ++k) {
        terms[k] = {k, best_app * s.g[k] * t.g[k]};
      }
      std::stable_sort(terms.begin(), terms.end(),
                       [](const auto& x, const auto& y) { return x.value > y.value; });
      AtlasEdge e{i, b, best_node, best_box, best, {}, 0};
      const int keep = std::min(k_anchors, AtlasGraph::kMaxContributions);
      e.contributions.assign(terms.begin(), terms.begin() + keep);
      for (int k = keep; k < k_anchors; ++k) e.other_contribution += terms[k].value;
      per_node[i].push_back(std::move(e));
    }
  });
  for (auto& v : per_node) {
    for (auto& e : v) g.edges.push_back(std::move(e));
  }
  if (cfg.top_edges >= 0 && static_cast<int>(g.edges.size()) > cfg.top_edges) {
    std::stable_sort(g.edges.begin(), g.edges.end(),
                     [](const AtlasEdge& x, const AtlasEdge& y) {
                       return x.similarity > y.similarity;
                     });
    g.edges.resize(cfg.top_edges);
  }
  return g;
}

Json to_json(const AtlasGraph& g) {
  Json j = versioned("partatlas-atlas");
  j["nodes"] = Json::array();
  for (const auto& node : g.nodes) {
    Json jn{{"image", node.image_id}, {"uri", node.uri}};
    jn["parts"] = Json::array();
    for (const auto& p : node.parts) {
      jn["parts"].push_back({{"concept", p.concept_name},
                             {"box", region_to_json(p.box)},
                             {"score", p.score}});
    }
    jn["anchors"] = Json::array();
    for (const auto& a : node.anchors) {
      jn["anchors"].push_back({{"anchor", a.anchor},
                               {"box", region_to_json(a.box)},
                               {"score", a.score}});
    }
    j["nodes"].push_back(std::move(jn));
  }
  j["edges"] = Json::array();
  for (const auto& e : g.edges) {
    Json je{{"source", {{"node", e.source_node}, {"box", e.source_box}}},
            {"target", {{"node", e.target_node}, {"box", e.target_box}}},
            {"similarity", e.similarity},
            {"other_contribution", e.other_contribution}};
    je["contributions"] = Json::array();
    for (const auto& c : e.contributions) {
      je["contributions"].push_back({{"anchor", c.anchor}, {"value", c.value}});
    }
    j["edges"].push_back(std::move(je));
  }
  return j;
}

AtlasGraph atlas_from_json(const Json& j) {
  check_format(j, "partatlas-atlas");
  AtlasGraph g;
  try {
    for (const auto& jn : j.at("nodes")) {
      AtlasNode node;
      node.image_id = jn.at("image").get<std::string>();
      node.uri = jn.value("uri", "");
      for (const auto& p : jn.at("parts")) {
        node.parts.push_back({p.at("concept").get<std::string>(),
                              region_from_json(p.at("box")),
                              p.at("score").get<double>()});
      }
      for (const auto& a : jn.at("anchors")) {
        node.anchors.push_back({a.at("anchor").get<int>(),
                                region_from_json(a.at("box")),
                                a.at("score").get<double>()});
      }
      g.nodes.push_back(std::move(node));
    }
    for (const auto& je : j.at("edges")) {
      AtlasEdge e;
      e.source_node = je.at("source").at("node").get<int>();
      e.source_box = je.at("source").at("box").get<int>();
      e.target_node = je.at("target").at("node").get<int>();
      e.target_box = je.at("target").at("box").get<int>();
      e.similarity = je.at("similarity").get<double>();
      e.other_contribution = je.at("other_contribution").get<double>();
      for (const auto& c : je.at("contributions")) {
        e.contributions.push_back({c.at("anchor").get<int>(),
                                   c.at("value").get<double>()});
      }
      g.edges.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("atlas: ") + e.what());
  }
  g.validate();
  return g;
}

}  // namespace partatlas
