#ifndef PARTATLAS_ATLAS_H_
#define PARTATLAS_ATLAS_H_

#include <string>
#include <vector>

#include "partatlas/anchors.h"
#include "partatlas/dataset.h"
#include "partatlas/io.h"
#include "partatlas/mil.h"
#include "partatlas/overlap.h"

namespace partatlas {

struct AtlasBox {
  std::string concept_name;
  Region box{0, 0, 1, 1};
  double score = 0;

  friend bool operator==(const AtlasBox&, const AtlasBox&) = default;
};

struct AtlasAnchor {
  int anchor = 0;
  Region box{0, 0, 1, 1};
  double score = 0;

  friend bool operator==(const AtlasAnchor&, const AtlasAnchor&) = default;
};

struct AtlasNode {
  std::string image_id;
  std::string uri;
  std::vector<AtlasBox> parts;
  std::vector<AtlasAnchor> anchors;  // top detection of each anchor

  friend bool operator==(const AtlasNode&, const AtlasNode&) = default;
};

struct AtlasContribution {
  int anchor = 0;
  double value = 0;

  friend bool operator==(const AtlasContribution&,
                         const AtlasContribution&) = default;
};

struct AtlasEdge {
  int source_node = 0;
  int source_box = 0;
  int target_node = 0;
  int target_box = 0;
  double similarity = 0;
  // Largest per-anchor terms, descending, at most kMaxContributions.
  std::vector<AtlasContribution> contributions;
  // Sum of the per-anchor terms not listed.
  double other_contribution = 0;

  friend bool operator==(const AtlasEdge&, const AtlasEdge&) = default;
};

struct AtlasGraph {
  static constexpr int kMaxContributions = 10;

  std::vector<AtlasNode> nodes;
  std::vector<AtlasEdge> edges;

  // Throws DataError on a dangling endpoint or a malformed contribution list.
  void validate() const;

  friend bool operator==(const AtlasGraph&, const AtlasGraph&) = default;
};

struct AtlasConfig {
  int parts_per_image = 1;
  int detections_per_anchor = 5;
  double nms_iou = 0.3;
  // Keep this many edges, highest similarity first; negative keeps all.
  int top_edges = -1;
  OverlapConfig overlap;
  int threads = 1;
};

// Detects each model's part in every image not labeled negative for its
// concept, then links every part box to the most similar part box in another
// image under the L2-normalized appearance-geometry embedding. With
// normalized a (x) g, the similarity splits per anchor k as
// g_k g'_k <a, a'> / (|a||g||a'||g'|).
AtlasGraph export_atlas(const std::vector<PartModel>& models,
                        const AnchorBank& bank, const Dataset& ds,
                        const AtlasConfig& cfg);

Json to_json(const AtlasGraph& g);
AtlasGraph atlas_from_json(const Json& j);

}  // namespace partatlas

#endif  // PARTATLAS_ATLAS_H_
