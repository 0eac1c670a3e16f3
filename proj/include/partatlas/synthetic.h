#ifndef PARTATLAS_SYNTHETIC_H_
#define PARTATLAS_SYNTHETIC_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/dataset.h"

namespace partatlas {

// A part's box inside the unit object frame [0,1]^2.
struct PartSpec {
  std::string name;
  Region box;
};

// One part with two nested plausible extents. The outer extent is the
// part's box; the inner one is given in the outer box's unit frame. Each
// positive image favors one extent through a shared "partness" component
// split unevenly between the two.
struct AmbiguousExtent {
  std::string part;
  Region inner{0.25, 0.25, 0.75, 0.75};
  double salience_spread = 0.6;  // partness share is 0.5 +- spread/2
  bool annotate_outer = false;   // which extent the GT box marks
  // Chance that a negative holds look-alikes of both extents.
  double negative_rate = 1.0;
};

struct SyntheticProfile {
  int num_images = 200;
  double image_size = 256;
  std::vector<PartSpec> parts = default_parts();
  double negative_fraction = 0.3;
  double outlier_fraction = 0.2;  // of the positives
  double zoom_fraction = 0.7;     // of the clean positives
  double scale_jitter = 2.0;      // max/min object scale
  double max_object_scale = 0.7;  // object side / image side at most
  double noise = 0.1;             // descriptor noise per component
  double background = 0.3;        // weight of the per-image clutter term
  int distractors = 12;
  int descriptor_dim = 32;
  int clutter_patterns = 6;
  // Chance that an object scene also holds a look-alike of its query part
  // away from the object.
  double confuser_rate = 0.6;
  double negative_confuser_rate = 0.0;
  // Object scenes come in pairs related by a similarity transform.
  bool congruent_pairs = false;
  std::optional<AmbiguousExtent> ambiguity;
  uint64_t seed = 0;

  static std::vector<PartSpec> default_parts();
  void validate() const;
};

enum class SceneKind { kObject, kZoom, kOutlier, kNegative };

std::string_view to_string(SceneKind k);

struct SceneInfo {
  SceneKind kind = SceneKind::kNegative;
  std::string query;              // empty for negatives
  std::optional<Region> object;   // object frame when the object is present
  // concept -> proposal indices of its planted boxes
  std::map<std::string, std::vector<int>> planted;
  std::vector<int> confusers;     // look-alike proposal indices
  int inner_extent = -1;          // ambiguity profile only
  int outer_extent = -1;
  int partner = -1;               // congruent pair partner
};

struct SyntheticWorld {
  Dataset dataset;
  std::vector<SceneInfo> scenes;
  std::vector<std::pair<int, int>> pairs;  // congruent pairs, both orders

  // Positives of a concept whose query part is really present.
  std::vector<int> clean_positives(const std::string& concept_name) const;
};

SyntheticWorld generate_synthetic(const SyntheticProfile& profile);

// Minimal anchor-learning set: pattern A appears in every positive, pattern
// B in a fraction of them, negatives hold neither.
struct TwoPatternProfile {
  int num_images = 60;
  int proposals = 8;
  int descriptor_dim = 16;
  double b_rate = 0.4;
  double negative_fraction = 0.5;
  double noise = 0.05;
  uint64_t seed = 0;
};

struct TwoPatternWorld {
  DescriptorStore store;
  WeakImageSet set;
  Eigen::VectorXd pattern_a;
  Eigen::VectorXd pattern_b;
  std::vector<int> a_proposal;  // per image, -1 when absent
  std::vector<int> b_proposal;
};

TwoPatternWorld generate_two_pattern(const TwoPatternProfile& profile);

}  // namespace partatlas

#endif  // PARTATLAS_SYNTHETIC_H_
