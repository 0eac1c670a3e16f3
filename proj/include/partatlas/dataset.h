#ifndef PARTATLAS_DATASET_H_
#define PARTATLAS_DATASET_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "partatlas/region.h"

namespace partatlas {

// Appearance descriptors, one L2-normalized row per proposal. Stored as
// float32 to match the on-disk layout bit for bit.
using DescriptorMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kUnitNormTolerance = 1e-4;

struct ImageRecord {
  std::string id;
  double width = 0;
  double height = 0;
  std::string uri;
  std::vector<Region> proposals;
  DescriptorMatrix descriptors;

  Region bounds() const { return Region(0, 0, width, height); }
  int proposal_count() const { return static_cast<int>(proposals.size()); }
  Eigen::VectorXd descriptor(int proposal) const {
    return descriptors.row(proposal).cast<double>().transpose();
  }

  // Index of a proposal equal to `r`, if any.
  std::optional<int> find_proposal(const Region& r) const;
  // Proposal with the largest hard IoU to `r`; ties go to the lowest index.
  int nearest_proposal(const Region& r, double* best_iou = nullptr) const;

  friend bool operator==(const ImageRecord& a, const ImageRecord& b) {
    return a.id == b.id && a.width == b.width && a.height == b.height &&
           a.uri == b.uri && a.proposals == b.proposals &&
           a.descriptors.rows() == b.descriptors.rows() &&
           a.descriptors.cols() == b.descriptors.cols() &&
           a.descriptors == b.descriptors;
  }
};

// Per-image proposals and appearance descriptors, all with the same
// dimension d_a.
class DescriptorStore {
 public:
  DescriptorStore() = default;
  explicit DescriptorStore(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(images_.size()); }
  bool empty() const { return images_.empty(); }

  // Validates the record (unique id, row count, dimension, unit rows) and
  // returns its index. The first record fixes the dimension when it is 0.
  int add(ImageRecord record);

  const ImageRecord& operator[](int i) const { return images_.at(i); }
  std::optional<int> find(std::string_view id) const;
  const std::vector<ImageRecord>& images() const { return images_; }

  friend bool operator==(const DescriptorStore& a, const DescriptorStore& b) {
    return a.dim_ == b.dim_ && a.images_ == b.images_;
  }

 private:
  int dim_ = 0;
  std::vector<ImageRecord> images_;
  std::unordered_map<std::string, int> index_;
};

// Rescales rows whose norm is off unit by more than the tolerance. Returns
// the number of rows changed.
int normalize_rows(DescriptorMatrix& m);

struct LabeledImage {
  int image = 0;  // index into the DescriptorStore
  int label = 0;  // +1 or -1

  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

// Weakly labeled images: only image-level +1/-1 labels are known.
struct WeakImageSet {
  std::vector<LabeledImage> items;

  int count(int label) const;
  // Throws ConfigError unless at least one positive and one negative exist.
  void validate() const;
};

struct GtObject {
  std::string concept_name;
  Region box;
  bool difficult = false;
  bool truncated = false;

  friend bool operator==(const GtObject&, const GtObject&) = default;
};

// Ground-truth boxes per image, indexed like the DescriptorStore.
using GroundTruth = std::vector<std::vector<GtObject>>;

struct Dataset {
  std::vector<std::string> vocabulary;
  DescriptorStore store;
  // Per image: concept -> +1/-1. Missing concepts are unlabeled.
  std::vector<std::map<std::string, int>> labels;
  std::optional<GroundTruth> ground_truth;

  bool has_concept(std::string_view concept_name) const;
  // Positives are images labeled +1 for the concept, negatives those
  // labeled -1.
  WeakImageSet weak_set(std::string_view concept_name) const;
  // Set for anchor learning: positive when any concept is +1, negative when
  // labeled and every label is -1.
  WeakImageSet anchor_set() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace partatlas

#endif  // PARTATLAS_DATASET_H_
