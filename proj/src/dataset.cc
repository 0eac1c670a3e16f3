#include "partatlas/dataset.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "partatlas/error.h"

namespace partatlas {

std::optional<int> ImageRecord::find_proposal(const Region& r) const {
  for (int i = 0; i < proposal_count(); ++i) {
    if (proposals[i] == r) return i;
  }
  return std::nullopt;
}

int ImageRecord::nearest_proposal(const Region& r, double* best_iou) const {
  if (proposals.empty()) {
    throw InvalidInput("image '" + id + "' has no proposals");
  }
  int best = 0;
  double best_value = -1;
  for (int i = 0; i < proposal_count(); ++i) {
    const double v = iou(proposals[i], r);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  if (best_iou) *best_iou = best_value;
  return best;
}

int DescriptorStore::add(ImageRecord record) {
  if (index_.count(record.id)) {
    throw DataError("duplicate image id '" + record.id + "'");
  }
  if (!(record.width > 0) || !(record.height > 0)) {
    throw DataError("image '" + record.id + "' has non-positive size");
  }
  if (record.descriptors.rows() != record.proposal_count()) {
    std::ostringstream os;
    os << "image '" << record.id << "': " << record.descriptors.rows()
       << " descriptor rows for " << record.proposal_count() << " proposals";
    throw DataError(os.str());
  }
  if (dim_ == 0 && record.descriptors.rows() > 0) {
    dim_ = static_cast<int>(record.descriptors.cols());
  }
  if (record.descriptors.rows() > 0 && record.descriptors.cols() != dim_) {
    std::ostringstream os;
    os << "image '" << record.id << "': descriptor dimension "
       << record.descriptors.cols() << ", expected " << dim_;
    throw DataError(os.str());
  }
  for (Eigen::Index r = 0; r < record.descriptors.rows(); ++r) {
    const double n = record.descriptors.row(r).cast<double>().norm();
    if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
      std::ostringstream os;
      os << "image '" << record.id << "': descriptor row " << r
         << " has norm " << n;
      throw DataError(os.str());
    }
  }
  const int idx = size();
  index_.emplace(record.id, idx);
  images_.push_back(std::move(record));
  return idx;
}

std::optional<int> DescriptorStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int normalize_rows(DescriptorMatrix& m) {
  int changed = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).cast<double>().norm();
    if (std::abs(n - 1.0) > kUnitNormTolerance && n > 0) {
      m.row(r) = (m.row(r).cast<double>() / n).cast<float>();
      ++changed;
    }
  }
  return changed;
}

int WeakImageSet::count(int label) const {
  return static_cast<int>(std::count_if(
      items.begin(), items.end(),
      [label](const LabeledImage& li) { return li.label == label; }));
}

void WeakImageSet::validate() const {
  if (count(+1) == 0 || count(-1) == 0) {
    throw ConfigError(
        "weak image set needs at least one positive and one negative image");
  }
  for (const auto& li : items) {
    if (li.label != 1 && li.label != -1) {
      throw ConfigError("weak labels must be +1 or -1");
    }
  }
}

bool Dataset::has_concept(std::string_view concept_name) const {
  return std::find(vocabulary.begin(), vocabulary.end(), concept_name) !=
         vocabulary.end();
}

WeakImageSet Dataset::weak_set(std::string_view concept_name) const {
  if (!has_concept(concept_name)) {
    throw DataError("unknown concept '" + std::string(concept_name) + "'");
  }
  WeakImageSet set;
  const std::string key(concept_name);
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    auto it = labels[i].find(key);
    if (it != labels[i].end() && it->second != 0) {
      set.items.push_back({i, it->second > 0 ? 1 : -1});
    }
  }
  return set;
}

WeakImageSet Dataset::anchor_set() const {
  WeakImageSet set;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    if (labels[i].empty()) continue;
    const bool any_positive =
        std::any_of(labels[i].begin(), labels[i].end(),
                    [](const auto& kv) { return kv.second > 0; });
    const bool all_negative =
        std::all_of(labels[i].begin(), labels[i].end(),
                    [](const auto& kv) { return kv.second < 0; });
    if (any_positive) {
      set.items.push_back({i, 1});
    } else if (all_negative) {
      set.items.push_back({i, -1});
    }
  }
  return set;
}

}  // namespace partatlas
