#include "partatlas/synthetic.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "partatlas/error.h"

namespace partatlas {
namespace {

// Random orthonormal columns.
Eigen::MatrixXd orthonormal(int dim, int count, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd m(dim, count);
  for (int j = 0; j < count; ++j) {
    for (int i = 0; i < dim; ++i) m(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(dim, count);
}

Region map_to_frame(const Region& unit, const Region& frame) {
  return Region(frame.x1() + unit.x1() * frame.width(),
                frame.y1() + unit.y1() * frame.height(),
                frame.x1() + unit.x2() * frame.width(),
                frame.y1() + unit.y2() * frame.height());
}

bool inside(const Region& r, double size) {
  return r.x1() >= 0 && r.y1() >= 0 && r.x2() <= size && r.y2() <= size;
}

// A scene element with a known pattern. Its own box gets the pattern as
// descriptor; every other proposal mixes element patterns by overlap.
struct Element {
  Region box;
  Eigen::VectorXd pattern;
};

struct SceneBuilder {
  double size;
  std::vector<Element> elements;
  std::vector<Region> proposals;
  std::vector<int> element_of;  // per proposal, -1 for generic boxes

  int add_element(const Region& box, Eigen::VectorXd pattern) {
    elements.push_back({box, std::move(pattern)});
    proposals.push_back(box);
    element_of.push_back(static_cast<int>(elements.size()) - 1);
    return static_cast<int>(proposals.size()) - 1;
  }
  int add_box(const Region& box) {
    const auto dup = std::find(proposals.begin(), proposals.end(), box);
    if (dup != proposals.end()) return static_cast<int>(dup - proposals.begin());
    proposals.push_back(box);
    element_of.push_back(-1);
    return static_cast<int>(proposals.size()) - 1;
  }
};

class Generator {
 public:
  explicit Generator(const SyntheticProfile& p)
      : p_(p), rng_(p.seed), unit_(0.0, 1.0) {
    const int np = static_cast<int>(p.parts.size());
    int count = 1 + np + p.clutter_patterns;
    if (p.ambiguity) count += 3;
    if (count > p.descriptor_dim) {
      throw ConfigError("descriptor_dim too small for the planted patterns");
    }
    const Eigen::MatrixXd basis = orthonormal(p.descriptor_dim, count, rng_);
    int c = 0;
    object_ = basis.col(c++);
    for (int i = 0; i < np; ++i) parts_.push_back(basis.col(c++));
    for (int i = 0; i < p.clutter_patterns; ++i) clutter_.push_back(basis.col(c++));
    if (p.ambiguity) {
      inner_ = basis.col(c++);
      outer_ = basis.col(c++);
      partness_ = basis.col(c++);
      for (int i = 0; i < np; ++i) {
        if (p.parts[i].name == p.ambiguity->part) ambiguous_ = i;
      }
    }
  }

  SyntheticWorld run();

 private:
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(rng_); }
  int pick(int n) { return static_cast<int>(rng_() % static_cast<uint64_t>(n)); }

  Region random_box(double min_side, double max_side) {
    const double w = uniform(min_side, max_side);
    const double h = uniform(min_side, max_side);
    const double x = uniform(0, p_.image_size - w);
    const double y = uniform(0, p_.image_size - h);
    return Region(x, y, x + w, y + h);
  }

  // Free placement of a w x h box avoiding `avoid`; nullopt when none found.
  std::optional<Region> place_outside(double w, double h,
                                      const std::vector<Region>& avoid) {
    if (w >= p_.image_size || h >= p_.image_size) return std::nullopt;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const double x = uniform(0, p_.image_size - w);
      const double y = uniform(0, p_.image_size - h);
      const Region r(x, y, x + w, y + h);
      const bool clear = std::none_of(avoid.begin(), avoid.end(), [&](const Region& a) {
        return intersection_area(r, a) > 0;
      });
      if (clear) return r;
    }
    return std::nullopt;
  }

  std::optional<Region> near_miss(const Region& r) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double s = uniform(0.7, 1.4);
      const double w = r.width() * s;
      const double h = r.height() * s;
      const double dx = uniform(0.25, 0.6) * r.width() * (unit_(rng_) < 0.5 ? -1 : 1);
      const double dy = uniform(-0.3, 0.3) * r.height();
      const double cx = std::clamp(r.center_x() + dx, w / 2, p_.image_size - w / 2);
      const double cy = std::clamp(r.center_y() + dy, h / 2, p_.image_size - h / 2);
      if (w >= p_.image_size || h >= p_.image_size) continue;
      Region q(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2);
      if (iou(q, r) < 0.9) return q;
    }
    return std::nullopt;
  }

  Eigen::VectorXd part_pattern(int part, double salience) const {
    if (part != ambiguous_) return parts_[part];
    return outer_ + (1.0 - salience) * partness_;
  }

  Eigen::VectorXd noisy_unit(const Eigen::VectorXd& v) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd out = v;
    if (p_.noise > 0) {
      for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += p_.noise * gauss(rng_);
    }
    const double n = out.norm();
    if (n == 0) throw NumericError("zero synthetic descriptor");
    return out / n;
  }

  void add_clutter(SceneBuilder& b, int count, const std::vector<Region>& avoid) {
    for (int i = 0; i < count; ++i) {
      const double w = uniform(0.1, 0.3) * p_.image_size;
      const double h = uniform(0.1, 0.3) * p_.image_size;
      if (auto r = place_outside(w, h, avoid)) {
        b.add_element(*r, clutter_[pick(static_cast<int>(clutter_.size()))]);
      }
    }
  }

  // Object with all parts inside `frame`; fills planted boxes in `info`.
  void add_object(SceneBuilder& b, const Region& frame, SceneInfo& info,
                  std::vector<GtObject>& gt);

  void finish(SceneBuilder& b, SceneInfo& info, ImageRecord& rec);

  const SyntheticProfile& p_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_;
  Eigen::VectorXd object_;
  std::vector<Eigen::VectorXd> parts_;
  std::vector<Eigen::VectorXd> clutter_;
  Eigen::VectorXd inner_, outer_, partness_;
  int ambiguous_ = -1;
  Eigen::VectorXd background_;
  double salience_ = 0.5;
};

}  // namespace

std::vector<PartSpec> SyntheticProfile::default_parts() {
  return {{"cap", Region(0.3, 0.05, 0.7, 0.35)},
          {"door", Region(0.05, 0.5, 0.4, 0.95)},
          {"wheel", Region(0.6, 0.6, 0.9, 0.9)}};
}

void SyntheticProfile::validate() const {
  if (num_images < 2) throw ConfigError("synthetic profile needs >= 2 images");
  if (!(image_size >= 16)) throw ConfigError("image_size must be >= 16");
  if (parts.empty()) throw ConfigError("synthetic profile needs parts");
  for (const auto& part : parts) {
    const Region& r = part.box;
    if (r.x1() < 0 || r.y1() < 0 || r.x2() > 1 || r.y2() > 1) {
      throw ConfigError("part '" + part.name + "' does not fit its object frame");
    }
  }
  if (!(outlier_fraction >= 0 && outlier_fraction < 1)) {
    throw ConfigError("outlier_fraction must lie in [0, 1)");
  }
  if (!(negative_fraction > 0 && negative_fraction < 1)) {
    throw ConfigError("negative_fraction must lie in (0, 1)");
  }
  if (!(zoom_fraction >= 0 && zoom_fraction <= 1)) {
    throw ConfigError("zoom_fraction must lie in [0, 1]");
  }
  if (!(scale_jitter >= 1)) throw ConfigError("scale_jitter must be >= 1");
  if (!(max_object_scale > 0 && max_object_scale <= 1)) {
    throw ConfigError("max_object_scale must lie in (0, 1]");
  }
  if (noise < 0 || background < 0) {
    throw ConfigError("noise and background must be non-negative");
  }
  if (distractors < 0 || clutter_patterns < 1) {
    throw ConfigError("distractors >= 0 and clutter_patterns >= 1 required");
  }
  if (confuser_rate < 0 || confuser_rate > 1 || negative_confuser_rate < 0 ||
      negative_confuser_rate > 1) {
    throw ConfigError("confuser rates must lie in [0, 1]");
  }
  if (ambiguity) {
    const bool known = std::any_of(parts.begin(), parts.end(), [&](const PartSpec& s) {
      return s.name == ambiguity->part;
    });
    if (!known) throw ConfigError("ambiguous part '" + ambiguity->part + "' unknown");
    const Region& r = ambiguity->inner;
    if (r.x1() < 0 || r.y1() < 0 || r.x2() > 1 || r.y2() > 1) {
      throw ConfigError("inner extent does not fit the outer one");
    }
    if (!(ambiguity->salience_spread >= 0 && ambiguity->salience_spread <= 1)) {
      throw ConfigError("salience_spread must lie in [0, 1]");
    }
    if (!(ambiguity->negative_rate >= 0 && ambiguity->negative_rate <= 1)) {
      throw ConfigError("ambiguity negative_rate must lie in [0, 1]");
    }
  }
}

std::string_view to_string(SceneKind k) {
  switch (k) {
    case SceneKind::kObject:
      return "object";
    case SceneKind::kZoom:
      return "zoom";
    case SceneKind::kOutlier:
      return "outlier";
    case SceneKind::kNegative:
      return "negative";
  }
  return "?";
}

std::vector<int> SyntheticWorld::clean_positives(
    const std::string& concept_name) const {
  std::vector<int> out;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    if (s.query == concept_name &&
        (s.kind == SceneKind::kObject || s.kind == SceneKind::kZoom)) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

namespace {

void Generator::add_object(SceneBuilder& b, const Region& frame,
                           SceneInfo& info, std::vector<GtObject>& gt) {
  if (inside(frame, p_.image_size)) {
    b.add_element(frame, object_);
    info.object = frame;
  }
  for (size_t i = 0; i < p_.parts.size(); ++i) {
    const Region box = map_to_frame(p_.parts[i].box, frame);
    if (!inside(box, p_.image_size)) continue;
    const std::string& name = p_.parts[i].name;
    const int idx = b.add_element(box, part_pattern(static_cast<int>(i), salience_));
    if (static_cast<int>(i) == ambiguous_) {
      const Region in = map_to_frame(p_.ambiguity->inner, box);
      const int in_idx = b.add_element(in, inner_ + salience_ * partness_);
      info.outer_extent = idx;
      info.inner_extent = in_idx;
      const Region& marked = p_.ambiguity->annotate_outer ? box : in;
      info.planted[name].push_back(p_.ambiguity->annotate_outer ? idx : in_idx);
      gt.push_back({name, marked});
    } else {
      info.planted[name].push_back(idx);
      gt.push_back({name, box});
    }
  }
}

void Generator::finish(SceneBuilder& b, SceneInfo& info, ImageRecord& rec) {
  const double size = p_.image_size;
  // Context boxes of every element, then distractors.
  const size_t planted = b.elements.size();
  for (size_t e = 0; e < planted; ++e) {
    const Region& box = b.elements[e].box;
    if (box.width() < size || box.height() < size) {
      b.add_box(context_region(box, 2.0, size, size));
    }
  }
  for (int d = 0; d < p_.distractors; ++d) {
    std::optional<Region> r;
    if (d % 2 == 0 && planted > 0) {
      r = near_miss(b.elements[pick(static_cast<int>(planted))].box);
    }
    if (!r) r = random_box(0.08 * size, 0.6 * size);
    b.add_box(*r);
  }

  // Whole image stays first; the rest is shuffled so that proposal order
  // carries no information.
  const int n = static_cast<int>(b.proposals.size()) + 1;
  std::vector<int> order(n - 1);
  for (int i = 0; i < n - 1; ++i) order[i] = i;
  for (int i = n - 1; i > 1; --i) std::swap(order[i - 1], order[pick(i)]);
  std::vector<int> new_index(n - 1);
  rec.proposals.assign(1, Region(0, 0, size, size));
  std::vector<int> source(1, -2);
  for (int j = 0; j < n - 1; ++j) {
    new_index[order[j]] = j + 1;
    rec.proposals.push_back(b.proposals[order[j]]);
    source.push_back(order[j]);
  }
  auto remap = [&](int& idx) {
    if (idx >= 0) idx = new_index[idx];
  };
  for (auto& [name, list] : info.planted) {
    for (int& idx : list) remap(idx);
  }
  for (int& idx : info.confusers) remap(idx);
  remap(info.inner_extent);
  remap(info.outer_extent);

  rec.width = size;
  rec.height = size;
  rec.descriptors.resize(n, p_.descriptor_dim);
  for (int j = 0; j < n; ++j) {
    const int src = source[j];
    Eigen::VectorXd v;
    if (src >= 0 && b.element_of[src] >= 0) {
      v = b.elements[b.element_of[src]].pattern;
    } else {
      const Region& box = rec.proposals[j];
      v = p_.background * background_;
      for (const auto& e : b.elements) {
        const double o = iou(box, e.box);
        if (o > 0) v += o * e.pattern;
      }
    }
    rec.descriptors.row(j) = noisy_unit(v).cast<float>().transpose();
  }
}

SyntheticWorld Generator::run() {
  const int n = p_.num_images;
  const int np = static_cast<int>(p_.parts.size());
  const int negatives = std::max(1, static_cast<int>(std::lround(p_.negative_fraction * n)));
  const int positives = n - negatives;
  if (positives < 1) throw ConfigError("synthetic profile leaves no positives");
  const int outliers = static_cast<int>(std::lround(p_.outlier_fraction * positives));
  const int clean = positives - outliers;
  const int zooms = p_.congruent_pairs ? 0 : static_cast<int>(std::lround(p_.zoom_fraction * clean));

  std::vector<SceneKind> kinds;
  kinds.insert(kinds.end(), clean - zooms, SceneKind::kObject);
  kinds.insert(kinds.end(), zooms, SceneKind::kZoom);
  kinds.insert(kinds.end(), outliers, SceneKind::kOutlier);
  if (!p_.congruent_pairs) {
    for (int i = positives; i > 1; --i) std::swap(kinds[i - 1], kinds[pick(i)]);
  }
  kinds.insert(kinds.end(), negatives, SceneKind::kNegative);

  SyntheticWorld world;
  Dataset& ds = world.dataset;
  for (const auto& part : p_.parts) ds.vocabulary.push_back(part.name);
  ds.ground_truth.emplace();
  const double size = p_.image_size;
  const double min_scale = p_.max_object_scale / p_.scale_jitter;
  int query_counter = 0;
  std::optional<Region> previous_frame;

  for (int i = 0; i < n; ++i) {
    SceneBuilder b;
    b.size = size;
    SceneInfo info;
    info.kind = kinds[i];
    std::vector<GtObject> gt;
    Eigen::VectorXd bg = Eigen::VectorXd::Zero(p_.descriptor_dim);
    for (const auto& c : clutter_) bg += uniform(0, 1) * c;
    background_ = bg / bg.norm();
    salience_ = 0.5;
    if (p_.ambiguity) {
      const double half = p_.ambiguity->salience_spread / 2;
      salience_ = unit_(rng_) < 0.5 ? 0.5 - half : 0.5 + half;
    }

    std::map<std::string, int> labels;
    if (info.kind != SceneKind::kNegative) {
      const int q = query_counter++ % np;
      info.query = p_.parts[q].name;
      labels[info.query] = +1;

      if (info.kind == SceneKind::kObject) {
        Region frame(0, 0, 1, 1);
        const bool second_of_pair =
            p_.congruent_pairs && (query_counter % 2 == 0) && previous_frame;
        const double scale = min_scale * std::exp(uniform(0, std::log(p_.scale_jitter)));
        const double side = scale * size;
        const double x = uniform(0, size - side);
        const double y = uniform(0, size - side);
        frame = Region(x, y, x + side, y + side);
        add_object(b, frame, info, gt);
        if (second_of_pair) {
          info.partner = i - 1;
          world.scenes[i - 1].partner = i;
          world.pairs.emplace_back(i - 1, i);
          world.pairs.emplace_back(i, i - 1);
          previous_frame.reset();
        } else {
          previous_frame = frame;
        }
        std::vector<Region> avoid{frame};
        if (unit_(rng_) < p_.confuser_rate) {
          const Region part = map_to_frame(p_.parts[q].box, frame);
          if (auto r = place_outside(part.width(), part.height(), avoid)) {
            info.confusers.push_back(b.add_element(*r, part_pattern(q, salience_)));
            avoid.push_back(*r);
          }
        }
        add_clutter(b, 1 + pick(2), avoid);
      } else {
        const bool zoom_other = info.kind == SceneKind::kOutlier && unit_(rng_) < 0.5;
        if (info.kind == SceneKind::kZoom || zoom_other) {
          int target = q;
          if (zoom_other) target = (q + 1 + pick(std::max(1, np - 1))) % np;
          if (np == 1) target = -1;
          if (target >= 0) {
            // Map the object frame so the target part fills 80% of the view.
            const Region& unit = p_.parts[target].box;
            const double side = 0.8 * size / std::max(unit.width(), unit.height());
            const double cx = size / 2 - (unit.center_x()) * side;
            const double cy = size / 2 - (unit.center_y()) * side;
            add_object(b, Region(cx, cy, cx + side, cy + side), info, gt);
          }
        }
        if (b.elements.empty()) add_clutter(b, 2 + pick(3), {});
        if (info.kind == SceneKind::kOutlier) {
          // Whatever landed in view is not the query part.
          info.planted.erase(info.query);
        }
      }
    } else {
      for (const auto& part : p_.parts) labels[part.name] = -1;
      std::vector<Region> avoid;
      if (unit_(rng_) < p_.negative_confuser_rate) {
        const int q = pick(np);
        const double side = uniform(0.15, 0.3) * size;
        if (auto r = place_outside(side, side, avoid)) {
          b.add_element(*r, part_pattern(q, 0.5));
          avoid.push_back(*r);
        }
      }
      if (p_.ambiguity && unit_(rng_) < p_.ambiguity->negative_rate) {
        for (const Eigen::VectorXd* e : {&inner_, &outer_}) {
          const double side = uniform(0.15, 0.3) * size;
          if (auto r = place_outside(side, side, avoid)) {
            b.add_element(*r, *e);
            avoid.push_back(*r);
          }
        }
      }
      add_clutter(b, 2 + pick(3), avoid);
    }

    ImageRecord rec;
    std::ostringstream id;
    id << "img" << std::setfill('0') << std::setw(4) << i;
    rec.id = id.str();
    finish(b, info, rec);
    if (info.kind == SceneKind::kOutlier) {
      // GT keeps the true content; a zoom on another part has its own boxes.
      std::erase_if(gt, [&](const GtObject& o) { return o.concept_name == info.query; });
    }
    ds.store.add(std::move(rec));
    ds.labels.push_back(std::move(labels));
    ds.ground_truth->push_back(std::move(gt));
    world.scenes.push_back(std::move(info));
  }
  return world;
}

}  // namespace

SyntheticWorld generate_synthetic(const SyntheticProfile& profile) {
  profile.validate();
  Generator g(profile);
  return g.run();
}

TwoPatternWorld generate_two_pattern(const TwoPatternProfile& p) {
  if (p.num_images < 2 || p.proposals < 2 || p.descriptor_dim < 4) {
    throw ConfigError("two-pattern profile too small");
  }
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss;
  const Eigen::MatrixXd basis = orthonormal(p.descriptor_dim, p.descriptor_dim, rng);
  TwoPatternWorld w;
  w.pattern_a = basis.col(0);
  w.pattern_b = basis.col(1);
  const int clutter_dims = p.descriptor_dim - 2;
  const int negatives = std::max(1, static_cast<int>(std::lround(p.negative_fraction * p.num_images)));
  for (int i = 0; i < p.num_images; ++i) {
    const bool positive = i < p.num_images - negatives;
    ImageRecord rec;
    rec.id = "pair" + std::to_string(i);
    rec.width = 100;
    rec.height = 100;
    rec.descriptors.resize(p.proposals, p.descriptor_dim);
    int a = -1;
    int b = -1;
    if (positive) {
      a = static_cast<int>(rng() % p.proposals);
      if (unit(rng) < p.b_rate) {
        b = static_cast<int>(rng() % (p.proposals - 1));
        if (b >= a) ++b;
      }
    }
    for (int j = 0; j < p.proposals; ++j) {
      const double x = 10.0 * (j % 4);
      const double y = 10.0 * (j / 4);
      rec.proposals.emplace_back(x, y, x + 30, y + 30);
      Eigen::VectorXd v;
      if (j == a) {
        v = w.pattern_a;
      } else if (j == b) {
        v = w.pattern_b;
      } else {
        v = basis.col(2 + static_cast<int>(rng() % clutter_dims));
      }
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] += p.noise * gauss(rng);
      rec.descriptors.row(j) = (v / v.norm()).cast<float>().transpose();
    }
    const int idx = w.store.add(std::move(rec));
    w.set.items.push_back({idx, positive ? +1 : -1});
    w.a_proposal.push_back(a);
    w.b_proposal.push_back(b);
  }
  return w;
}

}  // namespace partatlas
