#include "partatlas/mil.h"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "partatlas/error.h"
#include "partatlas/parallel.h"

namespace partatlas {
namespace {

const Eigen::MatrixXd& bag_of(const BagEmbeddings& bags, int image) {
  if (image < 0 || image >= static_cast<int>(bags.size()) ||
      bags[image].rows() == 0) {
    std::ostringstream os;
    os << "no embeddings for image " << image;
    throw DataError(os.str());
  }
  return bags[image];
}

// Max-scoring row of a bag; ties go to the lowest index.
int argmax_row(const Eigen::MatrixXd& bag, const Eigen::VectorXd& w,
               double* best_score = nullptr) {
  const Eigen::VectorXd s = bag * w;
  int best = 0;
  for (Eigen::Index p = 1; p < s.size(); ++p) {
    if (s[p] > s[best]) best = static_cast<int>(p);
  }
  if (best_score) *best_score = s[best];
  return best;
}

}  // namespace

void MilConfig::validate() const {
  if (lambda < 0) throw ConfigError("MIL lambda must be non-negative");
  if (schedule.appearance_rounds < 0 || schedule.joint_rounds < 0 ||
      schedule.total() < 1) {
    throw ConfigError("MIL schedule needs at least one round");
  }
  if (has_geometry(variant) && schedule.joint_rounds < 1) {
    throw ConfigError("geometric variants need at least one joint round");
  }
  if (solver.epochs < 1) throw ConfigError("MIL solver epochs must be >= 1");
  if (!(solver.learning_rate > 0)) {
    throw ConfigError("MIL solver learning_rate must be > 0");
  }
}

BagEmbeddings embed_bags(const std::vector<ImageFeatures>& features,
                         Variant variant, const WeakImageSet& data,
                         int threads) {
  BagEmbeddings bags(features.size());
  parallel_for(static_cast<int>(data.items.size()), threads, [&](int i) {
    const int img = data.items[i].image;
    if (img < 0 || img >= static_cast<int>(features.size())) {
      throw DataError("weak set references an image outside the store");
    }
    if (features[img].proposal_count() == 0) {
      std::ostringstream os;
      os << "image " << img << " has no proposals";
      throw DataError(os.str());
    }
    bags[img] = features[img].embed_all(variant);
  });
  return bags;
}

double mil_objective(const Eigen::VectorXd& w, double lambda,
                     const BagEmbeddings& bags, const WeakImageSet& data,
                     const Selections* selections) {
  if (selections && selections->size() != data.items.size()) {
    throw InvalidInput("selections do not cover the weak set");
  }
  double loss = 0;
  for (size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    const Eigen::MatrixXd& bag = bag_of(bags, item.image);
    if (bag.cols() != w.size()) {
      throw DataError("embedding dimension does not match the model");
    }
    double s = 0;
    if (item.label > 0 && selections) {
      const int sel = (*selections)[i];
      if (sel < 0 || sel >= bag.rows()) {
        throw InvalidInput("selection outside the proposal list");
      }
      s = bag.row(sel).dot(w);
    } else {
      argmax_row(bag, w, &s);
    }
    loss += std::max(0.0, 1.0 - item.label * s);
  }
  const double n = static_cast<double>(data.items.size());
  return 0.5 * lambda * w.squaredNorm() + (n > 0 ? loss / n : 0.0);
}

ExemplarFactor::ExemplarFactor(const std::vector<ImageFeatures>& features,
                               const ExemplarSpec& spec,
                               const DescriptorStore& store)
    : beta_(spec.beta) {
  if (!(spec.beta >= 0)) throw ConfigError("exemplar beta must be >= 0");
  if (spec.image < 0 || spec.image >= store.size() ||
      spec.image >= static_cast<int>(features.size())) {
    throw ConfigError("exemplar image is not in the store");
  }
  const ImageRecord& image = store[spec.image];
  if (image.proposal_count() == 0) {
    throw DataError("exemplar image '" + image.id + "' has no proposals");
  }
  const int p = image.find_proposal(spec.box).value_or(
      image.nearest_proposal(spec.box));
  reference_ = features[spec.image].appearance.row(p).transpose();
}

double ExemplarFactor::affinity(const ImageFeatures& image,
                                int proposal) const {
  return std::exp(beta_ * image.appearance.row(proposal).dot(reference_));
}

double ExemplarFactor::normalizer(const std::vector<ImageFeatures>& features,
                                  const WeakImageSet& data,
                                  const Selections& selections) const {
  double sum = 0;
  int n = 0;
  for (size_t i = 0; i < data.items.size(); ++i) {
    if (data.items[i].label <= 0) continue;
    sum += affinity(features[data.items[i].image], selections[i]);
    ++n;
  }
  return n > 0 ? sum / n : 1.0;
}

int relocalize(const Eigen::VectorXd& w, const Eigen::MatrixXd& bag,
               const ImageFeatures* features, const ExemplarFactor* exemplar,
               double c) {
  if (bag.rows() == 0) throw InvalidInput("relocalize on an empty bag");
  if (!exemplar) return argmax_row(bag, w);
  if (!features) throw InvalidInput("exemplar factor needs image features");
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index p = 0; p < bag.rows(); ++p) {
    const double v =
        bag.row(p).dot(w) * (exemplar->affinity(*features, static_cast<int>(p)) / c);
    if (v > best_value) {
      best_value = v;
      best = static_cast<int>(p);
    }
  }
  return best;
}

int initial_selection(const ImageRecord& image) {
  if (image.proposal_count() == 0) {
    throw DataError("image '" + image.id + "' has no proposals");
  }
  for (int p = 0; p < image.proposal_count(); ++p) {
    const Region& r = image.proposals[p];
    if (r.x1() <= 0 && r.y1() <= 0 && r.x2() >= image.width &&
        r.y2() >= image.height) {
      return p;
    }
  }
  int best = 0;
  for (int p = 1; p < image.proposal_count(); ++p) {
    if (image.proposals[p].area() > image.proposals[best].area()) best = p;
  }
  return best;
}

Eigen::VectorXd solve_w(const Eigen::VectorXd& w0, double lambda,
                        const BagEmbeddings& bags, const WeakImageSet& data,
                        const Selections& selections, const MilSolver& solver,
                        uint64_t stream) {
  const int n = static_cast<int>(data.items.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(solver.seed + 0x9e3779b97f4a7c15ULL * (stream + 1));

  Eigen::VectorXd w = w0;
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(w0.size());
  long steps = 0;
  for (int e = 1; e <= solver.epochs; ++e) {
    for (int i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const double eta = solver.learning_rate / std::sqrt(static_cast<double>(e));
    for (int idx : order) {
      const auto& item = data.items[idx];
      const Eigen::MatrixXd& bag = bag_of(bags, item.image);
      const int row = item.label > 0 ? selections[idx] : argmax_row(bag, w);
      const double s = bag.row(row).dot(w);
      Eigen::VectorXd g = lambda * w;
      if (1.0 - item.label * s > 0) g -= item.label * bag.row(row).transpose();
      w -= eta * g;
      ++steps;
      avg += (w - avg) / static_cast<double>(steps);
    }
  }
  if (!w.allFinite()) throw NumericError("MIL w-step diverged");

  Eigen::VectorXd best = w0;
  double best_obj = mil_objective(w0, lambda, bags, data, &selections);
  for (const Eigen::VectorXd* cand : {&w, &avg}) {
    const double obj = mil_objective(*cand, lambda, bags, data, &selections);
    if (obj < best_obj) {
      best_obj = obj;
      best = *cand;
    }
  }
  return best;
}

MilResult train_part(const DescriptorStore& store,
                     const std::vector<ImageFeatures>& features,
                     const WeakImageSet& data, const MilConfig& cfg,
                     const std::optional<ExemplarSpec>& exemplar,
                     std::string concept_name) {
  cfg.validate();
  data.validate();
  if (static_cast<int>(features.size()) != store.size()) {
    throw InvalidInput("features do not cover the store");
  }
  const bool geometric = has_geometry(cfg.variant);
  int num_anchors = 0;
  for (const auto& item : data.items) {
    const ImageFeatures& f = features.at(item.image);
    if (geometric && !f.has_geometry()) {
      throw ConfigError(std::string("variant ") +
                        std::string(to_string(cfg.variant)) +
                        " needs an anchor bank");
    }
    num_anchors = f.num_anchors();
  }

  const int n = static_cast<int>(data.items.size());
  Selections sel(n, -1);
  std::vector<int> positives;
  for (int i = 0; i < n; ++i) {
    if (data.items[i].label > 0) {
      sel[i] = initial_selection(store[data.items[i].image]);
      positives.push_back(i);
    }
  }
  std::optional<ExemplarFactor> factor;
  if (exemplar) factor.emplace(features, *exemplar, store);

  MilResult result;
  Eigen::VectorXd w;
  std::optional<Variant> current;
  BagEmbeddings bags;
  for (int r = 0; r < cfg.schedule.total(); ++r) {
    const Variant v = (geometric && r < cfg.schedule.appearance_rounds)
                          ? appearance_variant(cfg.variant)
                          : cfg.variant;
    if (v != current) {
      bags = embed_bags(features, v, data, cfg.threads);
      w = Eigen::VectorXd::Zero(
          embedding_dim(v, store.dim(), has_geometry(v) ? num_anchors : 0));
      current = v;
    }
    w = solve_w(w, cfg.lambda, bags, data, sel, cfg.solver,
                static_cast<uint64_t>(r));

    const double c = factor ? factor->normalizer(features, data, sel) : 1.0;
    Selections next = sel;
    parallel_for(static_cast<int>(positives.size()), cfg.threads, [&](int j) {
      const int i = positives[j];
      const int img = data.items[i].image;
      next[i] = relocalize(w, bags[img], &features[img],
                           factor ? &*factor : nullptr, c);
    });
    RoundLog entry;
    entry.round = r;
    entry.phase = v;
    for (int i : positives) entry.changed += next[i] != sel[i];
    sel = std::move(next);
    entry.objective = mil_objective(w, cfg.lambda, bags, data, &sel);
    result.log.push_back(entry);
  }

  PartModel& m = result.model;
  m.concept_name = std::move(concept_name);
  m.variant = cfg.variant;
  m.w = std::move(w);
  m.appearance_dim = store.dim();
  m.num_anchors = geometric ? num_anchors : 0;
  m.lambda = cfg.lambda;
  m.schedule = cfg.schedule;
  m.solver = cfg.solver;
  result.selections = std::move(sel);
  return result;
}

Eigen::VectorXd score_proposals(const PartModel& model,
                                const ImageFeatures& features) {
  if (features.proposal_count() == 0) return Eigen::VectorXd();
  const Eigen::MatrixXd e = features.embed_all(model.variant);
  if (e.cols() != model.w.size()) {
    std::ostringstream os;
    os << "model dimension " << model.w.size()
       << " does not match the embedding dimension " << e.cols();
    throw ConfigError(os.str());
  }
  return e * model.w;
}

std::vector<Detection> detect_part(const PartModel& model,
                                   const ImageRecord& image,
                                   const ImageFeatures& features, int top_n,
                                   double nms_iou) {
  if (top_n < 1) throw InvalidInput("top_n must be >= 1");
  const Eigen::VectorXd s = score_proposals(model, features);
  std::vector<double> scores(s.data(), s.data() + s.size());
  std::vector<Detection> out;
  for (int idx : greedy_nms(image.proposals, scores, nms_iou, top_n)) {
    out.push_back({image.proposals[idx], scores[idx]});
  }
  return out;
}

}  // namespace partatlas
