#include "partatlas/matching.h"

#include <algorithm>
#include <limits>

#include "partatlas/error.h"
#include "partatlas/metrics.h"
#include "partatlas/parallel.h"

namespace partatlas {
namespace {

Eigen::VectorXd finish(Eigen::VectorXd v, bool normalize) {
  if (normalize) {
    const double n = v.norm();
    if (n > 0) v /= n;
  }
  return v;
}

Eigen::VectorXd assemble(const Eigen::VectorXd& a, const Eigen::VectorXd& g,
                         MatchVariant v, bool normalize) {
  switch (v) {
    case MatchVariant::kAnchorAG:
      return finish(joint_embed(a, g), normalize);
    case MatchVariant::kAnchorG:
      return finish(g, normalize);
    case MatchVariant::kA:
      return finish(a, normalize);
  }
  return a;
}

int appearance_proposal(const ImageRecord& image, const Region& r) {
  if (image.proposal_count() == 0) {
    throw DataError("image '" + image.id + "' has no proposals");
  }
  return image.find_proposal(r).value_or(image.nearest_proposal(r));
}

}  // namespace

std::string_view to_string(MatchVariant v) {
  switch (v) {
    case MatchVariant::kAnchorAG:
      return "anchor-ag";
    case MatchVariant::kAnchorG:
      return "anchor-g";
    case MatchVariant::kA:
      return "a";
  }
  return "?";
}

MatchVariant parse_match_variant(std::string_view name) {
  for (auto v : {MatchVariant::kAnchorAG, MatchVariant::kAnchorG, MatchVariant::kA}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown match variant '" + std::string(name) + "'");
}

Eigen::VectorXd match_embedding(const ImageRecord& image,
                                const ImageDetections& dets, const Region& r,
                                MatchVariant v, bool normalize,
                                const OverlapConfig& overlap) {
  const Eigen::VectorXd a = image.descriptor(appearance_proposal(image, r));
  Eigen::VectorXd g;
  if (v != MatchVariant::kA) g = geometric_embed(r, dets, overlap);
  return assemble(a, g, v, normalize);
}

Eigen::MatrixXd match_embeddings(const ImageRecord& image,
                                 const ImageDetections& dets, MatchVariant v,
                                 bool normalize, const OverlapConfig& overlap) {
  Eigen::MatrixXd out;
  for (int p = 0; p < image.proposal_count(); ++p) {
    const Eigen::VectorXd a = image.descriptor(p);
    Eigen::VectorXd g;
    if (v != MatchVariant::kA) g = geometric_embed(image.proposals[p], dets, overlap);
    const Eigen::VectorXd e = assemble(a, g, v, normalize);
    if (p == 0) out.resize(image.proposal_count(), e.size());
    out.row(p) = e.transpose();
  }
  return out;
}

int best_match(const Eigen::VectorXd& source, const Eigen::MatrixXd& target) {
  if (target.rows() == 0) throw InvalidInput("no target proposals to match");
  if (target.cols() != source.size()) {
    throw InvalidInput("source and target embeddings differ in dimension");
  }
  const Eigen::VectorXd s = target * source;
  int best = 0;
  for (Eigen::Index p = 1; p < s.size(); ++p) {
    if (s[p] > s[best]) best = static_cast<int>(p);
  }
  return best;
}

Region match_regions(const ImageRecord& source, const ImageDetections& source_dets,
                     const Region& r, const ImageRecord& target,
                     const ImageDetections& target_dets, MatchVariant v,
                     bool normalize, const OverlapConfig& overlap) {
  const Eigen::VectorXd e =
      match_embedding(source, source_dets, r, v, normalize, overlap);
  const Eigen::MatrixXd t =
      match_embeddings(target, target_dets, v, normalize, overlap);
  return target.proposals[best_match(e, t)];
}

double MatchReport::mean_iou() const {
  double sum = 0;
  int n = 0;
  for (const auto& [name, m] : per_concept) {
    if (m.matched == 0) continue;
    sum += m.mean_iou;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

int MatchReport::skipped() const {
  int s = 0;
  for (const auto& [name, m] : per_concept) s += m.skipped;
  return s;
}

MatchReport match_benchmark(const DescriptorStore& store, const GroundTruth& gt,
                            const std::vector<ImageDetections>& dets,
                            const std::vector<std::pair<int, int>>& pairs,
                            MatchVariant v, bool normalize,
                            const OverlapConfig& overlap,
                            const std::vector<std::string>& concepts,
                            int threads) {
  if (static_cast<int>(gt.size()) != store.size() ||
      static_cast<int>(dets.size()) != store.size()) {
    throw InvalidInput("ground truth and detections must cover the store");
  }
  auto wanted = [&](const std::string& c) {
    return concepts.empty() ||
           std::find(concepts.begin(), concepts.end(), c) != concepts.end();
  };
  struct Outcome {
    std::string concept_name;
    double iou = 0;
    bool skipped = false;
  };
  std::vector<std::vector<Outcome>> outcomes(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), threads, [&](int i) {
    const auto [s, t] = pairs[i];
    const ImageRecord& src = store[s];
    const ImageRecord& tgt = store[t];
    Eigen::MatrixXd target_emb;
    for (const auto& part : gt[s]) {
      if (!evaluated(part) || !wanted(part.concept_name)) continue;
      Outcome o{part.concept_name};
      double best = -1;
      for (const auto& cand : gt[t]) {
        if (cand.concept_name == part.concept_name && evaluated(cand)) best = 0;
      }
      if (best < 0) {
        o.skipped = true;
        outcomes[i].push_back(o);
        continue;
      }
      if (target_emb.rows() == 0) {
        target_emb = match_embeddings(tgt, dets[t], v, normalize, overlap);
      }
      const Eigen::VectorXd e =
          match_embedding(src, dets[s], part.box, v, normalize, overlap);
      const Region& predicted = tgt.proposals[best_match(e, target_emb)];
      for (const auto& cand : gt[t]) {
        if (cand.concept_name == part.concept_name && evaluated(cand)) {
          best = std::max(best, iou(predicted, cand.box));
        }
      }
      o.iou = best;
      outcomes[i].push_back(o);
    }
  });

  MatchReport report;
  std::map<std::string, double> sums;
  for (const auto& list : outcomes) {
    for (const auto& o : list) {
      ConceptMatch& m = report.per_concept[o.concept_name];
      if (o.skipped) {
        ++m.skipped;
      } else {
        ++m.matched;
        sums[o.concept_name] += o.iou;
      }
    }
  }
  for (auto& [name, m] : report.per_concept) {
    if (m.matched > 0) m.mean_iou = sums[name] / m.matched;
  }
  return report;
}

Eigen::VectorXd grid_encode(const ImageRecord& image, const AnchorBank& bank) {
  const int k = bank.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(5 * k);
  if (image.proposal_count() == 0) return out;
  const Eigen::MatrixXd s = bank.scores(image);
  constexpr double kEmpty = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best = Eigen::MatrixXd::Constant(5, k, kEmpty);
  for (int p = 0; p < image.proposal_count(); ++p) {
    const Region& r = image.proposals[p];
    const int col = r.center_x() < image.width / 2 ? 0 : 1;
    const int row = r.center_y() < image.height / 2 ? 0 : 1;
    const int cell = 1 + 2 * row + col;
    best.row(0) = best.row(0).cwiseMax(s.row(p));
    best.row(cell) = best.row(cell).cwiseMax(s.row(p));
  }
  for (int c = 0; c < 5; ++c) {
    for (int j = 0; j < k; ++j) {
      out[c * k + j] = best(c, j) == kEmpty ? 0.0 : best(c, j);
    }
  }
  const double n = out.norm();
  if (n > 0) out /= n;
  return out;
}

}  // namespace partatlas
