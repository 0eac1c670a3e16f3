// partatlas command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "partatlas/anchors.h"
#include "partatlas/atlas.h"
#include "partatlas/config.h"
#include "partatlas/dataset.h"
#include "partatlas/embedding.h"
#include "partatlas/error.h"
#include "partatlas/io.h"
#include "partatlas/matching.h"
#include "partatlas/metrics.h"
#include "partatlas/mil.h"
#include "partatlas/synthetic.h"

namespace fs = std::filesystem;
using namespace partatlas;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  uint64_t seed = 0;
  std::string config_path;
  int threads = 1;
  std::string out;
  std::string command;

  Json config() const {
    return config_path.empty() ? Json::object() : read_json(config_path);
  }
  Json run(std::string_view verb, const Json& effective) const {
    return run_block(verb, seed, effective, command, threads);
  }
  fs::path require_out() const {
    if (out.empty()) throw ConfigError("--out is required");
    return out;
  }
};

Dataset load(const std::string& manifest, int threads) {
  LoadReport report;
  Dataset ds = load_dataset(manifest, &report, threads);
  if (report.renormalized_rows > 0) {
    std::cerr << "warning: renormalized " << report.renormalized_rows
              << " descriptor rows that were off unit norm\n";
  }
  return ds;
}

Region parse_box(const std::string& text) {
  std::array<double, 4> c{};
  std::istringstream is(text);
  char sep = 0;
  for (int i = 0; i < 4; ++i) {
    if (i > 0 && !(is >> sep && sep == ',')) throw ConfigError("box must be x1,y1,x2,y2");
    if (!(is >> c[i])) throw ConfigError("box must be x1,y1,x2,y2");
  }
  try {
    return Region::from_array(c);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("bad box: ") + e.what());
  }
}

void write_with_run(const fs::path& path, Json j, const Json& run) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  j["run"] = run;
  write_json(path, j);
}

SyntheticProfile preset(const std::string& name) {
  SyntheticProfile p;
  if (name == "standard") return p;
  if (name == "exemplar") {
    p.outlier_fraction = 0;
    p.confuser_rate = 0;
    p.ambiguity = AmbiguousExtent{"door"};
    return p;
  }
  if (name == "congruent") {
    p.congruent_pairs = true;
    p.noise = 0;
    return p;
  }
  throw ConfigError("unknown profile '" + name + "'");
}

std::vector<ImageDetections> anchor_dets(const Dataset& ds, const AnchorBank& bank,
                                         const std::string& dets_path, int per_anchor,
                                         double nms, int threads) {
  if (!dets_path.empty()) {
    return anchor_detections_from_json(read_json(dets_path), ds.store);
  }
  return detect_anchors(bank, ds.store, per_anchor, nms, threads);
}

void print_eval_table(const std::map<std::string, ConceptScore>& scores) {
  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (!v) return std::string("     -");
    std::snprintf(buf, sizeof buf, "%6.3f", *v);
    return std::string(buf);
  };
  std::printf("%-16s %6s %6s %9s\n", "concept", "AP", "CorLoc", "positives");
  double ap_sum = 0, cl_sum = 0;
  int ap_n = 0, cl_n = 0;
  for (const auto& [name, s] : scores) {
    std::printf("%-16s %s %s %9d\n", name.c_str(), cell(s.ap).c_str(),
                cell(s.corloc).c_str(), s.positives);
    if (s.ap) ap_sum += *s.ap, ++ap_n;
    if (s.corloc) cl_sum += *s.corloc, ++cl_n;
  }
  std::optional<double> map, mcl;
  if (ap_n) map = ap_sum / ap_n;
  if (cl_n) mcl = cl_sum / cl_n;
  std::printf("%-16s %s %s\n", "mean", cell(map).c_str(), cell(mcl).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  for (int i = 0; i < argc; ++i) g.command += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Weakly supervised part learning with anchor geometry"};
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out", g.out, "Output path");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string profile_name = "standard";
  std::optional<int> synth_images;
  synth->add_option("--profile", profile_name, "standard, exemplar or congruent")
      ->capture_default_str();
  synth->add_option("--images", synth_images, "Number of images");
  synth->callback([&] {
    SyntheticProfile p = preset(profile_name);
    Json section = config_section(g.config(), "synth");
    Json base = to_json(p);
    for (const auto& [k, v] : section.items()) base[k] = v;
    p = synthetic_profile_from_json(base);
    p.seed = g.seed;
    if (synth_images) p.num_images = *synth_images;
    p.validate();
    const fs::path out = g.require_out();
    const SyntheticWorld world = generate_synthetic(p);
    const Json effective = {{"synth", to_json(p)}, {"profile", profile_name}};
    const Json run = g.run("synth", effective);
    save_dataset(world.dataset, out, &run);
    write_with_run(out / "pairs.json", pairs_to_json(world.dataset.store, world.pairs), run);
    std::cerr << "wrote " << world.dataset.store.size() << " images to " << out << "\n";
  });

  // train-anchors
  auto* ta = app.add_subcommand("train-anchors", "Learn the anchor bank");
  std::string data;
  std::optional<int> ta_k, ta_iters;
  std::optional<double> ta_lambda, ta_gamma;
  ta->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ta->add_option("--anchors", ta_k, "Number of anchors K");
  ta->add_option("--iterations", ta_iters, "SGD iterations");
  ta->add_option("--lambda", ta_lambda, "Regularization weight");
  ta->add_option("--gamma", ta_gamma, "Orthogonality weight");
  ta->callback([&] {
    AnchorHyperparams h = anchor_config_from_json(config_section(g.config(), "anchors"));
    h.seed = g.seed;
    if (ta_k) h.num_anchors = *ta_k;
    if (ta_iters) h.iterations = *ta_iters;
    if (ta_lambda) h.lambda = *ta_lambda;
    if (ta_gamma) h.gamma = *ta_gamma;
    h.validate();
    const fs::path out = g.require_out();
    const Dataset ds = load(data, g.threads);
    std::vector<ObjectiveSample> log;
    const AnchorBank bank = train_anchors(ds.store, ds.anchor_set(), h, &log);
    Json j = to_json(bank);
    j["log"] = Json::array();
    for (const auto& s : log) {
      j["log"].push_back({{"iteration", s.iteration}, {"objective", s.objective}});
    }
    write_with_run(out, j, g.run("train-anchors", {{"anchors", to_json(h)}}));
    std::cerr << "trained " << bank.size() << " anchors\n";
  });

  // detect-anchors
  auto* da = app.add_subcommand("detect-anchors", "Top detections of every anchor");
  std::string bank_path;
  int per_anchor = 5;
  double nms = 0.3;
  da->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  da->add_option("--bank", bank_path, "Anchor bank")->required()->check(CLI::ExistingFile);
  da->add_option("--per-anchor", per_anchor, "Detections per anchor (L)")->capture_default_str();
  da->add_option("--nms", nms, "NMS IoU threshold")->capture_default_str();
  da->callback([&] {
    const fs::path out = g.require_out();
    const Dataset ds = load(data, g.threads);
    const AnchorBank bank = anchor_bank_from_json(read_json(bank_path));
    const auto dets = detect_anchors(bank, ds.store, per_anchor, nms, g.threads);
    write_with_run(out, anchor_detections_to_json(ds.store, dets),
                   g.run("detect-anchors", {{"per_anchor", per_anchor}, {"nms", nms}}));
  });

  // train-part
  auto* tp = app.add_subcommand("train-part", "Train one part detector with MIL");
  std::string concept_name, variant_name, adets_path, log_path, ex_image, ex_box;
  std::optional<double> mil_lambda;
  double beta = 10;
  tp->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  tp->add_option("--concept", concept_name, "Part concept")->required();
  tp->add_option("--variant", variant_name, "B, B+C, B+G or B+C+G");
  tp->add_option("--bank", bank_path, "Anchor bank (geometry variants)")
      ->check(CLI::ExistingFile);
  tp->add_option("--anchor-dets", adets_path, "Precomputed anchor detections")
      ->check(CLI::ExistingFile);
  tp->add_option("--per-anchor", per_anchor, "Detections per anchor (L)")->capture_default_str();
  tp->add_option("--nms", nms, "Anchor NMS IoU threshold")->capture_default_str();
  tp->add_option("--lambda", mil_lambda, "Regularization weight");
  tp->add_option("--log", log_path, "Write the per-round log here");
  tp->add_option("--exemplar-image", ex_image, "Image id of the annotated exemplar");
  tp->add_option("--exemplar-box", ex_box, "Exemplar box x1,y1,x2,y2");
  tp->add_option("--beta", beta, "Exemplar affinity sharpness")->capture_default_str();
  tp->callback([&] {
    MilConfig cfg = mil_config_from_json(config_section(g.config(), "mil"));
    if (!variant_name.empty()) cfg.variant = parse_variant(variant_name);
    if (mil_lambda) cfg.lambda = *mil_lambda;
    cfg.solver.seed = g.seed;
    cfg.threads = g.threads;
    cfg.validate();
    if (ex_image.empty() != ex_box.empty()) {
      throw ConfigError("--exemplar-image and --exemplar-box go together");
    }
    const fs::path out = g.require_out();
    const Dataset ds = load(data, g.threads);
    const WeakImageSet set = ds.weak_set(concept_name);
    EmbeddingConfig ecfg;
    ecfg.variant = cfg.variant;
    std::vector<ImageFeatures> features;
    if (has_geometry(cfg.variant)) {
      if (bank_path.empty()) throw ConfigError("--bank is required for geometry variants");
      const AnchorBank bank = anchor_bank_from_json(read_json(bank_path));
      const auto dets = anchor_dets(ds, bank, adets_path, per_anchor, nms, g.threads);
      features = compute_features(ds.store, &dets, ecfg, g.threads);
    } else {
      features = compute_features(ds.store, nullptr, ecfg, g.threads);
    }
    std::optional<ExemplarSpec> exemplar;
    Json effective = {{"mil", to_json(cfg)}, {"concept", concept_name},
                      {"per_anchor", per_anchor}, {"nms", nms}};
    if (!ex_image.empty()) {
      const auto idx = ds.store.find(ex_image);
      if (!idx) throw DataError("exemplar image '" + ex_image + "' not in dataset");
      exemplar = ExemplarSpec{*idx, parse_box(ex_box), beta};
      effective["exemplar"] = {{"image", ex_image},
                               {"box", region_to_json(exemplar->box)},
                               {"beta", beta}};
    }
    const MilResult res = train_part(ds.store, features, set, cfg, exemplar, concept_name);
    const Json run = g.run("train-part", effective);
    write_with_run(out, to_json(res.model), run);
    if (!log_path.empty()) {
      Json lj = versioned("partatlas-round-log");
      lj["rounds"] = to_json(res.log);
      write_with_run(log_path, lj, run);
    }
    for (const auto& r : res.log) {
      std::cerr << "round " << r.round << " [" << to_string(r.phase)
                << "] objective " << r.objective << " changed " << r.changed << "\n";
    }
  });

  // detect
  auto* dt = app.add_subcommand("detect", "Run part detectors over a dataset");
  std::vector<std::string> model_paths;
  int top_n = 1;
  dt->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  dt->add_option("--model", model_paths, "Part model (repeatable)")->required()
      ->check(CLI::ExistingFile);
  dt->add_option("--bank", bank_path, "Anchor bank (geometry variants)")
      ->check(CLI::ExistingFile);
  dt->add_option("--anchor-dets", adets_path, "Precomputed anchor detections")
      ->check(CLI::ExistingFile);
  dt->add_option("--per-anchor", per_anchor, "Detections per anchor (L)")->capture_default_str();
  dt->add_option("--top", top_n, "Detections kept per image")->capture_default_str();
  dt->add_option("--nms", nms, "NMS IoU threshold")->capture_default_str();
  dt->callback([&] {
    const fs::path out = g.require_out();
    const Dataset ds = load(data, g.threads);
    std::vector<PartModel> models;
    bool need_geometry = false;
    for (const auto& p : model_paths) {
      models.push_back(part_model_from_json(read_json(p)));
      need_geometry |= has_geometry(models.back().variant);
    }
    std::vector<ImageDetections> dets;
    if (need_geometry) {
      if (bank_path.empty()) throw ConfigError("--bank is required for geometry variants");
      const AnchorBank bank = anchor_bank_from_json(read_json(bank_path));
      dets = anchor_dets(ds, bank, adets_path, per_anchor, nms, g.threads);
    }
    const auto features =
        compute_features(ds.store, need_geometry ? &dets : nullptr, EmbeddingConfig{}, g.threads);
    PartDetections result;
    for (const auto& m : models) {
      auto& per_image = result[m.concept_name];
      per_image.resize(ds.store.size());
      for (int i = 0; i < ds.store.size(); ++i) {
        per_image[i] = detect_part(m, ds.store[i], features[i], top_n, nms);
      }
    }
    write_with_run(out, part_detections_to_json(ds.store, result),
                   g.run("detect", {{"top", top_n}, {"nms", nms}, {"per_anchor", per_anchor}}));
  });

  // eval
  auto* ev = app.add_subcommand("eval", "AP and CorLoc against ground truth");
  std::string dets_path;
  double hit_iou = kDefaultHitIou;
  ev->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--detections", dets_path, "Part detections")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--iou", hit_iou, "Hit IoU threshold")->capture_default_str();
  ev->callback([&] {
    const Dataset ds = load(data, g.threads);
    if (!ds.ground_truth) throw DataError("dataset has no ground truth");
    const PartDetections dets = part_detections_from_json(read_json(dets_path), ds.store);
    for (const auto& [c, v] : dets) {
      if (static_cast<int>(v.size()) != ds.store.size()) {
        throw DataError("detections for '" + c + "' do not cover every image");
      }
    }
    const auto scores = evaluate_detections(ds, dets, hit_iou);
    print_eval_table(scores);
    if (!g.out.empty()) {
      Json j = versioned("partatlas-eval");
      j["concepts"] = Json::object();
      for (const auto& [name, s] : scores) {
        j["concepts"][name] = {{"ap", s.ap ? Json(*s.ap) : Json(nullptr)},
                               {"corloc", s.corloc ? Json(*s.corloc) : Json(nullptr)},
                               {"positives", s.positives}};
      }
      write_with_run(g.out, j, g.run("eval", {{"iou", hit_iou}}));
    }
  });

  // match
  auto* mt = app.add_subcommand("match", "Cross-image part matching benchmark");
  std::string pairs_path, match_variant = "anchor-ag";
  bool no_normalize = false;
  mt->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  mt->add_option("--bank", bank_path, "Anchor bank")->required()->check(CLI::ExistingFile);
  mt->add_option("--pairs", pairs_path, "Image pairs")->required()->check(CLI::ExistingFile);
  mt->add_option("--anchor-dets", adets_path, "Precomputed anchor detections")
      ->check(CLI::ExistingFile);
  mt->add_option("--variant", match_variant, "anchor-ag, anchor-g or a")->capture_default_str();
  mt->add_option("--per-anchor", per_anchor, "Detections per anchor (L)")->capture_default_str();
  mt->add_option("--nms", nms, "Anchor NMS IoU threshold")->capture_default_str();
  mt->add_flag("--no-normalize", no_normalize, "Skip L2 normalization");
  mt->callback([&] {
    const MatchVariant v = parse_match_variant(match_variant);
    const OverlapConfig overlap = overlap_config_from_json(config_section(g.config(), "overlap"));
    const Dataset ds = load(data, g.threads);
    if (!ds.ground_truth) throw DataError("dataset has no ground truth");
    const AnchorBank bank = anchor_bank_from_json(read_json(bank_path));
    const auto dets = anchor_dets(ds, bank, adets_path, per_anchor, nms, g.threads);
    const auto pairs = pairs_from_json(read_json(pairs_path), ds.store);
    const MatchReport rep = match_benchmark(ds.store, *ds.ground_truth, dets, pairs, v,
                                            !no_normalize, overlap, {}, g.threads);
    std::printf("%-16s %8s %8s\n", "concept", "meanIoU", "matched");
    for (const auto& [name, c] : rep.per_concept) {
      std::printf("%-16s %8.3f %8d\n", name.c_str(), c.mean_iou, c.matched);
    }
    std::printf("%-16s %8.3f   (skipped %d)\n", "mean", rep.mean_iou(), rep.skipped());
    if (!g.out.empty()) {
      Json j = versioned("partatlas-match");
      j["variant"] = match_variant;
      j["mean_iou"] = rep.mean_iou();
      j["skipped"] = rep.skipped();
      j["concepts"] = Json::object();
      for (const auto& [name, c] : rep.per_concept) {
        j["concepts"][name] = {{"mean_iou", c.mean_iou}, {"matched", c.matched},
                               {"skipped", c.skipped}};
      }
      write_with_run(g.out, j,
                     g.run("match", {{"variant", match_variant}, {"normalize", !no_normalize},
                                     {"overlap", to_json(overlap)}, {"per_anchor", per_anchor},
                                     {"nms", nms}}));
    }
  });

  // grid-encode
  auto* ge = app.add_subcommand("grid-encode", "Spatial-grid scene codes from anchor scores");
  ge->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ge->add_option("--bank", bank_path, "Anchor bank")->required()->check(CLI::ExistingFile);
  ge->callback([&] {
    const fs::path out = g.require_out();
    const Dataset ds = load(data, g.threads);
    const AnchorBank bank = anchor_bank_from_json(read_json(bank_path));
    Json j = versioned("partatlas-grid-codes");
    j["cells"] = {"1x1", "tl", "tr", "bl", "br"};
    j["images"] = Json::array();
    for (int i = 0; i < ds.store.size(); ++i) {
      const Eigen::VectorXd code = grid_encode(ds.store[i], bank);
      j["images"].push_back({{"id", ds.store[i].id},
                             {"code", std::vector<double>(code.data(), code.data() + code.size())}});
    }
    write_with_run(out, j, g.run("grid-encode", Json::object()));
  });

  // atlas
  auto* at = app.add_subcommand("atlas", "Export the navigable atlas graph");
  AtlasConfig acfg;
  at->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  at->add_option("--bank", bank_path, "Anchor bank")->required()->check(CLI::ExistingFile);
  at->add_option("--model", model_paths, "Part model (repeatable)")->required()
      ->check(CLI::ExistingFile);
  at->add_option("--top-edges", acfg.top_edges, "Edges kept, best first (negative: all)")
      ->capture_default_str();
  at->add_option("--parts-per-image", acfg.parts_per_image, "Part boxes per image and model")
      ->capture_default_str();
  at->add_option("--per-anchor", acfg.detections_per_anchor, "Detections per anchor (L)")
      ->capture_default_str();
  at->add_option("--nms", acfg.nms_iou, "NMS IoU threshold")->capture_default_str();
  at->callback([&] {
    acfg.overlap = overlap_config_from_json(config_section(g.config(), "overlap"));
    acfg.threads = g.threads;
    const fs::path out = g.require_out();
    const Dataset ds = load(data, g.threads);
    const AnchorBank bank = anchor_bank_from_json(read_json(bank_path));
    std::vector<PartModel> models;
    for (const auto& p : model_paths) models.push_back(part_model_from_json(read_json(p)));
    const AtlasGraph graph = export_atlas(models, bank, ds, acfg);
    write_with_run(out, to_json(graph),
                   g.run("atlas", {{"top_edges", acfg.top_edges},
                                   {"parts_per_image", acfg.parts_per_image},
                                   {"per_anchor", acfg.detections_per_anchor},
                                   {"nms", acfg.nms_iou},
                                   {"overlap", to_json(acfg.overlap)}}));
    std::cerr << graph.nodes.size() << " nodes, " << graph.edges.size() << " edges\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const InvalidInput& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const Json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
