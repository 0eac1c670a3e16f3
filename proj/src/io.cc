#include "partatlas/io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "partatlas/error.h"
#include "partatlas/parallel.h"

namespace partatlas {
namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "descriptor I/O assumes a little-endian host");

void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t get_u32(std::istream& is, const fs::path& path) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw DataError("truncated header in " + path.string());
  }
  return v;
}

template <typename T>
T field(const Json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) {
    throw DataError(std::string(where) + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw DataError(std::string(where) + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

void write_descriptors(const fs::path& path, const DescriptorMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kDescriptorMagic, 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<uint32_t>(m.rows()));
  put_u32(os, static_cast<uint32_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!os) throw DataError("write failed for " + path.string());
}

DescriptorMatrix read_descriptors(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing descriptor file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kDescriptorMagic, 4) != 0) {
    throw DataError("bad magic bytes in descriptor file " + path.string());
  }
  const uint32_t version = get_u32(is, path);
  if (version != kFormatVersion) {
    throw DataError("unsupported descriptor version " + std::to_string(version) +
                    " in " + path.string());
  }
  const uint32_t rows = get_u32(is, path);
  const uint32_t cols = get_u32(is, path);
  DescriptorMatrix m(rows, cols);
  const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(float));
  if (bytes > 0 && !is.read(reinterpret_cast<char*>(m.data()), bytes)) {
    throw DataError("truncated descriptor data in " + path.string());
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes in descriptor file " + path.string());
  }
  return m;
}

Json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing file " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(1) << '\n';
  if (!os) throw DataError("write failed for " + path.string());
}

Json versioned(std::string_view format) {
  return Json{{"format", std::string(format)}, {"version", kFormatVersion}};
}

void check_format(const Json& j, std::string_view format,
                  std::string_view source) {
  const std::string where = source.empty() ? std::string(format) : std::string(source);
  if (!j.is_object() || !j.contains("format") || !j.contains("version")) {
    throw DataError(where + ": missing format/version header");
  }
  if (j.at("format") != format) {
    throw DataError(where + ": expected format '" + std::string(format) +
                    "', found " + j.at("format").dump());
  }
  if (!j.at("version").is_number_unsigned() || j.at("version") != kFormatVersion) {
    throw DataError(where + ": unsupported version " + j.at("version").dump());
  }
}

Json region_to_json(const Region& r) {
  return Json::array({r.x1(), r.y1(), r.x2(), r.y2()});
}

Region region_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw DataError("box must be [x1, y1, x2, y2], got " + j.dump());
  }
  try {
    return Region(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                  j[3].get<double>());
  } catch (const InvalidInput& e) {
    throw DataError(std::string("invalid box: ") + e.what());
  } catch (const Json::exception& e) {
    throw DataError(std::string("invalid box: ") + e.what());
  }
}

std::vector<Region> read_proposals(const fs::path& path) {
  const Json j = read_json(path);
  check_format(j, "partatlas-proposals", path.string());
  std::vector<Region> out;
  for (const auto& b : field<Json>(j, "boxes", path.string())) {
    out.push_back(region_from_json(b));
  }
  return out;
}

void write_proposals(const fs::path& path, const std::vector<Region>& boxes) {
  Json j = versioned("partatlas-proposals");
  j["boxes"] = Json::array();
  for (const auto& r : boxes) j["boxes"].push_back(region_to_json(r));
  write_json(path, j);
}

Dataset load_dataset(const fs::path& manifest, LoadReport* report,
                     int threads) {
  const Json j = read_json(manifest);
  const std::string where = manifest.string();
  check_format(j, "partatlas-manifest", where);
  const fs::path base = manifest.parent_path();

  Dataset ds;
  ds.vocabulary = field<std::vector<std::string>>(j, "vocabulary", where);
  const int dim = field<int>(j, "descriptor_dim", where);
  ds.store = DescriptorStore(dim);
  const Json& images = field<Json>(j, "images", where);
  const int n = static_cast<int>(images.size());

  std::vector<ImageRecord> records(n);
  std::vector<int> renormalized(n, 0);
  parallel_for(n, threads, [&](int i) {
    const Json& im = images[i];
    const std::string id = field<std::string>(im, "id", where + " image " + std::to_string(i));
    const std::string at = where + " image '" + id + "'";
    ImageRecord& rec = records[i];
    rec.id = id;
    rec.width = field<double>(im, "width", at);
    rec.height = field<double>(im, "height", at);
    if (im.contains("uri")) rec.uri = im.at("uri").get<std::string>();
    rec.proposals = read_proposals(base / field<std::string>(im, "proposals", at));
    const fs::path desc = base / field<std::string>(im, "descriptors", at);
    rec.descriptors = read_descriptors(desc);
    if (rec.descriptors.cols() != dim && rec.descriptors.rows() > 0) {
      throw DataError(at + ": descriptor dimension " +
                      std::to_string(rec.descriptors.cols()) + " in " +
                      desc.string() + " does not match " + std::to_string(dim));
    }
    renormalized[i] = normalize_rows(rec.descriptors);
  });

  std::vector<std::map<std::string, int>> labels(n);
  std::optional<GroundTruth> gt;
  for (int i = 0; i < n; ++i) {
    const Json& im = images[i];
    const std::string at = where + " image '" + records[i].id + "'";
    if (im.contains("labels")) {
      for (const auto& [concept_name, y] : im.at("labels").items()) {
        const int label = y.get<int>();
        if (label != 1 && label != -1) {
          throw DataError(at + ": label for '" + concept_name + "' must be +1 or -1");
        }
        if (std::find(ds.vocabulary.begin(), ds.vocabulary.end(), concept_name) ==
            ds.vocabulary.end()) {
          throw DataError(at + ": label for unknown concept '" + concept_name + "'");
        }
        labels[i][concept_name] = label;
      }
    }
    if (im.contains("ground_truth")) {
      if (!gt) gt.emplace(n);
      for (const auto& o : im.at("ground_truth")) {
        (*gt)[i].push_back({field<std::string>(o, "concept", at),
                            region_from_json(field<Json>(o, "box", at)),
                            o.value("difficult", false),
                            o.value("truncated", false)});
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    try {
      ds.store.add(std::move(records[i]));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  ds.labels = std::move(labels);
  ds.ground_truth = std::move(gt);
  if (report) {
    report->renormalized_rows = 0;
    for (int r : renormalized) report->renormalized_rows += r;
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir, const Json* run) {
  fs::create_directories(dir / "proposals");
  fs::create_directories(dir / "descriptors");
  Json j = versioned("partatlas-manifest");
  j["vocabulary"] = ds.vocabulary;
  j["descriptor_dim"] = ds.store.dim();
  j["images"] = Json::array();
  for (int i = 0; i < ds.store.size(); ++i) {
    const ImageRecord& rec = ds.store[i];
    const std::string props = "proposals/" + rec.id + ".json";
    const std::string desc = "descriptors/" + rec.id + ".amil";
    write_proposals(dir / props, rec.proposals);
    write_descriptors(dir / desc, rec.descriptors);
    Json im{{"id", rec.id},
            {"width", rec.width},
            {"height", rec.height},
            {"proposals", props},
            {"descriptors", desc}};
    if (!rec.uri.empty()) im["uri"] = rec.uri;
    if (i < static_cast<int>(ds.labels.size())) im["labels"] = ds.labels[i];
    if (ds.ground_truth) {
      im["ground_truth"] = Json::array();
      for (const auto& o : ds.ground_truth->at(i)) {
        im["ground_truth"].push_back({{"concept", o.concept_name},
                                      {"box", region_to_json(o.box)},
                                      {"difficult", o.difficult},
                                      {"truncated", o.truncated}});
      }
    }
    j["images"].push_back(std::move(im));
  }
  if (run) j["run"] = *run;
  write_json(dir / "manifest.json", j);
}

Json to_json(const AnchorHyperparams& h) {
  return {{"num_anchors", h.num_anchors},   {"lambda", h.lambda},
          {"gamma", h.gamma},               {"learning_rate", h.learning_rate},
          {"momentum", h.momentum},         {"iterations", h.iterations},
          {"log_interval", h.log_interval}, {"seed", h.seed}};
}

AnchorHyperparams anchor_hyper_from_json(const Json& j) {
  AnchorHyperparams h;
  h.num_anchors = j.value("num_anchors", h.num_anchors);
  h.lambda = j.value("lambda", h.lambda);
  h.gamma = j.value("gamma", h.gamma);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.momentum = j.value("momentum", h.momentum);
  h.iterations = j.value("iterations", h.iterations);
  h.log_interval = j.value("log_interval", h.log_interval);
  h.seed = j.value("seed", h.seed);
  return h;
}

Json to_json(const AnchorBank& bank) {
  Json j = versioned("partatlas-anchor-bank");
  j["hyper"] = to_json(bank.hyper);
  j["dim"] = bank.dim();
  j["weights"] = Json::array();
  for (int k = 0; k < bank.size(); ++k) {
    const Eigen::VectorXd row = bank.weights.row(k).transpose();
    j["weights"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  return j;
}

AnchorBank anchor_bank_from_json(const Json& j) {
  check_format(j, "partatlas-anchor-bank");
  AnchorBank bank;
  bank.hyper = anchor_hyper_from_json(field<Json>(j, "hyper", "anchor bank"));
  const int dim = field<int>(j, "dim", "anchor bank");
  const auto rows = field<std::vector<std::vector<double>>>(j, "weights", "anchor bank");
  bank.weights.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t k = 0; k < rows.size(); ++k) {
    if (static_cast<int>(rows[k].size()) != dim) {
      throw DataError("anchor bank: weight row " + std::to_string(k) +
                      " has the wrong dimension");
    }
    for (int c = 0; c < dim; ++c) bank.weights(static_cast<Eigen::Index>(k), c) = rows[k][c];
  }
  return bank;
}

Json to_json(const PartModel& m) {
  Json j = versioned("partatlas-part-model");
  j["concept"] = m.concept_name;
  j["variant"] = std::string(to_string(m.variant));
  j["appearance_dim"] = m.appearance_dim;
  j["num_anchors"] = m.num_anchors;
  j["lambda"] = m.lambda;
  j["schedule"] = {{"appearance_rounds", m.schedule.appearance_rounds},
                   {"joint_rounds", m.schedule.joint_rounds}};
  j["solver"] = {{"epochs", m.solver.epochs},
                 {"learning_rate", m.solver.learning_rate},
                 {"seed", m.solver.seed}};
  j["w"] = std::vector<double>(m.w.data(), m.w.data() + m.w.size());
  return j;
}

PartModel part_model_from_json(const Json& j) {
  check_format(j, "partatlas-part-model");
  const char* where = "part model";
  PartModel m;
  m.concept_name = field<std::string>(j, "concept", where);
  try {
    m.variant = parse_variant(field<std::string>(j, "variant", where));
  } catch (const ConfigError& e) {
    throw DataError(std::string(where) + ": " + e.what());
  }
  m.appearance_dim = field<int>(j, "appearance_dim", where);
  m.num_anchors = field<int>(j, "num_anchors", where);
  m.lambda = field<double>(j, "lambda", where);
  const Json& s = field<Json>(j, "schedule", where);
  m.schedule.appearance_rounds = field<int>(s, "appearance_rounds", where);
  m.schedule.joint_rounds = field<int>(s, "joint_rounds", where);
  const Json& sv = field<Json>(j, "solver", where);
  m.solver.epochs = field<int>(sv, "epochs", where);
  m.solver.learning_rate = field<double>(sv, "learning_rate", where);
  m.solver.seed = field<uint64_t>(sv, "seed", where);
  const auto w = field<std::vector<double>>(j, "w", where);
  m.w = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  const int expected = embedding_dim(m.variant, m.appearance_dim, m.num_anchors);
  if (m.w.size() != expected) {
    throw DataError("part model: w has " + std::to_string(m.w.size()) +
                    " entries, variant needs " + std::to_string(expected));
  }
  return m;
}

Json to_json(const std::vector<RoundLog>& log) {
  Json j = Json::array();
  for (const auto& r : log) {
    j.push_back({{"round", r.round},
                 {"phase", std::string(to_string(r.phase))},
                 {"objective", r.objective},
                 {"changed", r.changed}});
  }
  return j;
}

Json detections_to_json(const std::vector<Detection>& dets) {
  Json j = Json::array();
  for (const auto& d : dets) {
    j.push_back({{"box", region_to_json(d.box)}, {"score", d.score}});
  }
  return j;
}

std::vector<Detection> detections_from_json(const Json& j) {
  std::vector<Detection> out;
  for (const auto& d : j) {
    out.push_back({region_from_json(field<Json>(d, "box", "detection")),
                   field<double>(d, "score", "detection")});
  }
  return out;
}

Json anchor_detections_to_json(const DescriptorStore& store,
                               const std::vector<ImageDetections>& dets) {
  Json j = versioned("partatlas-anchor-detections");
  j["images"] = Json::array();
  for (int i = 0; i < store.size(); ++i) {
    Json per_anchor = Json::array();
    for (const auto& d : dets.at(i)) per_anchor.push_back(detections_to_json(d));
    j["images"].push_back({{"id", store[i].id}, {"anchors", per_anchor}});
  }
  return j;
}

std::vector<ImageDetections> anchor_detections_from_json(
    const Json& j, const DescriptorStore& store) {
  check_format(j, "partatlas-anchor-detections");
  std::vector<ImageDetections> out(store.size());
  std::vector<bool> seen(store.size(), false);
  for (const auto& im : field<Json>(j, "images", "anchor detections")) {
    const auto id = field<std::string>(im, "id", "anchor detections");
    const auto idx = store.find(id);
    if (!idx) throw DataError("anchor detections: unknown image '" + id + "'");
    if (seen[*idx]) throw DataError("anchor detections: duplicate image '" + id + "'");
    seen[*idx] = true;
    for (const auto& d : field<Json>(im, "anchors", "anchor detections image '" + id + "'")) {
      out[*idx].push_back(detections_from_json(d));
    }
  }
  for (int i = 0; i < store.size(); ++i) {
    if (!seen[i]) {
      throw DataError("anchor detections: image '" + store[i].id + "' missing");
    }
  }
  return out;
}

namespace {

int resolve(const DescriptorStore& store, const std::string& id,
            std::string_view where) {
  const auto idx = store.find(id);
  if (!idx) throw DataError(std::string(where) + ": unknown image '" + id + "'");
  return *idx;
}

}  // namespace

Json part_detections_to_json(const DescriptorStore& store,
                             const PartDetections& dets) {
  Json j = versioned("partatlas-part-detections");
  j["images"] = Json::array();
  for (int i = 0; i < store.size(); ++i) {
    Json per_concept = Json::object();
    for (const auto& [concept_name, per_image] : dets) {
      per_concept[concept_name] = detections_to_json(per_image.at(i));
    }
    j["images"].push_back({{"id", store[i].id}, {"detections", per_concept}});
  }
  return j;
}

PartDetections part_detections_from_json(const Json& j,
                                         const DescriptorStore& store) {
  const char* where = "part detections";
  check_format(j, "partatlas-part-detections");
  PartDetections out;
  for (const auto& im : field<Json>(j, "images", where)) {
    const int i = resolve(store, field<std::string>(im, "id", where), where);
    const Json per_concept = field<Json>(im, "detections", where);
    for (const auto& [concept_name, d] : per_concept.items()) {
      auto& per_image = out[concept_name];
      per_image.resize(store.size());
      per_image[i] = detections_from_json(d);
    }
  }
  return out;
}

Json pairs_to_json(const DescriptorStore& store,
                   const std::vector<std::pair<int, int>>& pairs) {
  Json j = versioned("partatlas-pairs");
  j["pairs"] = Json::array();
  for (const auto& [a, b] : pairs) {
    j["pairs"].push_back({store[a].id, store[b].id});
  }
  return j;
}

std::vector<std::pair<int, int>> pairs_from_json(const Json& j,
                                                 const DescriptorStore& store) {
  const char* where = "pairs";
  check_format(j, "partatlas-pairs");
  std::vector<std::pair<int, int>> out;
  for (const auto& p : field<Json>(j, "pairs", where)) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
      throw DataError("pairs: each entry must be [source id, target id]");
    }
    out.emplace_back(resolve(store, p[0].get<std::string>(), where),
                     resolve(store, p[1].get<std::string>(), where));
  }
  return out;
}

}  // namespace partatlas
