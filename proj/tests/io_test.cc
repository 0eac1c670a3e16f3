#include <doctest.h>

#include <unistd.h>

#include <cstring>
#include <fstream>
#include <random>

#include "fixtures.h"
#include "partatlas/error.h"
#include "partatlas/io.h"
#include "partatlas/synthetic.h"

using namespace partatlas;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("partatlas_io_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os << bytes;
}

std::string expect_data_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  FAIL("expected a DataError");
  return "";
}

Dataset minimal_dataset() {
  Dataset ds;
  ds.vocabulary = {"wing"};
  ds.store = DescriptorStore(4);
  ImageRecord rec;
  rec.id = "only";
  rec.width = 32;
  rec.height = 24;
  rec.proposals = {Region(0, 0, 32, 24)};
  rec.descriptors = DescriptorMatrix(1, 4);
  rec.descriptors << 0.5f, 0.5f, 0.5f, 0.5f;
  ds.store.add(rec);
  ds.labels = {{{"wing", 1}}};
  return ds;
}

}  // namespace

TEST_CASE("descriptor files follow the declared byte layout") {
  TempDir dir("layout");
  DescriptorMatrix m(2, 3);
  m << 1.0f, -2.5f, 0.125f, 3.0f, 1e-7f, -0.0f;
  write_descriptors(dir.path / "m.amil", m);
  std::string want = "AMIL";
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  u32(1);
  u32(2);
  u32(3);
  for (float f : {1.0f, -2.5f, 0.125f, 3.0f, 1e-7f, -0.0f}) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  CHECK(slurp(dir.path / "m.amil") == want);
  const DescriptorMatrix back = read_descriptors(dir.path / "m.amil");
  CHECK(std::memcmp(back.data(), m.data(), sizeof(float) * 6) == 0);
}

TEST_CASE("minimal manifest loads") {
  TempDir dir("minimal");
  save_dataset(minimal_dataset(), dir.path);
  const Dataset ds = load_dataset(dir.path / "manifest.json");
  CHECK(ds.store.size() == 1);
  CHECK(ds.store.dim() == 4);
  CHECK(ds.store[0].proposal_count() == 1);
  CHECK(ds.weak_set("wing").count(1) == 1);
  CHECK_FALSE(ds.ground_truth.has_value());
  CHECK(ds == minimal_dataset());
}

TEST_CASE("synthetic dataset round trips exactly") {
  TempDir dir("roundtrip");
  SyntheticProfile p;
  p.num_images = 30;
  p.seed = 81;
  Dataset ds = generate_synthetic(p).dataset;
  (*ds.ground_truth)[0].push_back({"cap", Region(1, 2, 3, 4), true, false});
  const Json run = {{"seed", 81}};
  save_dataset(ds, dir.path, &run);
  LoadReport report;
  const Dataset back = load_dataset(dir.path / "manifest.json", &report, 4);
  CHECK(report.renormalized_rows == 0);
  CHECK(back == ds);
  CHECK(read_json(dir.path / "manifest.json").at("run") == run);
}

TEST_CASE("loader errors name the offending file or record") {
  TempDir dir("errors");
  const Dataset ds = fixture::random_dataset(82, 3, 4, 5);
  save_dataset(ds, dir.path);
  const fs::path manifest = dir.path / "manifest.json";
  const Json good = read_json(manifest);

  SUBCASE("bad magic") {
    const fs::path f = dir.path / "descriptors" / "im1.amil";
    std::string bytes = slurp(f);
    bytes[0] = 'X';
    spit(f, bytes);
    const std::string msg = expect_data_error([&] { load_dataset(manifest); });
    CHECK(msg.find("magic") != std::string::npos);
    CHECK(msg.find("im1.amil") != std::string::npos);
  }
  SUBCASE("missing file") {
    fs::remove(dir.path / "proposals" / "im2.json");
    const std::string msg = expect_data_error([&] { load_dataset(manifest); });
    CHECK(msg.find("missing") != std::string::npos);
    CHECK(msg.find("im2.json") != std::string::npos);
  }
  SUBCASE("dimension mismatch") {
    std::mt19937_64 rng(1);
    write_descriptors(dir.path / "descriptors" / "im0.amil",
                      fixture::random_descriptors(rng, 4, 6));
    const std::string msg = expect_data_error([&] { load_dataset(manifest); });
    CHECK(msg.find("dimension") != std::string::npos);
    CHECK(msg.find("im0") != std::string::npos);
  }
  SUBCASE("duplicate id") {
    Json j = good;
    j["images"][2]["id"] = "im0";
    write_json(manifest, j);
    const std::string msg = expect_data_error([&] { load_dataset(manifest); });
    CHECK(msg.find("duplicate") != std::string::npos);
    CHECK(msg.find("im0") != std::string::npos);
  }
  SUBCASE("unknown version") {
    Json j = good;
    j["version"] = 99;
    write_json(manifest, j);
    const std::string msg = expect_data_error([&] { load_dataset(manifest); });
    CHECK(msg.find("version") != std::string::npos);
  }
  SUBCASE("truncated descriptors") {
    const fs::path f = dir.path / "descriptors" / "im1.amil";
    std::string bytes = slurp(f);
    spit(f, bytes.substr(0, bytes.size() - 2));
    CHECK(expect_data_error([&] { load_dataset(manifest); }).find("truncated") != std::string::npos);
  }
  SUBCASE("row count disagrees with the proposals") {
    write_descriptors(dir.path / "descriptors" / "im1.amil",
                      DescriptorMatrix::Constant(2, 5, 1.0f / std::sqrt(5.0f)));
    expect_data_error([&] { load_dataset(manifest); });
  }
  SUBCASE("bad label") {
    Json j = good;
    j["images"][0]["labels"]["part"] = 0;
    write_json(manifest, j);
    expect_data_error([&] { load_dataset(manifest); });
  }
  SUBCASE("malformed json") {
    spit(manifest, "{\"format\": ");
    expect_data_error([&] { load_dataset(manifest); });
  }
}

TEST_CASE("off-unit descriptor rows are renormalized and counted") {
  TempDir dir("renorm");
  const Dataset ds = fixture::random_dataset(83, 2, 3, 4);
  save_dataset(ds, dir.path);
  DescriptorMatrix m = ds.store[1].descriptors;
  m.row(0) *= 3.0f;
  m.row(2) *= 0.5f;
  write_descriptors(dir.path / "descriptors" / "im1.amil", m);
  LoadReport report;
  const Dataset back = load_dataset(dir.path / "manifest.json", &report);
  CHECK(report.renormalized_rows == 2);
  CHECK(back.store[1].descriptors.row(0).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("model, bank and detection files round trip") {
  PartModel m;
  m.concept_name = "wheel";
  m.variant = Variant::kBCG;
  m.appearance_dim = 3;
  m.num_anchors = 2;
  m.w = Eigen::VectorXd::Random(12) * 1e3;
  m.w[0] = 1.0 / 3.0;
  m.solver.seed = 0xffffffffffffULL;
  CHECK(part_model_from_json(Json::parse(to_json(m).dump())) == m);
  m.w.resize(5);
  CHECK_THROWS_AS(part_model_from_json(to_json(m)), DataError);

  AnchorBank bank;
  bank.hyper.num_anchors = 3;
  bank.hyper.seed = 7;
  bank.weights = Eigen::MatrixXd::Random(3, 4);
  bank.weights(1, 1) = 1e-300;
  CHECK(anchor_bank_from_json(Json::parse(to_json(bank).dump())) == bank);

  Json wrong = to_json(bank);
  wrong["format"] = "partatlas-part-model";
  CHECK_THROWS_AS(anchor_bank_from_json(wrong), DataError);
  wrong = to_json(bank);
  wrong["version"] = 2;
  CHECK_THROWS_AS(anchor_bank_from_json(wrong), DataError);
  wrong = to_json(bank);
  wrong.erase("version");
  CHECK_THROWS_AS(anchor_bank_from_json(wrong), DataError);

  const Dataset ds = fixture::random_dataset(84, 3, 4, 5);
  std::vector<ImageDetections> adets(3, ImageDetections(2));
  adets[1][0] = {{Region(1, 1, 5, 5), 0.3}, {Region(2, 2, 9, 9), -0.1}};
  CHECK(anchor_detections_from_json(Json::parse(anchor_detections_to_json(ds.store, adets).dump()),
                                    ds.store) == adets);

  PartDetections pd;
  pd["part"] = {{{Region(0, 0, 3, 3), 2.0}}, {}, {{Region(4, 4, 8, 9), 1.0 / 7}}};
  CHECK(part_detections_from_json(Json::parse(part_detections_to_json(ds.store, pd).dump()),
                                  ds.store) == pd);

  const std::vector<std::pair<int, int>> pairs{{0, 2}, {2, 0}};
  CHECK(pairs_from_json(pairs_to_json(ds.store, pairs), ds.store) == pairs);
  Json bad_pairs = pairs_to_json(ds.store, pairs);
  bad_pairs["pairs"][0][0] = "nope";
  CHECK_THROWS_AS(pairs_from_json(bad_pairs, ds.store), DataError);
}

TEST_CASE("box parsing rejects degenerate boxes as data errors") {
  CHECK(region_from_json(Json::array({1, 2, 3, 4})) == Region(1, 2, 3, 4));
  CHECK_THROWS_AS(region_from_json(Json::array({1, 2, 1, 4})), DataError);
  CHECK_THROWS_AS(region_from_json(Json::array({1, 2, 3})), DataError);
  CHECK_THROWS_AS(region_from_json(Json::array({1, 2, "x", 4})), DataError);
}
