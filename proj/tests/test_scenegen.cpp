#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gnm/scenegen/dataset_io.hpp"
#include "gnm/scenegen/generate.hpp"
#include "gnm/scenegen/idx.hpp"
#include "gnm/scenegen/validate.hpp"
#include "testutil_digits.hpp"

using namespace gnm;
using namespace gnm::scenegen;
namespace fs = std::filesystem;

namespace {

DigitBank& bank() {
  static DigitBank b = testutil::make_synthetic_bank(8, 99);
  return b;
}

fs::path tmpdir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("idx round trip, magic constants and truncation") {
  auto dir = tmpdir("gnm_idx");
  std::string ip = (dir / "img.idx").string(), lp = (dir / "lbl.idx").string();
  write_idx_pair(ip, lp, bank());
  DigitBank loaded = load_mnist_idx(ip, lp);
  CHECK(loaded.images.size() == bank().images.size());
  CHECK(loaded.labels == bank().labels);
  CHECK(loaded.width == 28);
  // byte 255 -> 1.0 scaling
  bool saw_one = false;
  for (float v : loaded.images[0]) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
    if (v == 1.f) saw_one = true;
  }
  CHECK(saw_one);

  SUBCASE("label magic on the image path -> BadMagic") {
    CHECK_THROWS_AS(load_mnist_idx(lp, lp), BadMagic);
    CHECK_THROWS_AS(load_mnist_idx(ip, ip), BadMagic);
  }
  SUBCASE("count mismatch") {
    DigitBank small = bank();
    small.images.pop_back();
    small.labels.pop_back();
    std::string lp2 = (dir / "lbl2.idx").string();
    std::string ip2 = (dir / "img2.idx").string();
    write_idx_pair(ip2, lp2, small);
    CHECK_THROWS_AS(load_mnist_idx(ip, lp2), CountMismatch);
  }
  SUBCASE("payload shorter than header -> Truncated") {
    auto bytes = fs::file_size(ip);
    fs::resize_file(ip, bytes - 100);
    CHECK_THROWS_AS(load_mnist_idx(ip, lp), Truncated);
  }
}

TEST_CASE("mnist4 structure rules") {
  GenConfig cfg;
  auto scenes = generate_scenes(DatasetKind::Mnist4, &bank(), 64, 7, cfg);
  for (const auto& sc : scenes) {
    REQUIRE(sc.spec.objects.size() == 4);
    const auto& obj = sc.spec.objects;
    // clockwise class progression from a TL class in 0..6
    CHECK(obj[0].quadrant == Quadrant::TL);
    CHECK(obj[0].cls >= 0);
    CHECK(obj[0].cls <= 6);
    CHECK(obj[1].cls == obj[0].cls + 1);
    CHECK(obj[2].cls == obj[0].cls + 2);
    CHECK(obj[3].cls == obj[0].cls + 3);
    // exact mirror symmetry about both center axes
    double S = cfg.image_size;
    CHECK(obj[0].cx + obj[1].cx == S);
    CHECK(obj[0].cy == obj[1].cy);
    CHECK(obj[0].cx == obj[3].cx);
    CHECK(obj[0].cy + obj[3].cy == S);
    CHECK(std::abs(obj[0].cx - S / 2) == std::abs(obj[1].cx - S / 2));
    auto v = validate_scene(sc.spec);
    CHECK(v.pass);
  }
}

TEST_CASE("mnist10 structure rules") {
  GenConfig cfg;
  auto scenes = generate_scenes(DatasetKind::Mnist10, &bank(), 64, 11, cfg);
  int swapped_count = 0;
  for (const auto& sc : scenes) {
    REQUIRE(sc.spec.objects.size() == 10);
    std::map<Quadrant, std::vector<int>> classes;
    for (const auto& o : sc.spec.objects)
      classes[quadrant_of_point(o.cx, o.cy, cfg.image_size)].push_back(o.cls);
    for (auto& [q, cs] : classes) std::sort(cs.begin(), cs.end());
    bool normal = classes[Quadrant::TL] == std::vector<int>{0, 1} &&
                  classes[Quadrant::TR] == std::vector<int>{2, 3, 4} &&
                  classes[Quadrant::BR] == std::vector<int>{8, 9} &&
                  classes[Quadrant::BL] == std::vector<int>{5, 6, 7};
    bool swapped = classes[Quadrant::BR] == std::vector<int>{0, 1} &&
                   classes[Quadrant::BL] == std::vector<int>{2, 3, 4} &&
                   classes[Quadrant::TL] == std::vector<int>{8, 9} &&
                   classes[Quadrant::TR] == std::vector<int>{5, 6, 7};
    CHECK((normal || swapped));
    swapped_count += swapped ? 1 : 0;
    auto v = validate_scene(sc.spec);
    INFO("violations: ", v.violations.empty() ? "" : v.violations[0]);
    CHECK(v.pass);
  }
  CHECK(swapped_count > 8);  // both layouts occur
  CHECK(swapped_count < 56);
}

TEST_CASE("mnist4_10 mixes at one half") {
  GenConfig cfg;
  auto scenes = generate_scenes(DatasetKind::Mnist4_10, &bank(), 400, 3, cfg);
  int fours = 0;
  for (const auto& sc : scenes) {
    CHECK(validate_scene(sc.spec).pass);
    if (sc.spec.objects.size() == 4) ++fours;
  }
  double frac = fours / 400.0;
  CHECK(frac > 0.40);  // 10k-scene bound [0.47,0.53] checked in acceptance
  CHECK(frac < 0.60);
}

TEST_CASE("arrow2d structure rules") {
  GenConfig cfg;
  auto scenes = generate_scenes(DatasetKind::Arrow2d, nullptr, 64, 21, cfg);
  for (const auto& sc : scenes) {
    REQUIRE(sc.spec.objects.size() == 4);
    std::map<int, int> shapes;
    int uniques = 0;
    std::string mat = sc.spec.objects[0].material;
    const ObjectSpec* arrow = nullptr;
    const ObjectSpec* unique = nullptr;
    for (const auto& o : sc.spec.objects) {
      shapes[o.cls]++;
      CHECK(o.material == mat);
      if (o.role == Role::UniqueShape) {
        ++uniques;
        unique = &o;
      }
      if (o.role == Role::Arrow) arrow = &o;
    }
    CHECK(uniques == 1);  // uniquely identifiable from the spec
    REQUIRE(arrow != nullptr);
    REQUIRE(unique != nullptr);
    CHECK(shapes[kShapeArrow] == 1);
    CHECK(shapes[unique->cls] == 1);
    // pointing rule within +-5 degrees
    double aim = std::atan2(unique->cy - arrow->cy, unique->cx - arrow->cx) * 180.0 /
                 std::numbers::pi;
    double diff = std::abs(arrow->angle_deg - aim);
    if (diff > 180) diff = 360 - diff;
    CHECK(diff <= 5.0);
    CHECK(validate_scene(sc.spec).pass);
  }
}

TEST_CASE("generation is deterministic in (bank, count, seed)") {
  GenConfig cfg;
  auto a = generate_scenes(DatasetKind::Mnist10, &bank(), 12, 5, cfg);
  auto b = generate_scenes(DatasetKind::Mnist10, &bank(), 12, 5, cfg);
  auto c = generate_scenes(DatasetKind::Mnist10, &bank(), 12, 6, cfg);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.pix == b[i].image.pix);
    CHECK(scene_to_json(a[i].spec).dump() == scene_to_json(b[i].spec).dump());
  }
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i) any_diff |= (a[i].image.pix != c[i].image.pix);
  CHECK(any_diff);
}

TEST_CASE("validator flags corrupted scenes with named rules") {
  GenConfig cfg;
  auto scenes = generate_scenes(DatasetKind::Mnist4, &bank(), 4, 17, cfg);

  SUBCASE("clockwise rule broken") {
    SceneSpec s = scenes[0].spec;
    for (auto& o : s.objects)
      if (o.quadrant == Quadrant::BL) o.cls += 1;  // e.g. 2,3,4,6
    auto v = validate_scene(s);
    CHECK_FALSE(v.pass);
    CHECK(std::find(v.violations.begin(), v.violations.end(), "clockwise-increment") !=
          v.violations.end());
  }
  SUBCASE("symmetry broken") {
    SceneSpec s = scenes[1].spec;
    s.objects[1].cx += 3;
    s.objects[1].x0 += 3;
    s.objects[1].x1 += 3;
    auto v = validate_scene(s);
    CHECK_FALSE(v.pass);
    CHECK(std::find(v.violations.begin(), v.violations.end(), "position-symmetry") !=
          v.violations.end());
  }
  SUBCASE("mnist10 position sharing broken by 10px") {
    auto ms = generate_scenes(DatasetKind::Mnist10, &bank(), 1, 23, cfg);
    SceneSpec s = ms[0].spec;
    for (auto& o : s.objects)
      if (o.cls == 8) {
        double shift = o.cx + 10 < 126 ? 10 : -10;
        o.cx += shift;
        o.x0 += shift;
        o.x1 += shift;
        break;
      }
    RuleTolerance tol;
    tol.pos = 6.0;  // detection-grade slack still catches a 10 px break
    auto v = validate_scene(s, tol);
    CHECK_FALSE(v.pass);
    CHECK(std::find(v.violations.begin(), v.violations.end(), "position-sharing") !=
          v.violations.end());
  }
  SUBCASE("arrow pointing broken") {
    auto as = generate_scenes(DatasetKind::Arrow2d, nullptr, 1, 29, cfg);
    SceneSpec s = as[0].spec;
    for (auto& o : s.objects)
      if (o.role == Role::Arrow) o.angle_deg += 90;
    auto v = validate_scene(s);
    CHECK_FALSE(v.pass);
    CHECK(std::find(v.violations.begin(), v.violations.end(), "arrow-pointing") !=
          v.violations.end());
  }
}

TEST_CASE("dataset round trip is lossless") {
  auto dir = tmpdir("gnm_ds");
  GenConfig cfg;
  auto scenes = generate_scenes(DatasetKind::Mnist4, &bank(), 20, 31, cfg);
  serialize_dataset(scenes, dir.string(), DatasetKind::Mnist4, 31, cfg.image_size);
  Dataset ds = load_dataset(dir.string());
  CHECK(ds.count() == 20);
  CHECK(ds.manifest().kind == DatasetKind::Mnist4);
  for (int i = 0; i < ds.count(); ++i) {
    ImageU8 img = ds.image(i);
    CHECK(img.pix == scenes[static_cast<size_t>(i)].image.pix);  // bit-identical pixels
    SceneSpec sp = ds.spec(i);
    CHECK(scene_to_json(sp).dump() ==
          scene_to_json(scenes[static_cast<size_t>(i)].spec).dump());
  }

  SUBCASE("empty dataset still has a valid manifest") {
    auto dir2 = tmpdir("gnm_ds_empty");
    serialize_dataset({}, dir2.string(), DatasetKind::Arrow2d, 0, 128);
    Dataset empty = load_dataset(dir2.string());
    CHECK(empty.count() == 0);
  }
  SUBCASE("spec missing dataset_kind -> SchemaVersionMismatch") {
    std::ofstream f(ds.spec_path(0));
    f << "{\"image_size\":128,\"objects\":[]}";
    f.close();
    CHECK_THROWS_AS(ds.spec(0), SchemaVersionMismatch);
  }
  SUBCASE("wrong manifest version -> SchemaVersionMismatch") {
    std::ofstream f(dir / "manifest.json");
    f << "{\"schema_version\":999,\"kind\":\"mnist4\",\"count\":1,\"seed\":0,\"image_size\":128}";
    f.close();
    CHECK_THROWS_AS(load_dataset(dir.string()), SchemaVersionMismatch);
  }
}

TEST_CASE("generator/validator consistency over many seeds") {
  GenConfig cfg;
  for (auto kind : {DatasetKind::Mnist4, DatasetKind::Mnist10, DatasetKind::Mnist4_10,
                    DatasetKind::Arrow2d}) {
    auto scenes = generate_scenes(kind, kind == DatasetKind::Arrow2d ? nullptr : &bank(), 250,
                                  1234, cfg);
    int passed = 0;
    for (const auto& sc : scenes) passed += validate_scene(sc.spec).pass ? 1 : 0;
    CHECK(passed == 250);  // acceptance suite runs 10k per kind
  }
}
