#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gnm/core/image.hpp"
#include "gnm/scenegen/generate.hpp"
#include "gnm/scenegen/scene.hpp"

namespace gnm::scenegen {

namespace fs = std::filesystem;

constexpr int kDatasetSchemaVersion = 1;

struct DatasetManifest {
  int schema_version = kDatasetSchemaVersion;
  DatasetKind kind = DatasetKind::Mnist4;
  int count = 0;
  uint64_t seed = 0;
  int image_size = 128;
};

inline std::string scene_stem(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", i);
  return buf;
}

// Layout: <dir>/manifest.json, <dir>/images/NNNNNN.png (lossless 8-bit
// RGB), <dir>/specs/NNNNNN.json.
inline void serialize_dataset(const std::vector<Scene>& scenes, const std::string& dir,
                              DatasetKind kind, uint64_t seed, int image_size) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "specs");
  json manifest;
  manifest["schema_version"] = kDatasetSchemaVersion;
  manifest["kind"] = kind_name(kind);
  manifest["count"] = static_cast<int>(scenes.size());
  manifest["seed"] = seed;
  manifest["image_size"] = image_size;
  {
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
  }
  for (size_t i = 0; i < scenes.size(); ++i) {
    std::string stem = scene_stem(static_cast<int>(i));
    write_png((fs::path(dir) / "images" / (stem + ".png")).string(), scenes[i].image);
    std::ofstream f(fs::path(dir) / "specs" / (stem + ".json"));
    if (!f) throw IoError("cannot write spec " + stem + " in " + dir);
    f << scene_to_json(scenes[i].spec).dump(2) << "\n";
  }
}

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::string dir) : dir_(std::move(dir)) {
    std::ifstream f(fs::path(dir_) / "manifest.json");
    if (!f) throw IoError("dataset manifest not found in " + dir_);
    json m = json::parse(f, nullptr, /*allow_exceptions=*/false);
    if (m.is_discarded() || !m.contains("schema_version") || !m.contains("kind") ||
        !m.contains("count") || !m.contains("seed") || !m.contains("image_size"))
      throw SchemaVersionMismatch("malformed dataset manifest in " + dir_);
    manifest_.schema_version = m["schema_version"].get<int>();
    if (manifest_.schema_version != kDatasetSchemaVersion)
      throw SchemaVersionMismatch("dataset schema version " +
                                  std::to_string(manifest_.schema_version) + " unsupported");
    manifest_.kind = kind_from_name(m["kind"].get<std::string>());
    manifest_.count = m["count"].get<int>();
    manifest_.seed = m["seed"].get<uint64_t>();
    manifest_.image_size = m["image_size"].get<int>();
  }

  const DatasetManifest& manifest() const { return manifest_; }
  int count() const { return manifest_.count; }
  const std::string& dir() const { return dir_; }

  std::string image_path(int i) const {
    return (fs::path(dir_) / "images" / (scene_stem(i) + ".png")).string();
  }
  std::string spec_path(int i) const {
    return (fs::path(dir_) / "specs" / (scene_stem(i) + ".json")).string();
  }

  ImageU8 image(int i) const { return read_png(image_path(i)); }

  SceneSpec spec(int i) const {
    std::ifstream f(spec_path(i));
    if (!f) throw IoError("missing spec file " + spec_path(i));
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw SchemaVersionMismatch("malformed spec json " + spec_path(i));
    return scene_from_json(j);
  }

 private:
  std::string dir_;
  DatasetManifest manifest_;
};

inline Dataset load_dataset(const std::string& dir) { return Dataset(dir); }

}  // namespace gnm::scenegen
