#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gnm/core/error.hpp"

namespace gnm::scenegen {

using json = nlohmann::json;

enum class DatasetKind { Mnist4, Mnist10, Mnist4_10, Arrow2d };
enum class Quadrant { TL, TR, BR, BL };
enum class Role { Digit, Arrow, UniqueShape, PairShape };

inline std::string kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Mnist4: return "mnist4";
    case DatasetKind::Mnist10: return "mnist10";
    case DatasetKind::Mnist4_10: return "mnist4_10";
    case DatasetKind::Arrow2d: return "arrow2d";
  }
  throw UnknownKind("invalid dataset kind value");
}

inline DatasetKind kind_from_name(const std::string& s) {
  if (s == "mnist4") return DatasetKind::Mnist4;
  if (s == "mnist10") return DatasetKind::Mnist10;
  if (s == "mnist4_10") return DatasetKind::Mnist4_10;
  if (s == "arrow2d") return DatasetKind::Arrow2d;
  throw UnknownKind("unknown dataset kind: " + s);
}

inline std::string quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::TL: return "TL";
    case Quadrant::TR: return "TR";
    case Quadrant::BR: return "BR";
    case Quadrant::BL: return "BL";
  }
  throw UnknownKind("invalid quadrant value");
}

inline Quadrant quadrant_from_name(const std::string& s) {
  if (s == "TL") return Quadrant::TL;
  if (s == "TR") return Quadrant::TR;
  if (s == "BR") return Quadrant::BR;
  if (s == "BL") return Quadrant::BL;
  throw UnknownKind("unknown quadrant: " + s);
}

inline std::string role_name(Role r) {
  switch (r) {
    case Role::Digit: return "digit";
    case Role::Arrow: return "arrow";
    case Role::UniqueShape: return "unique_shape";
    case Role::PairShape: return "pair_shape";
  }
  throw UnknownKind("invalid role value");
}

inline Role role_from_name(const std::string& s) {
  if (s == "digit") return Role::Digit;
  if (s == "arrow") return Role::Arrow;
  if (s == "unique_shape") return Role::UniqueShape;
  if (s == "pair_shape") return Role::PairShape;
  throw UnknownKind("unknown role: " + s);
}

// One placed object. bbox is [x0,y0,x1,y1) in pixels with exclusive max;
// center is the geometric box center. For arrow2d, cls is the shape id
// (0 arrow, 1 disc, 2 square, 3 triangle), material is the scene-wide
// style token and angle_deg the pointing direction of arrows.
struct ObjectSpec {
  int cls = 0;
  Quadrant quadrant = Quadrant::TL;
  double cx = 0, cy = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::array<int, 3> color = {255, 255, 255};
  Role role = Role::Digit;
  std::string material;
  double angle_deg = 0;

  bool contains_center() const { return cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1; }
  double w() const { return x1 - x0; }
  double h() const { return y1 - y0; }
};

struct SceneSpec {
  DatasetKind kind = DatasetKind::Mnist4;
  int image_size = 128;
  std::vector<ObjectSpec> objects;
};

inline json object_to_json(const ObjectSpec& o) {
  json j;
  j["cls"] = o.cls;
  j["quadrant"] = quadrant_name(o.quadrant);
  j["center"] = {o.cx, o.cy};
  j["bbox"] = {o.x0, o.y0, o.x1, o.y1};
  j["color"] = {o.color[0], o.color[1], o.color[2]};
  j["role"] = role_name(o.role);
  if (!o.material.empty()) j["material"] = o.material;
  if (o.role == Role::Arrow) j["angle"] = o.angle_deg;
  return j;
}

inline ObjectSpec object_from_json(const json& j) {
  ObjectSpec o;
  o.cls = j.at("cls").get<int>();
  o.quadrant = quadrant_from_name(j.at("quadrant").get<std::string>());
  o.cx = j.at("center")[0].get<double>();
  o.cy = j.at("center")[1].get<double>();
  o.x0 = j.at("bbox")[0].get<double>();
  o.y0 = j.at("bbox")[1].get<double>();
  o.x1 = j.at("bbox")[2].get<double>();
  o.y1 = j.at("bbox")[3].get<double>();
  for (int i = 0; i < 3; ++i) o.color[static_cast<size_t>(i)] = j.at("color")[static_cast<size_t>(i)].get<int>();
  o.role = role_from_name(j.at("role").get<std::string>());
  if (j.contains("material")) o.material = j.at("material").get<std::string>();
  if (j.contains("angle")) o.angle_deg = j.at("angle").get<double>();
  return o;
}

inline json scene_to_json(const SceneSpec& s) {
  json j;
  j["dataset_kind"] = kind_name(s.kind);
  j["image_size"] = s.image_size;
  json objs = json::array();
  for (const auto& o : s.objects) objs.push_back(object_to_json(o));
  j["objects"] = std::move(objs);
  return j;
}

inline SceneSpec scene_from_json(const json& j) {
  if (!j.contains("dataset_kind"))
    throw SchemaVersionMismatch("scene spec missing dataset_kind");
  SceneSpec s;
  s.kind = kind_from_name(j.at("dataset_kind").get<std::string>());
  s.image_size = j.at("image_size").get<int>();
  for (const auto& jo : j.at("objects")) s.objects.push_back(object_from_json(jo));
  return s;
}

// Raw digit source for scene composition.
struct DigitBank {
  int width = 28, height = 28;
  std::vector<std::vector<float>> images;  // row-major, [0,1]
  std::vector<uint8_t> labels;
  std::string split;
  std::array<std::vector<int>, 10> by_class;

  void index() {
    for (auto& v : by_class) v.clear();
    if (images.size() != labels.size())
      throw CountMismatch("digit bank image/label count mismatch");
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] > 9) throw DomainError("digit label out of range 0..9");
      by_class[labels[i]].push_back(static_cast<int>(i));
    }
  }

  bool covers_all_classes() const {
    for (const auto& v : by_class)
      if (v.empty()) return false;
    return true;
  }
};

}  // namespace gnm::scenegen
