#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "gnm/scenegen/generate.hpp"
#include "gnm/scenegen/scene.hpp"

namespace gnm::scenegen {

// Ground-truth specs are checked exactly (integer placement); detected
// scenes get positional slack and skip fields detection cannot recover.
struct RuleTolerance {
  double pos = 1e-9;
  double angle_deg = 5.0;
  bool check_materials = true;

  static RuleTolerance detection() {
    RuleTolerance t;
    t.pos = 8.0;
    t.angle_deg = 10.0;
    t.check_materials = false;
    return t;
  }
};

struct ValidationResult {
  bool pass = true;
  std::vector<std::string> violations;

  void fail(const std::string& rule) {
    pass = false;
    if (std::find(violations.begin(), violations.end(), rule) == violations.end())
      violations.push_back(rule);
  }
};

namespace detail {

inline void check_bounds(const SceneSpec& s, const RuleTolerance& tol, ValidationResult& r) {
  for (const auto& o : s.objects) {
    if (o.x0 < -tol.pos || o.y0 < -tol.pos || o.x1 > s.image_size + tol.pos ||
        o.y1 > s.image_size + tol.pos)
      r.fail("bbox-in-image");
    if (!o.contains_center()) r.fail("center-in-bbox");
  }
}

inline void check_quadrant_containment(const SceneSpec& s, const RuleTolerance& tol,
                                       ValidationResult& r) {
  for (const auto& o : s.objects) {
    Quadrant q = quadrant_of_point(o.cx, o.cy, s.image_size);
    QuadRect rect = quadrant_rect(q, s.image_size);
    if (o.x0 < rect.x0 - tol.pos || o.y0 < rect.y0 - tol.pos || o.x1 > rect.x1 + tol.pos ||
        o.y1 > rect.y1 + tol.pos)
      r.fail("quadrant-containment");
  }
}

inline const ObjectSpec* find_in_quadrant(const SceneSpec& s, Quadrant q) {
  for (const auto& o : s.objects)
    if (quadrant_of_point(o.cx, o.cy, s.image_size) == q) return &o;
  return nullptr;
}

inline void validate_mnist4_rules(const SceneSpec& s, const RuleTolerance& tol,
                                  ValidationResult& r) {
  if (s.objects.size() != 4) {
    r.fail("object-count");
    return;
  }
  check_bounds(s, tol, r);
  check_quadrant_containment(s, tol, r);

  std::map<Quadrant, std::vector<const ObjectSpec*>> byq;
  for (const auto& o : s.objects)
    byq[quadrant_of_point(o.cx, o.cy, s.image_size)].push_back(&o);
  for (Quadrant q : {Quadrant::TL, Quadrant::TR, Quadrant::BR, Quadrant::BL})
    if (byq[q].size() != 1) {
      r.fail("one-per-quadrant");
      return;
    }
  const ObjectSpec* tl = byq[Quadrant::TL][0];
  const ObjectSpec* tr = byq[Quadrant::TR][0];
  const ObjectSpec* br = byq[Quadrant::BR][0];
  const ObjectSpec* bl = byq[Quadrant::BL][0];

  if (tl->cls < 0 || tl->cls > 6) r.fail("class-range");
  if (tr->cls != tl->cls + 1 || br->cls != tl->cls + 2 || bl->cls != tl->cls + 3)
    r.fail("clockwise-increment");

  double S = s.image_size;
  bool sym = std::abs(tl->cx + tr->cx - S) <= tol.pos && std::abs(tl->cy - tr->cy) <= tol.pos &&
             std::abs(tl->cx - bl->cx) <= tol.pos && std::abs(tl->cy + bl->cy - S) <= tol.pos &&
             std::abs(br->cx - tr->cx) <= tol.pos && std::abs(br->cy + tr->cy - S) <= tol.pos;
  if (!sym) r.fail("position-symmetry");
}

inline void validate_mnist10_rules(const SceneSpec& s, const RuleTolerance& tol,
                                   ValidationResult& r) {
  if (s.objects.size() != 10) {
    r.fail("object-count");
    return;
  }
  check_bounds(s, tol, r);
  check_quadrant_containment(s, tol, r);

  std::map<Quadrant, std::vector<const ObjectSpec*>> byq;
  for (const auto& o : s.objects)
    byq[quadrant_of_point(o.cx, o.cy, s.image_size)].push_back(&o);

  auto classes_in = [&](Quadrant q) {
    std::vector<int> cs;
    for (auto* o : byq[q]) cs.push_back(o->cls);
    std::sort(cs.begin(), cs.end());
    return cs;
  };

  // clockwise quadrant order TL,TR,BR,BL; swapped layout shifts sets by 2
  const Quadrant quads[4] = {Quadrant::TL, Quadrant::TR, Quadrant::BR, Quadrant::BL};
  auto layout_matches = [&](bool swapped) {
    for (int qi = 0; qi < 4; ++qi) {
      Quadrant q = quads[swapped ? (qi + 2) % 4 : qi];
      if (classes_in(q) != mnist10_class_set(qi)) return false;
    }
    return true;
  };
  bool normal = layout_matches(false), swapped = layout_matches(true);
  if (!normal && !swapped) {
    r.fail("class-sets");
    return;
  }

  // position sharing between the {0,1} and {8,9} quadrants, paired in
  // class order (0<->8, 1<->9) as within-quadrant offsets
  Quadrant qa = swapped ? Quadrant::BR : Quadrant::TL;
  Quadrant qb = swapped ? Quadrant::TL : Quadrant::BR;
  auto offset_of = [&](Quadrant q, int cls) {
    QuadRect rect = quadrant_rect(q, s.image_size);
    for (auto* o : byq[q])
      if (o->cls == cls) return std::pair<double, double>(o->cx - rect.x0, o->cy - rect.y0);
    return std::pair<double, double>(-1, -1);
  };
  auto [x0a, y0a] = offset_of(qa, 0);
  auto [x8, y8] = offset_of(qb, 8);
  auto [x1a, y1a] = offset_of(qa, 1);
  auto [x9, y9] = offset_of(qb, 9);
  if (std::abs(x0a - x8) > tol.pos || std::abs(y0a - y8) > tol.pos ||
      std::abs(x1a - x9) > tol.pos || std::abs(y1a - y9) > tol.pos)
    r.fail("position-sharing");
}

inline void validate_arrow2d_rules(const SceneSpec& s, const RuleTolerance& tol,
                                   ValidationResult& r) {
  if (s.objects.size() != 4) {
    r.fail("object-count");
    return;
  }
  check_bounds(s, tol, r);

  std::map<int, int> shape_count;
  const ObjectSpec* arrow = nullptr;
  for (const auto& o : s.objects) {
    shape_count[o.cls]++;
    if (o.cls == kShapeArrow) arrow = &o;
  }
  // pattern {arrow, s, s, u}: one arrow, one shape twice, one shape once
  int unique_cls = -1;
  bool pattern_ok = shape_count[kShapeArrow] == 1 && shape_count.size() == 3;
  if (pattern_ok) {
    for (auto& [cls, n] : shape_count) {
      if (cls == kShapeArrow) continue;
      if (n == 1)
        unique_cls = cls;
      else if (n != 2)
        pattern_ok = false;
    }
    if (unique_cls < 0) pattern_ok = false;
  }
  if (!pattern_ok) {
    r.fail("shape-pattern");
    return;
  }

  int unique_roles = 0;
  const ObjectSpec* unique_obj = nullptr;
  for (const auto& o : s.objects) {
    if (o.role == Role::UniqueShape) {
      ++unique_roles;
      unique_obj = &o;
    }
    if (o.cls == unique_cls && !unique_obj) unique_obj = &o;
  }
  if (unique_roles != 1) r.fail("unique-role");
  for (const auto& o : s.objects)
    if (o.cls == unique_cls) unique_obj = &o;

  if (arrow && unique_obj) {
    double aim = std::atan2(unique_obj->cy - arrow->cy, unique_obj->cx - arrow->cx) * 180.0 /
                 std::numbers::pi;
    double diff = std::fmod(std::abs(arrow->angle_deg - aim), 360.0);
    if (diff > 180.0) diff = 360.0 - diff;
    if (diff > tol.angle_deg) r.fail("arrow-pointing");
  }

  if (tol.check_materials) {
    const std::string& m = s.objects[0].material;
    bool ok = !m.empty();
    for (const auto& o : s.objects) ok = ok && o.material == m;
    if (!ok) r.fail("material-consistency");
  }
}

}  // namespace detail

inline ValidationResult validate_scene(const SceneSpec& s, const RuleTolerance& tol = {}) {
  ValidationResult r;
  switch (s.kind) {
    case DatasetKind::Mnist4:
      detail::validate_mnist4_rules(s, tol, r);
      break;
    case DatasetKind::Mnist10:
      detail::validate_mnist10_rules(s, tol, r);
      break;
    case DatasetKind::Mnist4_10:
      if (s.objects.size() == 4)
        detail::validate_mnist4_rules(s, tol, r);
      else if (s.objects.size() == 10)
        detail::validate_mnist10_rules(s, tol, r);
      else
        r.fail("object-count");
      break;
    case DatasetKind::Arrow2d:
      detail::validate_arrow2d_rules(s, tol, r);
      break;
    default:
      throw UnknownKind("validate_scene: invalid dataset kind");
  }
  return r;
}

}  // namespace gnm::scenegen
