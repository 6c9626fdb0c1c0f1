#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "gnm/core/image.hpp"
#include "gnm/core/rng.hpp"
#include "gnm/scenegen/scene.hpp"

namespace gnm::scenegen {

struct GenConfig {
  int image_size = 128;
  int stamp_size = 28;  // digit stamp side inside the composed image
  int margin = 2;       // stamp-to-quadrant-border clearance
  int gap = 4;          // min bbox separation inside a quadrant
};

struct Scene {
  ImageU8 image;
  SceneSpec spec;
};

struct QuadRect {
  int x0, y0, x1, y1;  // exclusive max
};

inline QuadRect quadrant_rect(Quadrant q, int image_size) {
  int h = image_size / 2;
  switch (q) {
    case Quadrant::TL: return {0, 0, h, h};
    case Quadrant::TR: return {h, 0, image_size, h};
    case Quadrant::BR: return {h, h, image_size, image_size};
    case Quadrant::BL: return {0, h, h, image_size};
  }
  throw UnknownKind("invalid quadrant");
}

inline Quadrant quadrant_of_point(double x, double y, int image_size) {
  double h = image_size / 2.0;
  if (x < h) return y < h ? Quadrant::TL : Quadrant::BL;
  return y < h ? Quadrant::TR : Quadrant::BR;
}

// Ink bounds of a glyph inside its stamp.
struct InkRect {
  int dx = 0, dy = 0, w = 0, h = 0;
};

inline InkRect ink_rect(const std::vector<float>& glyph, int size, float thresh = 0.05f) {
  int x0 = size, y0 = size, x1 = -1, y1 = -1;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (glyph[static_cast<size_t>(y) * size + x] > thresh) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {0, 0, size, size};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

namespace detail {

inline int64_t rect_overlap(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh,
                            int gap) {
  int64_t ox = std::min(ax + aw, bx + bw) + gap - std::max(ax, bx);
  int64_t oy = std::min(ay + ah, by + bh) + gap - std::max(ay, by);
  if (ox <= 0 || oy <= 0) return 0;
  return ox * oy;
}

// Stamp corners inside a quadrant such that the per-offset ink boxes do
// not collide. items[i] lists the ink rects that will sit at offset i
// (several when quadrants share offsets). Dense stamp sizes can make a
// zero-overlap packing geometrically impossible, so after the attempt
// budget the least-overlapping candidate wins; the draw sequence is
// fully deterministic in rng.
inline std::vector<std::pair<int, int>> place_stamps(
    Rng& rng, const QuadRect& q, int stamp, int margin, int gap,
    const std::vector<std::vector<InkRect>>& items, int attempts = 400) {
  int lo_x = q.x0 + margin, hi_x = q.x1 - margin - stamp;
  int lo_y = q.y0 + margin, hi_y = q.y1 - margin - stamp;
  if (hi_x < lo_x || hi_y < lo_y)
    throw DomainError("stamp does not fit in quadrant with the configured margin");
  size_t n = items.size();
  size_t alts = items.empty() ? 0 : items[0].size();
  std::vector<std::pair<int, int>> best(n), cur(n);
  int64_t best_cost = -1;
  for (int a = 0; a < attempts; ++a) {
    for (size_t i = 0; i < n; ++i)
      cur[i] = {lo_x + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(hi_x - lo_x + 1))),
                lo_y + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(hi_y - lo_y + 1)))};
    int64_t cost = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j)
        for (size_t k = 0; k < alts; ++k) {
          const InkRect& ri = items[i][k];
          const InkRect& rj = items[j][k];
          cost += rect_overlap(cur[i].first + ri.dx, cur[i].second + ri.dy, ri.w, ri.h,
                               cur[j].first + rj.dx, cur[j].second + rj.dy, rj.w, rj.h, gap);
        }
    if (best_cost < 0 || cost < best_cost) {
      best_cost = cost;
      best = cur;
      if (cost == 0) break;
    }
  }
  return best;
}

// Max-blend of a grayscale stamp tinted by `color` at integer offset.
inline void blend_stamp(ImageU8& img, const std::vector<float>& stamp, int sw, int sh, int x0,
                        int y0, const std::array<int, 3>& color) {
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x) {
      float v = stamp[static_cast<size_t>(y) * sw + x];
      if (v <= 0.f) continue;
      for (int k = 0; k < 3; ++k) {
        int value = static_cast<int>(v * static_cast<float>(color[static_cast<size_t>(k)]) + 0.5f);
        uint8_t& dst = img.at(x0 + x, y0 + y, k);
        dst = static_cast<uint8_t>(std::max<int>(dst, value));
      }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MNIST-4: one digit per quadrant, classes increase clockwise from a
// top-left class in 0..6, positions mirror-symmetric about both axes.
// ---------------------------------------------------------------------------

inline Scene make_mnist4_scene(const DigitBank& bank, Rng& rng, const GenConfig& cfg) {
  Scene scene;
  scene.image = ImageU8(cfg.image_size, cfg.image_size, 3);
  scene.spec.kind = DatasetKind::Mnist4;
  scene.spec.image_size = cfg.image_size;

  int stamp = cfg.stamp_size;
  int tl_cls = static_cast<int>(rng.uniform_int(7));

  QuadRect tl = quadrant_rect(Quadrant::TL, cfg.image_size);
  int lo = tl.x0 + cfg.margin, hi = tl.x1 - cfg.margin - stamp;
  int x_tl = lo + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(hi - lo + 1)));
  int y_tl = lo + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(hi - lo + 1)));
  int s = cfg.image_size;

  // mirrored stamp corners, exact at integer resolution
  const Quadrant quads[4] = {Quadrant::TL, Quadrant::TR, Quadrant::BR, Quadrant::BL};
  const int xs[4] = {x_tl, s - x_tl - stamp, s - x_tl - stamp, x_tl};
  const int ys[4] = {y_tl, y_tl, s - y_tl - stamp, s - y_tl - stamp};

  for (int i = 0; i < 4; ++i) {
    int cls = tl_cls + i;  // clockwise TL,TR,BR,BL
    const auto& pool = bank.by_class[static_cast<size_t>(cls)];
    int pick = pool[rng.uniform_int(static_cast<uint32_t>(pool.size()))];
    std::vector<float> glyph = resize_bilinear(bank.images[static_cast<size_t>(pick)],
                                               bank.width, bank.height, stamp, stamp);
    detail::blend_stamp(scene.image, glyph, stamp, stamp, xs[i], ys[i], {255, 255, 255});
    ObjectSpec o;
    o.cls = cls;
    o.quadrant = quads[i];
    o.x0 = xs[i];
    o.y0 = ys[i];
    o.x1 = xs[i] + stamp;
    o.y1 = ys[i] + stamp;
    o.cx = o.x0 + stamp / 2.0;
    o.cy = o.y0 + stamp / 2.0;
    o.role = Role::Digit;
    scene.spec.objects.push_back(o);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// MNIST-10: quadrant class sets Q1..Q4 clockwise from TL, Q1/Q3 share
// within-quadrant offsets pairwise, diagonals swapped with p = 0.5.
// ---------------------------------------------------------------------------

inline const std::vector<int>& mnist10_class_set(int qi) {
  static const std::vector<int> sets[4] = {{0, 1}, {2, 3, 4}, {8, 9}, {5, 6, 7}};
  return sets[qi];
}

inline Scene make_mnist10_scene(const DigitBank& bank, Rng& rng, const GenConfig& cfg) {
  Scene scene;
  scene.image = ImageU8(cfg.image_size, cfg.image_size, 3);
  scene.spec.kind = DatasetKind::Mnist10;
  scene.spec.image_size = cfg.image_size;
  int stamp = cfg.stamp_size;

  // clockwise: Q1=TL, Q2=TR, Q3=BR, Q4=BL
  const Quadrant base_quads[4] = {Quadrant::TL, Quadrant::TR, Quadrant::BR, Quadrant::BL};

  // pick glyph instances first so placement can use their ink bounds
  struct Pick {
    int cls;
    std::vector<float> glyph;
    InkRect ink;
  };
  auto draw_pick = [&](int cls) {
    const auto& pool = bank.by_class[static_cast<size_t>(cls)];
    int idx = pool[rng.uniform_int(static_cast<uint32_t>(pool.size()))];
    Pick p;
    p.cls = cls;
    p.glyph = resize_bilinear(bank.images[static_cast<size_t>(idx)], bank.width, bank.height,
                              stamp, stamp);
    p.ink = ink_rect(p.glyph, stamp);
    return p;
  };
  std::array<std::vector<Pick>, 4> picks;  // per class set Q1..Q4
  for (int qi = 0; qi < 4; ++qi)
    for (int cls : mnist10_class_set(qi)) picks[static_cast<size_t>(qi)].push_back(draw_pick(cls));

  // offsets in a unit quadrant; Q1 and Q3 share theirs, so each shared
  // offset carries both ink boxes
  QuadRect unit = {0, 0, cfg.image_size / 2, cfg.image_size / 2};
  std::vector<std::vector<InkRect>> shared_items = {
      {picks[0][0].ink, picks[2][0].ink}, {picks[0][1].ink, picks[2][1].ink}};
  auto off_q13 = detail::place_stamps(rng, unit, stamp, cfg.margin, cfg.gap, shared_items);
  auto items_of = [](const std::vector<Pick>& ps) {
    std::vector<std::vector<InkRect>> v;
    for (const auto& p : ps) v.push_back({p.ink});
    return v;
  };
  auto off_q2 = detail::place_stamps(rng, unit, stamp, cfg.margin, cfg.gap, items_of(picks[1]));
  auto off_q4 = detail::place_stamps(rng, unit, stamp, cfg.margin, cfg.gap, items_of(picks[3]));

  bool swapped = rng.bernoulli(0.5);
  // quadrant actually holding set Qi's content
  auto target = [&](int qi) {
    if (!swapped) return base_quads[qi];
    return base_quads[(qi + 2) % 4];  // TL<->BR, TR<->BL
  };

  for (int qi = 0; qi < 4; ++qi) {
    const auto& offs = qi == 0 || qi == 2 ? off_q13 : (qi == 1 ? off_q2 : off_q4);
    Quadrant quad = target(qi);
    QuadRect q = quadrant_rect(quad, cfg.image_size);
    for (size_t k = 0; k < picks[static_cast<size_t>(qi)].size(); ++k) {
      const Pick& p = picks[static_cast<size_t>(qi)][k];
      int x0 = q.x0 + offs[k].first, y0 = q.y0 + offs[k].second;
      detail::blend_stamp(scene.image, p.glyph, stamp, stamp, x0, y0, {255, 255, 255});
      ObjectSpec o;
      o.cls = p.cls;
      o.quadrant = quad;
      o.x0 = x0;
      o.y0 = y0;
      o.x1 = x0 + stamp;
      o.y1 = y0 + stamp;
      o.cx = o.x0 + stamp / 2.0;
      o.cy = o.y0 + stamp / 2.0;
      o.role = Role::Digit;
      scene.spec.objects.push_back(o);
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Arrow2D: flat 2-D stand-in for the Arrow Room. Four sprites: one arrow,
// a same-shape pair, one unique shape the arrow points at. One style
// token ("material") per scene; the arrow is drawn last, i.e. topmost.
// ---------------------------------------------------------------------------

constexpr int kShapeArrow = 0;
constexpr int kShapeDisc = 1;
constexpr int kShapeSquare = 2;
constexpr int kShapeTriangle = 3;

inline const std::array<std::array<int, 3>, 8>& arrow_palette() {
  static const std::array<std::array<int, 3>, 8> pal = {{{230, 60, 60},
                                                         {60, 200, 60},
                                                         {70, 90, 235},
                                                         {235, 220, 60},
                                                         {60, 220, 220},
                                                         {225, 70, 225},
                                                         {240, 150, 50},
                                                         {235, 235, 235}}};
  return pal;
}

// Rasterizes one sprite into a size x size grayscale alpha map [0,1].
// `angle_deg` rotates the arrow; other shapes ignore it.
inline std::vector<float> rasterize_sprite(int shape, int size, double angle_deg) {
  std::vector<float> a(static_cast<size_t>(size) * size, 0.f);
  double c = size / 2.0;
  double r = size * 0.42;
  auto set = [&](int x, int y) { a[static_cast<size_t>(y) * size + x] = 1.f; };
  if (shape == kShapeDisc) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double dx = x + 0.5 - c, dy = y + 0.5 - c;
        if (dx * dx + dy * dy <= r * r) set(x, y);
      }
  } else if (shape == kShapeSquare) {
    double half = r * 0.86;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (std::abs(x + 0.5 - c) <= half && std::abs(y + 0.5 - c) <= half) set(x, y);
  } else if (shape == kShapeTriangle) {
    // upward equilateral triangle inscribed in radius r
    double x1 = c, y1 = c - r;
    double x2 = c - r * 0.866, y2 = c + r * 0.5;
    double x3 = c + r * 0.866, y3 = c + r * 0.5;
    auto edge = [](double ax, double ay, double bx, double by, double px, double py) {
      return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    };
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double px = x + 0.5, py = y + 0.5;
        double e1 = edge(x1, y1, x2, y2, px, py);
        double e2 = edge(x2, y2, x3, y3, px, py);
        double e3 = edge(x3, y3, x1, y1, px, py);
        if ((e1 >= 0 && e2 >= 0 && e3 >= 0) || (e1 <= 0 && e2 <= 0 && e3 <= 0)) set(x, y);
      }
  } else {
    // arrow: shaft plus triangular head, then rotated by angle
    double th = angle_deg * std::numbers::pi / 180.0;
    double cs = std::cos(-th), sn = std::sin(-th);
    double shaft_half = r * 0.18;
    double head_len = r * 0.85;
    double head_half = r * 0.5;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double px = x + 0.5 - c, py = y + 0.5 - c;
        // rotate the pixel back into the arrow frame (arrow points +x)
        double ux = px * cs - py * sn;
        double uy = px * sn + py * cs;
        bool shaft = ux >= -r && ux <= r - head_len && std::abs(uy) <= shaft_half;
        bool head = ux >= r - head_len && ux <= r &&
                    std::abs(uy) <= head_half * (r - ux) / head_len;
        if (shaft || head) set(x, y);
      }
  }
  return a;
}

inline void shade_material(std::vector<float>& alpha, std::vector<float>& lum, int size,
                           const std::string& material) {
  lum.assign(alpha.size(), 1.f);
  if (material != "shiny") return;
  double c = size / 2.0;
  double hx = c - size * 0.18, hy = c - size * 0.18;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (alpha[static_cast<size_t>(y) * size + x] <= 0.f) continue;
      double d = std::hypot(x + 0.5 - hx, y + 0.5 - hy) / size;
      lum[static_cast<size_t>(y) * size + x] = static_cast<float>(std::clamp(1.25 - d, 0.55, 1.25));
    }
}

inline Scene make_arrow2d_scene(Rng& rng, const GenConfig& cfg) {
  Scene scene;
  scene.image = ImageU8(cfg.image_size, cfg.image_size, 3);
  scene.spec.kind = DatasetKind::Arrow2d;
  scene.spec.image_size = cfg.image_size;

  int shared = 1 + static_cast<int>(rng.uniform_int(3));
  int unique;
  do {
    unique = 1 + static_cast<int>(rng.uniform_int(3));
  } while (unique == shared);
  std::string material = rng.bernoulli(0.5) ? "shiny" : "matte";

  int size = 26 + static_cast<int>(rng.uniform_int(5)) * 2;  // 26..34, even
  int margin = 3;

  // four disjoint sprite boxes anywhere on the canvas
  QuadRect full{0, 0, cfg.image_size, cfg.image_size};
  std::vector<std::vector<InkRect>> items(4, {InkRect{0, 0, size, size}});
  auto corners = detail::place_stamps(rng, full, size, margin, cfg.gap, items, 800);

  // sprite order: pair, pair, unique, arrow (arrow drawn last -> topmost)
  const int shapes[4] = {shared, shared, unique, kShapeArrow};
  const Role roles[4] = {Role::PairShape, Role::PairShape, Role::UniqueShape, Role::Arrow};

  double ucx = corners[2].first + size / 2.0, ucy = corners[2].second + size / 2.0;
  double acx = corners[3].first + size / 2.0, acy = corners[3].second + size / 2.0;
  double aim = std::atan2(ucy - acy, ucx - acx) * 180.0 / std::numbers::pi;
  double angle = aim + rng.uniform(-4.5, 4.5);

  for (int i = 0; i < 4; ++i) {
    auto alpha = rasterize_sprite(shapes[i], size, angle);
    std::vector<float> lum;
    shade_material(alpha, lum, size, material);
    auto color = arrow_palette()[rng.uniform_int(8)];
    // painter's order: later sprites overwrite earlier ones
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        float av = alpha[static_cast<size_t>(y) * size + x];
        if (av <= 0.f) continue;
        float lv = lum[static_cast<size_t>(y) * size + x];
        for (int k = 0; k < 3; ++k) {
          float v = std::min(255.f, static_cast<float>(color[static_cast<size_t>(k)]) * lv);
          scene.image.at(corners[static_cast<size_t>(i)].first + x,
                         corners[static_cast<size_t>(i)].second + y, k) =
              static_cast<uint8_t>(v + 0.5f);
        }
      }
    ObjectSpec o;
    o.cls = shapes[i];
    o.x0 = corners[static_cast<size_t>(i)].first;
    o.y0 = corners[static_cast<size_t>(i)].second;
    o.x1 = o.x0 + size;
    o.y1 = o.y0 + size;
    o.cx = o.x0 + size / 2.0;
    o.cy = o.y0 + size / 2.0;
    o.quadrant = quadrant_of_point(o.cx, o.cy, cfg.image_size);
    o.role = roles[i];
    o.material = material;
    o.color = color;
    if (i == 3) o.angle_deg = angle;
    scene.spec.objects.push_back(o);
  }
  return scene;
}

inline Scene make_mnist4_10_scene(const DigitBank& bank, Rng& rng, const GenConfig& cfg) {
  bool four = rng.bernoulli(0.5);
  Scene s = four ? make_mnist4_scene(bank, rng, cfg) : make_mnist10_scene(bank, rng, cfg);
  s.spec.kind = DatasetKind::Mnist4_10;
  return s;
}

inline Scene make_scene(DatasetKind kind, const DigitBank* bank, Rng& rng,
                        const GenConfig& cfg) {
  switch (kind) {
    case DatasetKind::Mnist4: return make_mnist4_scene(*bank, rng, cfg);
    case DatasetKind::Mnist10: return make_mnist10_scene(*bank, rng, cfg);
    case DatasetKind::Mnist4_10: return make_mnist4_10_scene(*bank, rng, cfg);
    case DatasetKind::Arrow2d: return make_arrow2d_scene(rng, cfg);
  }
  throw UnknownKind("invalid dataset kind");
}

// Deterministic per scene index: worker i uses stream fork(i) of the seed.
inline std::vector<Scene> generate_scenes(DatasetKind kind, const DigitBank* bank, int count,
                                          uint64_t seed, const GenConfig& cfg = {}) {
  if (count < 1) throw DomainError("scene count must be >= 1");
  if (kind != DatasetKind::Arrow2d) {
    if (!bank) throw DomainError("digit bank required for MNIST kinds");
    if (!bank->covers_all_classes())
      throw DomainError("digit bank must cover classes 0..9");
  }
  Rng root(seed);
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng = root.fork(static_cast<uint64_t>(i));
    scenes.push_back(make_scene(kind, bank, rng, cfg));
  }
  return scenes;
}

}  // namespace gnm::scenegen
