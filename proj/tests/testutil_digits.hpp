#pragma once

#include <array>
#include <vector>

#include "gnm/core/rng.hpp"
#include "gnm/scenegen/scene.hpp"

namespace gnm::testutil {

// Procedural seven-segment style digit glyphs: a deterministic stand-in
// for MNIST in tests. Strokes overlap at the corners, so every glyph is
// a single connected ink component.
inline std::vector<float> make_glyph(int digit, Rng& rng) {
  // segment layout on a 20x20 canvas: A top, G middle, D bottom,
  // F top-left, B top-right, E bottom-left, C bottom-right
  static const std::array<uint8_t, 10> seg = {{
      0b1111110,  // 0: ABCDEF
      0b0110000,  // 1: BC
      0b1101101,  // 2: ABGED
      0b1111001,  // 3: ABGCD
      0b0110011,  // 4: FGBC
      0b1011011,  // 5: AFGCD
      0b1011111,  // 6: AFGECD
      0b1110000,  // 7: ABC
      0b1111111,  // 8
      0b1111011,  // 9: ABCDFG
  }};
  const int W = 28, H = 28;
  std::vector<float> img(static_cast<size_t>(W) * H, 0.f);
  int x0 = 7 + static_cast<int>(rng.uniform_int(3)) - 1;
  int y0 = 4 + static_cast<int>(rng.uniform_int(3)) - 1;
  int gw = 12, gh = 18;
  int t = 2 + static_cast<int>(rng.uniform_int(2));  // stroke thickness 2..3
  auto hline = [&](int y, int xa, int xb) {
    for (int dy = 0; dy < t; ++dy)
      for (int x = xa; x <= xb; ++x) {
        int yy = y + dy - t / 2;
        if (yy >= 0 && yy < H && x >= 0 && x < W) img[static_cast<size_t>(yy) * W + x] = 1.f;
      }
  };
  auto vline = [&](int x, int ya, int yb) {
    for (int dx = 0; dx < t; ++dx)
      for (int y = ya; y <= yb; ++y) {
        int xx = x + dx - t / 2;
        if (xx >= 0 && xx < W && y >= 0 && y < H) img[static_cast<size_t>(y) * W + xx] = 1.f;
      }
  };
  uint8_t m = seg[static_cast<size_t>(digit)];
  int midy = y0 + gh / 2;
  if (m & 0b1000000) hline(y0, x0, x0 + gw);              // A
  if (m & 0b0100000) vline(x0 + gw, y0, midy);            // B
  if (m & 0b0010000) vline(x0 + gw, midy, y0 + gh);       // C
  if (m & 0b0001000) hline(y0 + gh, x0, x0 + gw);         // D
  if (m & 0b0000100) vline(x0, midy, y0 + gh);            // E
  if (m & 0b0000010) vline(x0, y0, midy);                 // F
  if (m & 0b0000001) hline(midy, x0, x0 + gw);            // G
  return img;
}

inline gnm::scenegen::DigitBank make_synthetic_bank(int per_class, uint64_t seed,
                                                    const std::string& split = "train") {
  gnm::scenegen::DigitBank bank;
  bank.width = 28;
  bank.height = 28;
  bank.split = split;
  Rng root(seed);
  for (int cls = 0; cls < 10; ++cls)
    for (int i = 0; i < per_class; ++i) {
      Rng rng = root.fork(static_cast<uint64_t>(cls * 100000 + i));
      bank.images.push_back(make_glyph(cls, rng));
      bank.labels.push_back(static_cast<uint8_t>(cls));
    }
  bank.index();
  return bank;
}

}  // namespace gnm::testutil
