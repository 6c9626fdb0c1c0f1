#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gnm/core/error.hpp"
#include "gnm/scenegen/scene.hpp"

namespace gnm::scenegen {

namespace detail {

inline uint32_t read_be32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw Truncated("unexpected end of IDX header: " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace detail

// Standard big-endian IDX pair (magic 2051 for images, 2049 for labels).
// Bytes are scaled to [0,1].
inline DigitBank load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                                const std::string& split = "train") {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw IoError("cannot open IDX image file: " + images_path);
  uint32_t magic = detail::read_be32(fi, images_path);
  if (magic != 2051)
    throw BadMagic("bad IDX image magic " + std::to_string(magic) + " in " + images_path);
  uint32_t n = detail::read_be32(fi, images_path);
  uint32_t rows = detail::read_be32(fi, images_path);
  uint32_t cols = detail::read_be32(fi, images_path);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw IoError("cannot open IDX label file: " + labels_path);
  uint32_t lmagic = detail::read_be32(fl, labels_path);
  if (lmagic != 2049)
    throw BadMagic("bad IDX label magic " + std::to_string(lmagic) + " in " + labels_path);
  uint32_t ln = detail::read_be32(fl, labels_path);
  if (ln != n)
    throw CountMismatch("IDX image count " + std::to_string(n) + " != label count " +
                        std::to_string(ln));

  DigitBank bank;
  bank.width = static_cast<int>(cols);
  bank.height = static_cast<int>(rows);
  bank.split = split;
  bank.images.resize(n);
  bank.labels.resize(n);

  size_t pix = static_cast<size_t>(rows) * cols;
  std::vector<unsigned char> buf(pix);
  for (uint32_t i = 0; i < n; ++i) {
    fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
    if (static_cast<size_t>(fi.gcount()) != pix)
      throw Truncated("IDX image payload shorter than header declares: " + images_path);
    auto& img = bank.images[i];
    img.resize(pix);
    for (size_t p = 0; p < pix; ++p) img[p] = static_cast<float>(buf[p]) / 255.0f;
  }
  fl.read(reinterpret_cast<char*>(bank.labels.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(fl.gcount()) != n)
    throw Truncated("IDX label payload shorter than header declares: " + labels_path);

  bank.index();
  return bank;
}

// Writer used by tests and tooling to build small IDX fixtures.
inline void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                           const DigitBank& bank) {
  auto be32 = [](std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) throw IoError("cannot open for write: " + images_path);
  be32(fi, 2051);
  be32(fi, static_cast<uint32_t>(bank.images.size()));
  be32(fi, static_cast<uint32_t>(bank.height));
  be32(fi, static_cast<uint32_t>(bank.width));
  for (const auto& img : bank.images)
    for (float v : img) fi.put(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) throw IoError("cannot open for write: " + labels_path);
  be32(fl, 2049);
  be32(fl, static_cast<uint32_t>(bank.labels.size()));
  for (uint8_t l : bank.labels) fl.put(static_cast<char>(l));
}

}  // namespace gnm::scenegen
