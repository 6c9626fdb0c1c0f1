#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gnm/core/error.hpp"
#include "gnm/core/tensor.hpp"

namespace gnm {

// Minimal self-describing binary container: magic, format version, then
// typed (name, payload) records. Used for checkpoints and classifier
// artifacts. Loads of a different format version fail loudly.
class BlobWriter {
 public:
  explicit BlobWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for write: " + path);
    out_.write(kMagic, 8);
    write_u64(kFormatVersion);
  }

  void put_u64(const std::string& name, uint64_t v) {
    record(name, 'U');
    write_u64(v);
  }

  void put_i64(const std::string& name, int64_t v) { put_u64(name, static_cast<uint64_t>(v)); }

  void put_string(const std::string& name, const std::string& s) {
    record(name, 'S');
    write_u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <class T>
  void put_tensor(const std::string& name, const Tensor<T>& t) {
    record(name, 'T');
    out_.put(sizeof(T) == 4 ? '4' : '8');
    write_u64(static_cast<uint64_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_u64(static_cast<uint64_t>(t.dim(i)));
    out_.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(t.size())));
  }

  void finish() {
    record("", 'E');
    out_.flush();
    if (!out_) throw IoError("write failure while closing blob");
  }

  static constexpr const char* kMagic = "GNMBLOB1";
  static constexpr uint64_t kFormatVersion = 1;

 private:
  void record(const std::string& name, char kind) {
    write_u64(name.size());
    out_.write(name.data(), static_cast<std::streamsize>(name.size()));
    out_.put(kind);
  }

  void write_u64(uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, 8);
  }

  std::ofstream out_;
};

class BlobReader {
 public:
  explicit BlobReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for read: " + path);
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::string(magic, 8) != BlobWriter::kMagic)
      throw SchemaVersionMismatch("not a blob container: " + path);
    uint64_t version = read_u64(in);
    if (version != BlobWriter::kFormatVersion)
      throw SchemaVersionMismatch("blob format version " + std::to_string(version) +
                                  " unsupported");
    while (true) {
      uint64_t nlen = read_u64(in);
      std::string name(nlen, '\0');
      in.read(name.data(), static_cast<std::streamsize>(nlen));
      char kind = 0;
      in.get(kind);
      if (!in) throw Truncated("blob record truncated in " + path);
      if (kind == 'E') break;
      if (kind == 'U') {
        u64s_[name] = read_u64(in);
      } else if (kind == 'S') {
        uint64_t slen = read_u64(in);
        std::string s(slen, '\0');
        in.read(s.data(), static_cast<std::streamsize>(slen));
        strings_[name] = std::move(s);
      } else if (kind == 'T') {
        char dt = 0;
        in.get(dt);
        uint64_t nd = read_u64(in);
        Shape shape(nd);
        for (auto& d : shape) d = static_cast<int>(read_u64(in));
        RawTensor rt;
        rt.shape = shape;
        rt.is_double = dt == '8';
        size_t bytes = static_cast<size_t>(shape_numel(shape)) * (rt.is_double ? 8 : 4);
        rt.bytes.resize(bytes);
        in.read(reinterpret_cast<char*>(rt.bytes.data()), static_cast<std::streamsize>(bytes));
        tensors_[name] = std::move(rt);
      } else {
        throw SchemaVersionMismatch("unknown blob record kind");
      }
      if (!in) throw Truncated("blob record truncated in " + path);
    }
  }

  bool has_u64(const std::string& name) const { return u64s_.count(name) > 0; }
  bool has_string(const std::string& name) const { return strings_.count(name) > 0; }
  bool has_tensor(const std::string& name) const { return tensors_.count(name) > 0; }

  uint64_t get_u64(const std::string& name) const {
    auto it = u64s_.find(name);
    if (it == u64s_.end()) throw SchemaVersionMismatch("missing u64 record: " + name);
    return it->second;
  }

  const std::string& get_string(const std::string& name) const {
    auto it = strings_.find(name);
    if (it == strings_.end()) throw SchemaVersionMismatch("missing string record: " + name);
    return it->second;
  }

  template <class T>
  Tensor<T> get_tensor(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw SchemaVersionMismatch("missing tensor record: " + name);
    const RawTensor& rt = it->second;
    bool want_double = sizeof(T) == 8;
    if (rt.is_double != want_double)
      throw SchemaVersionMismatch("tensor dtype mismatch for " + name);
    Tensor<T> t(rt.shape);
    std::memcpy(t.data(), rt.bytes.data(), rt.bytes.size());
    return t;
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> names;
    for (auto& [k, v] : tensors_) names.push_back(k);
    return names;
  }

 private:
  struct RawTensor {
    Shape shape;
    bool is_double = false;
    std::vector<uint8_t> bytes;
  };

  static uint64_t read_u64(std::ifstream& in) {
    char buf[8];
    in.read(buf, 8);
    if (in.gcount() != 8) throw Truncated("blob u64 truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[i])) << (8 * i);
    return v;
  }

  std::map<std::string, uint64_t> u64s_;
  std::map<std::string, std::string> strings_;
  std::map<std::string, RawTensor> tensors_;
};

}  // namespace gnm
