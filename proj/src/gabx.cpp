// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/gabx.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "boxgan/errors.hpp"

namespace boxgan::ad {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("GABX: truncated container");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_gabx(const TensorBundle& bundle) {
  std::string out = "GABX";
  put_u32(out, kGabxVersion);
  put_u32(out, static_cast<std::uint32_t>(bundle.size()));
  for (const auto& [name, tensor] : bundle) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (Index e : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float f : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

TensorBundle decode_gabx(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != "GABX") throw DataError("GABX: bad magic");
  const std::uint32_t version = in.u32();
  if (version != kGabxVersion) {
    throw DataError("GABX: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  TensorBundle bundle;
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    const std::uint32_t name_len = in.u32();
    nt.name = std::string(in.take(name_len));
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    std::uint64_t count_values = 1;
    for (auto& e : shape) {
      e = in.u32();
      count_values *= static_cast<std::uint64_t>(e);
      // Checked per extent so corrupt headers cannot overflow or over-allocate.
      if (count_values > in.remaining() / 4) throw DataError("GABX: truncated container");
    }
    std::vector<float> values(static_cast<std::size_t>(count_values));
    for (auto& v : values) v = std::bit_cast<float>(in.u32());
    nt.tensor = Tensor<float>(std::move(shape), std::move(values));
    bundle.push_back(std::move(nt));
  }
  if (!in.done()) throw DataError("GABX: trailing bytes after last tensor");
  return bundle;
}

void write_gabx(const std::filesystem::path& path, const TensorBundle& bundle) {
  const std::string bytes = encode_gabx(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

TensorBundle read_gabx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_gabx(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

const Tensor<float>* find_tensor(const TensorBundle& bundle, std::string_view name) {
  for (const auto& nt : bundle) {
    if (nt.name == name) return &nt.tensor;
  }
  return nullptr;
}

}  // namespace boxgan::ad
