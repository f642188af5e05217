// Copyright 2026 The ppml-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PPML_AUDIT_BINARY_IO_HPP_
#define PPML_AUDIT_BINARY_IO_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppml_audit/error.hpp"

namespace ppml_audit::io {

inline std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

inline void WriteFileBytes(const std::filesystem::path& path,
                           std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

inline void WriteFileText(const std::filesystem::path& path, std::string_view text) {
  WriteFileBytes(path, std::span<const std::uint8_t>(
                           reinterpret_cast<const std::uint8_t*>(text.data()),
                           text.size()));
}

// Little-endian writer.
class ByteWriter {
 public:
  void Bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void Tag(std::string_view magic) {
    buf_.insert(buf_.end(), magic.begin(), magic.end());
  }
  void U32(std::uint32_t v) { Le(v, 4); }
  void U64(std::uint64_t v) { Le(v, 8); }
  void F64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    Le(bits, 8);
  }
  void String(std::string_view s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Tag(s);
  }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> Take() { return std::move(buf_); }

 private:
  void Le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader; failures report the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool AtEnd() const { return pos_ == data_.size(); }

  void Expect(std::string_view magic, std::string_view what) {
    Need(magic.size(), what);
    if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0)
      throw FormatError("bad magic for " + std::string(what), pos_);
    pos_ += magic.size();
  }
  std::span<const std::uint8_t> Bytes(std::size_t n, std::string_view what) {
    Need(n, what);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t U32(std::string_view what) { return static_cast<std::uint32_t>(Le(4, what)); }
  std::uint64_t U64(std::string_view what) { return Le(8, what); }
  std::uint32_t U32BigEndian(std::string_view what) {
    Need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  double F64(std::string_view what) {
    const std::uint64_t bits = Le(8, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string String(std::string_view what) {
    const std::uint32_t n = U32(what);
    auto b = Bytes(n, what);
    return std::string(b.begin(), b.end());
  }

 private:
  void Need(std::size_t n, std::string_view what) {
    if (remaining() < n)
      throw FormatError("truncated input while reading " + std::string(what), pos_);
  }
  std::uint64_t Le(int n, std::string_view what) {
    Need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace ppml_audit::io

#endif  // PPML_AUDIT_BINARY_IO_HPP_
