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

// Dataset ingestion and the canonical binary container.
//
// Container layout (all integers little-endian):
//   "PPMLDSET"            8-byte magic
//   u32 version           currently 1
//   u32 num_classes, then per class: u32 byte length + UTF-8 name
//   train split, then test split, each:
//     u64 count, u32 height, u32 width, u32 channels
//     count * height * width * channels raw pixel bytes (H, W, C order)
//     count * u32 labels

#ifndef PPML_AUDIT_DATASET_IO_HPP_
#define PPML_AUDIT_DATASET_IO_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppml_audit/binary_io.hpp"
#include "ppml_audit/dataset.hpp"
#include "ppml_audit/error.hpp"
#include "ppml_audit/image_codec.hpp"

namespace ppml_audit::data {

inline constexpr std::string_view kDatasetMagic = "PPMLDSET";
inline constexpr std::uint32_t kDatasetVersion = 1;

// ---------------------------------------------------------------------------
// IDX (big-endian, MNIST family)

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

// Parses an unsigned-byte IDX file (type code 0x08).
inline IdxArray ParseIdx(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const std::uint32_t magic = r.U32BigEndian("IDX magic");
  if ((magic >> 16) != 0)
    throw FormatError("IDX magic must start with two zero bytes", 0);
  const std::uint32_t type = (magic >> 8) & 0xff;
  if (type != 0x08) throw FormatError("only unsigned-byte IDX data is supported", 2);
  const std::uint32_t rank = magic & 0xff;
  if (rank == 0) throw FormatError("IDX rank must be >= 1", 3);
  IdxArray out;
  std::uint64_t count = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    out.dims.push_back(r.U32BigEndian("IDX dimension"));
    count *= out.dims.back();
  }
  auto body = r.Bytes(static_cast<std::size_t>(count), "IDX data");
  out.values.assign(body.begin(), body.end());
  if (!r.AtEnd()) throw FormatError("trailing bytes after IDX data", r.offset());
  return out;
}

inline IdxArray ReadIdx(const std::filesystem::path& path) {
  return ParseIdx(io::ReadFileBytes(path));
}

// Images from an idx3 file (N, rows, cols) as grayscale, labels from idx1.
inline ImageSplit IdxSplit(const IdxArray& images, const IdxArray& labels) {
  if (images.dims.size() != 3 && images.dims.size() != 4)
    throw FormatError("image IDX must have rank 3 or 4", 3);
  if (labels.dims.size() != 1) throw FormatError("label IDX must have rank 1", 3);
  if (labels.dims[0] != images.dims[0])
    throw FormatError("image and label counts differ", 4);
  ImageSplit s;
  s.height = images.dims[1];
  s.width = images.dims[2];
  s.channels = images.dims.size() == 4 ? images.dims[3] : 1;
  s.pixels = images.values;
  s.labels.assign(labels.values.begin(), labels.values.end());
  return s;
}

// Loads the four standard MNIST-family files from a directory:
// train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte,
// t10k-labels-idx1-ubyte. Class names are the decimal label values.
inline ImageDataset LoadIdx(const std::filesystem::path& dir) {
  auto file = [&](std::string_view stem) {
    for (const char* suffix : {"-ubyte", ".idx"}) {
      std::filesystem::path p = dir / (std::string(stem) + suffix);
      if (std::filesystem::exists(p)) return p;
    }
    throw Error(ErrorCode::kIo, "missing " + std::string(stem) + "-ubyte in " +
                                    dir.string());
  };
  ImageDataset ds;
  ds.train = IdxSplit(ReadIdx(file("train-images-idx3")), ReadIdx(file("train-labels-idx1")));
  ds.test = IdxSplit(ReadIdx(file("t10k-images-idx3")), ReadIdx(file("t10k-labels-idx1")));
  std::uint32_t max_label = 0;
  for (const ImageSplit* s : {&ds.train, &ds.test})
    for (std::uint32_t y : s->labels) max_label = std::max(max_label, y);
  for (std::uint32_t k = 0; k <= max_label; ++k) ds.class_names.push_back(std::to_string(k));
  ds.Validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Directory of PNG/JPEG files

namespace detail {

inline bool IsImageFile(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<std::filesystem::path> SortedEntries(const std::filesystem::path& dir,
                                                        bool directories) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (directories ? e.is_directory() : (e.is_regular_file() && IsImageFile(e.path())))
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void LoadClassDirs(const std::filesystem::path& root,
                          const std::vector<std::string>& class_names, ImageSplit& split) {
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    const std::filesystem::path dir = root / class_names[k];
    if (!std::filesystem::is_directory(dir)) continue;
    for (const auto& file : SortedEntries(dir, false)) {
      const codec::DecodedImage img = codec::DecodeImage(io::ReadFileBytes(file));
      if (split.empty() && split.height == 0) {
        split.height = img.height;
        split.width = img.width;
        split.channels = img.channels;
      }
      if (img.height != split.height || img.width != split.width ||
          img.channels != split.channels)
        throw Error(ErrorCode::kFormat, file.string() + " has different dimensions "
                                        "from the rest of its split");
      split.Append(img.pixels, static_cast<std::uint32_t>(k));
    }
  }
}

}  // namespace detail

// Reads root/<class>/<image> (all train) or root/{train,test}/<class>/<image>.
// Labels follow the lexicographic order of class directory names.
inline ImageDataset LoadImageDir(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw Error(ErrorCode::kIo, root.string() + " is not a directory");
  const bool has_splits = std::filesystem::is_directory(root / "train");
  ImageDataset ds;
  const std::filesystem::path train_root = has_splits ? root / "train" : root;
  std::vector<std::string> names;
  for (const auto& d : detail::SortedEntries(train_root, true))
    names.push_back(d.filename().string());
  if (has_splits && std::filesystem::is_directory(root / "test")) {
    for (const auto& d : detail::SortedEntries(root / "test", true))
      names.push_back(d.filename().string());
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  Require(!names.empty(), ErrorCode::kInput, "no class directories under " + root.string());
  ds.class_names = names;
  detail::LoadClassDirs(train_root, names, ds.train);
  if (has_splits && std::filesystem::is_directory(root / "test"))
    detail::LoadClassDirs(root / "test", names, ds.test);
  if (ds.test.height == 0) {
    ds.test.height = ds.train.height;
    ds.test.width = ds.train.width;
    ds.test.channels = ds.train.channels;
  }
  ds.Validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Canonical container

inline std::vector<std::uint8_t> SerializeDataset(const ImageDataset& ds) {
  ds.Validate();
  io::ByteWriter w;
  w.Tag(kDatasetMagic);
  w.U32(kDatasetVersion);
  w.U32(static_cast<std::uint32_t>(ds.class_names.size()));
  for (const auto& name : ds.class_names) w.String(name);
  for (const ImageSplit* s : {&ds.train, &ds.test}) {
    w.U64(s->size());
    w.U32(static_cast<std::uint32_t>(s->height));
    w.U32(static_cast<std::uint32_t>(s->width));
    w.U32(static_cast<std::uint32_t>(s->channels));
    w.Bytes(s->pixels);
    for (std::uint32_t y : s->labels) w.U32(y);
  }
  return w.Take();
}

inline ImageDataset DeserializeDataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.Expect(kDatasetMagic, "dataset container");
  const std::size_t version_at = r.offset();
  if (r.U32("version") != kDatasetVersion)
    throw FormatError("unsupported dataset container version", version_at);
  ImageDataset ds;
  const std::uint32_t classes = r.U32("class count");
  for (std::uint32_t k = 0; k < classes; ++k) ds.class_names.push_back(r.String("class name"));
  for (ImageSplit* s : {&ds.train, &ds.test}) {
    const std::uint64_t count = r.U64("split size");
    s->height = r.U32("height");
    s->width = r.U32("width");
    s->channels = r.U32("channels");
    const std::uint64_t nbytes = count * s->height * s->width * s->channels;
    if (nbytes > r.remaining())
      throw FormatError("truncated input while reading pixels", r.offset());
    auto px = r.Bytes(static_cast<std::size_t>(nbytes), "pixels");
    s->pixels.assign(px.begin(), px.end());
    s->labels.resize(count);
    for (auto& y : s->labels) {
      const std::size_t at = r.offset();
      y = r.U32("label");
      if (y >= classes) throw FormatError("label out of range", at);
    }
  }
  if (!r.AtEnd()) throw FormatError("trailing bytes after dataset", r.offset());
  return ds;
}

inline void SaveDataset(const ImageDataset& ds, const std::filesystem::path& path) {
  io::WriteFileBytes(path, SerializeDataset(ds));
}

inline ImageDataset LoadDataset(const std::filesystem::path& path) {
  return DeserializeDataset(io::ReadFileBytes(path));
}

}  // namespace ppml_audit::data

#endif  // PPML_AUDIT_DATASET_IO_HPP_
