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

// Model checkpoint container (little-endian):
//   "PPMLCKPT"   8-byte magic
//   u32 version  currently 1
//   u64 conv_channels[3], kernel_size, groupnorm_groups, hidden_units,
//       num_classes, input_shape[3]
//   u32 tensor count, then per tensor in forward order:
//     u32 name length + name, u32 rank, u64 dims[rank], f64 values
// The tensor list is checked against the layout implied by the config.

#ifndef PPML_AUDIT_CHECKPOINT_HPP_
#define PPML_AUDIT_CHECKPOINT_HPP_

#include <filesystem>
#include <string_view>
#include <vector>

#include "ppml_audit/binary_io.hpp"
#include "ppml_audit/nn.hpp"

namespace ppml_audit::nn {

inline constexpr std::string_view kCheckpointMagic = "PPMLCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> SerializeParams(const ModelParams& params) {
  const ParamLayout layout = params.layout();
  io::ByteWriter w;
  w.Tag(kCheckpointMagic);
  w.U32(kCheckpointVersion);
  const ModelConfig& c = params.config;
  for (std::size_t ch : c.conv_channels) w.U64(ch);
  w.U64(c.kernel_size);
  w.U64(c.groupnorm_groups);
  w.U64(c.hidden_units);
  w.U64(c.num_classes);
  for (std::size_t d : c.input_shape) w.U64(d);
  w.U32(static_cast<std::uint32_t>(layout.entries().size()));
  for (const ParamEntry& e : layout.entries()) {
    w.String(e.name);
    w.U32(static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.U64(d);
    for (double v : params.Slice(e)) w.F64(v);
  }
  return w.Take();
}

inline ModelParams DeserializeParams(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.Expect(kCheckpointMagic, "checkpoint");
  const std::size_t version_at = r.offset();
  if (r.U32("version") != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version", version_at);
  ModelConfig c;
  for (auto& ch : c.conv_channels) ch = r.U64("conv channels");
  c.kernel_size = r.U64("kernel size");
  c.groupnorm_groups = r.U64("group count");
  c.hidden_units = r.U64("hidden units");
  c.num_classes = r.U64("class count");
  for (auto& d : c.input_shape) d = r.U64("input shape");
  const std::size_t config_end = r.offset();
  try {
    c.Validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid model config: ") + e.what(), config_end);
  }
  const ParamLayout layout(c);
  ModelParams params{c, std::vector<double>(layout.total_size())};
  const std::size_t count_at = r.offset();
  if (r.U32("tensor count") != layout.entries().size())
    throw FormatError("tensor count does not match the model config", count_at);
  for (const ParamEntry& e : layout.entries()) {
    const std::size_t at = r.offset();
    if (r.String("tensor name") != e.name)
      throw FormatError("expected tensor " + e.name, at);
    const std::uint32_t rank = r.U32("tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.U64("tensor dim");
    if (shape != e.shape)
      throw FormatError("shape mismatch for " + e.name, at);
    for (double& v : params.Slice(e)) v = r.F64("tensor values");
  }
  if (!r.AtEnd()) throw FormatError("trailing bytes after checkpoint", r.offset());
  return params;
}

inline void SaveParams(const ModelParams& params, const std::filesystem::path& path) {
  io::WriteFileBytes(path, SerializeParams(params));
}

inline ModelParams LoadParams(const std::filesystem::path& path) {
  return DeserializeParams(io::ReadFileBytes(path));
}

}  // namespace ppml_audit::nn

#endif  // PPML_AUDIT_CHECKPOINT_HPP_
