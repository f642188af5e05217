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

// In-memory PNG (libpng simplified API) and baseline JPEG (libjpeg) coding
// for 8-bit grayscale and RGB images.

#ifndef PPML_AUDIT_IMAGE_CODEC_HPP_
#define PPML_AUDIT_IMAGE_CODEC_HPP_

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "ppml_audit/error.hpp"

namespace ppml_audit::codec {

inline constexpr int kJpegQuality = 75;

struct DecodedImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;
};

namespace detail {

inline void CheckChannels(std::size_t channels) {
  Require(channels == 1 || channels == 3, ErrorCode::kCodec,
          "only 1- or 3-channel images are supported");
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

extern "C" inline void JpegErrorExit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

extern "C" inline void JpegSilentMessage(j_common_ptr) {}

}  // namespace detail

inline std::vector<std::uint8_t> EncodePng(std::span<const std::uint8_t> pixels,
                                           std::size_t height, std::size_t width,
                                           std::size_t channels) {
  detail::CheckChannels(channels);
  Require(pixels.size() == height * width * channels && height > 0 && width > 0,
          ErrorCode::kCodec, "pixel buffer does not match image dimensions");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw Error(ErrorCode::kCodec, std::string("png size query failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0,
                                 nullptr))
    throw Error(ErrorCode::kCodec, std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

inline DecodedImage DecodePng(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw Error(ErrorCode::kCodec, std::string("png decode failed: ") + image.message);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  DecodedImage out;
  out.height = image.height;
  out.width = image.width;
  out.channels = gray ? 1 : 3;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  // Alpha is composited onto black.
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&image, &black, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::kCodec, std::string("png decode failed: ") + image.message);
  }
  return out;
}

inline std::vector<std::uint8_t> EncodeJpeg(std::span<const std::uint8_t> pixels,
                                            std::size_t height, std::size_t width,
                                            std::size_t channels,
                                            int quality = kJpegQuality) {
  detail::CheckChannels(channels);
  Require(pixels.size() == height * width * channels && height > 0 && width > 0,
          ErrorCode::kCodec, "pixel buffer does not match image dimensions");
  jpeg_compress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::JpegErrorExit;
  err.base.output_message = detail::JpegSilentMessage;
  unsigned char* volatile buffer = nullptr;
  unsigned long volatile size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(ErrorCode::kCodec, std::string("jpeg encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  unsigned char* out_buf = nullptr;
  unsigned long out_size = 0;
  jpeg_mem_dest(&cinfo, &out_buf, &out_size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = static_cast<int>(channels);
  cinfo.in_color_space = channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = width * channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(pixels.data() + cinfo.next_scanline * stride);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  buffer = out_buf;
  size = out_size;
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

inline DecodedImage DecodeJpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  detail::JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::JpegErrorExit;
  err.base.output_message = detail::JpegSilentMessage;
  DecodedImage out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::kCodec, std::string("jpeg decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.height = cinfo.output_height;
  out.width = cinfo.output_width;
  out.channels = static_cast<std::size_t>(cinfo.output_components);
  out.pixels.resize(out.height * out.width * out.channels);
  const std::size_t stride = out.width * out.channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

// Dispatches on the file signature.
inline DecodedImage DecodeImage(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return DecodePng(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF)
    return DecodeJpeg(bytes);
  throw Error(ErrorCode::kCodec, "unrecognized image encoding");
}

}  // namespace ppml_audit::codec

#endif  // PPML_AUDIT_IMAGE_CODEC_HPP_
