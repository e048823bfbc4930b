// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// File formats crossing the CLI boundary: PFM for float grids (lossless,
// 32-bit), 8-bit grayscale PNG for masks and visualizations, JSON for
// structured data. All writers are byte-deterministic.

#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "multimask/camera.hpp"
#include "multimask/grid.hpp"
#include "multimask/losses.hpp"
#include "multimask/metrics.hpp"
#include "multimask/synth.hpp"

namespace multimask {

// ---------------------------------------------------------------------------
// PFM. Grayscale "Pf" only: dimensions, then a scale whose sign encodes the
// byte order (negative = little-endian), then rows stored bottom-to-top.

inline std::vector<std::uint8_t> encode_pfm(const Grid<float>& grid) {
  std::string header = "Pf\n" + std::to_string(grid.width()) + " " +
                       std::to_string(grid.height()) + "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + grid.size() * 4);
  for (int j = grid.height() - 1; j >= 0; --j) {
    for (int i = 0; i < grid.width(); ++i) {
      std::uint32_t bits;
      const float v = grid.at(i, j);
      std::memcpy(&bits, &v, 4);
      out.push_back(static_cast<std::uint8_t>(bits));
      out.push_back(static_cast<std::uint8_t>(bits >> 8));
      out.push_back(static_cast<std::uint8_t>(bits >> 16));
      out.push_back(static_cast<std::uint8_t>(bits >> 24));
    }
  }
  return out;
}

inline Grid<float> decode_pfm(const std::uint8_t* data, std::size_t size) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < size && std::isspace(data[pos])) ++pos;
    std::string token;
    while (pos < size && !std::isspace(data[pos])) {
      token.push_back(static_cast<char>(data[pos++]));
    }
    if (token.empty()) throw std::runtime_error("pfm: truncated header");
    return token;
  };
  if (next_token() != "Pf") {
    throw std::runtime_error("pfm: expected grayscale magic 'Pf'");
  }
  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    scale = std::stod(next_token());
  } catch (const std::exception&) {
    throw std::runtime_error("pfm: malformed header fields");
  }
  if (width <= 0 || height <= 0 || scale == 0.0) {
    throw std::runtime_error("pfm: invalid dimensions or scale");
  }
  ++pos;  // single whitespace after the scale line
  const bool little_endian = scale < 0.0;
  const std::size_t need = static_cast<std::size_t>(width) * height * 4;
  if (size - pos < need) throw std::runtime_error("pfm: truncated payload");
  Grid<float> grid(width, height, 0.0f);
  for (int j = height - 1; j >= 0; --j) {
    for (int i = 0; i < width; ++i) {
      std::uint32_t bits;
      if (little_endian) {
        bits = static_cast<std::uint32_t>(data[pos]) |
               static_cast<std::uint32_t>(data[pos + 1]) << 8 |
               static_cast<std::uint32_t>(data[pos + 2]) << 16 |
               static_cast<std::uint32_t>(data[pos + 3]) << 24;
      } else {
        bits = static_cast<std::uint32_t>(data[pos + 3]) |
               static_cast<std::uint32_t>(data[pos + 2]) << 8 |
               static_cast<std::uint32_t>(data[pos + 1]) << 16 |
               static_cast<std::uint32_t>(data[pos]) << 24;
      }
      pos += 4;
      float v;
      std::memcpy(&v, &bits, 4);
      grid.at(i, j) = v;
    }
  }
  return grid;
}

inline Grid<float> decode_pfm(const std::vector<std::uint8_t>& bytes) {
  return decode_pfm(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// PNG, 8-bit grayscale, zlib-compressed at a fixed level.

namespace detail {

inline void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                       const std::vector<std::uint8_t>& payload) {
  push_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc =
      crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + payload.size()));
  push_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png_gray(const Grid<std::uint8_t>& img) {
  static const std::uint8_t signature[8] = {0x89, 0x50, 0x4E, 0x47,
                                            0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<std::uint8_t> out(signature, signature + 8);

  std::vector<std::uint8_t> ihdr;
  detail::push_u32_be(ihdr, static_cast<std::uint32_t>(img.width()));
  detail::push_u32_be(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  detail::push_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height()) * (img.width() + 1));
  for (int j = 0; j < img.height(); ++j) {
    raw.push_back(0);  // per-scanline filter: none
    for (int i = 0; i < img.width(); ++i) raw.push_back(img.at(i, j));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("png: deflate failed");
  }
  compressed.resize(bound);
  detail::push_chunk(out, "IDAT", compressed);
  detail::push_chunk(out, "IEND", {});
  return out;
}

// ---------------------------------------------------------------------------
// Grid conversions.

inline Grid<float> to_float_grid(const Grid<double>& g) {
  Grid<float> out(g.width(), g.height(), 0.0f);
  for (std::size_t k = 0; k < g.size(); ++k) {
    out[k] = static_cast<float>(g[k]);
  }
  return out;
}

inline Grid<float> image_to_float_grid(const ImageBuffer& img) {
  if (img.channels() != 1) {
    throw std::invalid_argument("image_to_float_grid: expected grayscale");
  }
  Grid<float> out(img.width(), img.height(), 0.0f);
  for (int j = 0; j < img.height(); ++j) {
    for (int i = 0; i < img.width(); ++i) {
      out.at(i, j) = static_cast<float>(img.at(i, j));
    }
  }
  return out;
}

inline ImageBuffer image_from_float_grid(const Grid<float>& g) {
  ImageBuffer img(g.width(), g.height(), 1);
  for (int j = 0; j < g.height(); ++j) {
    for (int i = 0; i < g.width(); ++i) {
      const float v = g.at(i, j);
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw std::runtime_error("image: values must lie in [0,1]");
      }
      img.at(i, j) = v;
    }
  }
  return img;
}

inline DepthMap depth_from_float_grid(const Grid<float>& g) {
  Grid<double> out(g.width(), g.height(), 1.0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    out[k] = static_cast<double>(g[k]);
  }
  return DepthMap(std::move(out));
}

inline Grid<std::uint8_t> mask_to_gray(const Mask& m) {
  Grid<std::uint8_t> out(m.width(), m.height(), 0);
  for (int j = 0; j < m.height(); ++j) {
    for (int i = 0; i < m.width(); ++i) {
      out.at(i, j) = m.at(i, j) ? 255 : 0;
    }
  }
  return out;
}

inline Grid<std::uint8_t> image_to_gray(const ImageBuffer& img) {
  Grid<std::uint8_t> out(img.width(), img.height(), 0);
  for (int j = 0; j < img.height(); ++j) {
    for (int i = 0; i < img.width(); ++i) {
      double v = 0.0;
      for (int c = 0; c < img.channels(); ++c) v += img.at(i, j, c);
      v /= img.channels();
      out.at(i, j) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

/// Visible-in-both 255, occluded 128, out of view 0.
inline Grid<std::uint8_t> labels_to_gray(const VisibilityLabels& labels) {
  Grid<std::uint8_t> out(labels.width(), labels.height(), 0);
  for (int j = 0; j < labels.height(); ++j) {
    for (int i = 0; i < labels.width(); ++i) {
      switch (labels.at(i, j)) {
        case Visibility::kVisibleBoth: out.at(i, j) = 255; break;
        case Visibility::kOccludedInOther: out.at(i, j) = 128; break;
        case Visibility::kOutOfViewInOther: out.at(i, j) = 0; break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON.

inline nlohmann::json intrinsics_to_json(const Intrinsics& intr) {
  return nlohmann::json{{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx},
                        {"cy", intr.cy}, {"width", intr.width},
                        {"height", intr.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  return Intrinsics(j.at("fx").get<double>(), j.at("fy").get<double>(),
                    j.at("cx").get<double>(), j.at("cy").get<double>(),
                    j.at("width").get<int>(), j.at("height").get<int>());
}

inline nlohmann::json pose_to_json(const PoseSE3& pose) {
  const Eigen::Matrix4d m = pose.matrix();
  std::vector<double> t(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) t[static_cast<std::size_t>(r) * 4 + c] = m(r, c);
  }
  return nlohmann::json{{"T", t}};
}

inline PoseSE3 pose_from_json(const nlohmann::json& j) {
  const auto t = j.at("T").get<std::vector<double>>();
  if (t.size() != 16) {
    throw std::runtime_error("pose: \"T\" must hold 16 row-major values");
  }
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = t[static_cast<std::size_t>(r) * 4 + c];
  }
  return PoseSE3::from_matrix(m);
}

inline nlohmann::json poses_to_json(const std::vector<PoseSE3>& poses) {
  nlohmann::json arr = nlohmann::json::array();
  for (const PoseSE3& p : poses) arr.push_back(pose_to_json(p).at("T"));
  return nlohmann::json{{"poses", arr}};
}

inline std::vector<PoseSE3> poses_from_json(const nlohmann::json& j) {
  std::vector<PoseSE3> out;
  for (const nlohmann::json& t : j.at("poses")) {
    out.push_back(pose_from_json(nlohmann::json{{"T", t}}));
  }
  return out;
}

inline nlohmann::json loss_report_to_json(const LossReport& r) {
  return nlohmann::json{
      {"rec", r.rec},
      {"ssim", r.ssim},
      {"smooth", r.smooth},
      {"total", r.total},
      {"valid_counts",
       nlohmann::json{{"t", r.valid_count_t}, {"tm1", r.valid_count_tm1}}}};
}

inline nlohmann::json depth_metrics_to_json(const DepthMetrics& m) {
  return nlohmann::json{{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel},
                        {"rmse", m.rmse},       {"rmse_log", m.rmse_log},
                        {"delta1", m.delta1},   {"delta2", m.delta2},
                        {"delta3", m.delta3}};
}

inline nlohmann::json ate_stats_to_json(const AteStats& s) {
  return nlohmann::json{{"mean", s.mean}, {"stddev", s.stddev}};
}

// ---------------------------------------------------------------------------
// Files.

inline void write_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void save_pfm(const std::filesystem::path& path, const Grid<float>& g) {
  write_file(path, encode_pfm(g));
}

inline Grid<float> load_pfm(const std::filesystem::path& path) {
  return decode_pfm(read_file(path));
}

inline void save_png_gray(const std::filesystem::path& path,
                          const Grid<std::uint8_t>& img) {
  write_file(path, encode_png_gray(img));
}

inline void save_json(const std::filesystem::path& path,
                      const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline nlohmann::json load_json(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return nlohmann::json::parse(bytes.begin(), bytes.end());
}

}  // namespace multimask
