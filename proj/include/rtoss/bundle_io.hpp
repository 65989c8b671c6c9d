#pragma once

// On-disk bundle container:
//
//   bytes 0..3   magic "RTOS"
//   byte  4      container format version (currently 1)
//   bytes 5..12  manifest byte length, uint64 little-endian
//   manifest     UTF-8 JSON: manifest_version + ordered layer list with
//                name/kind/dims/parents and per-tensor payload offsets
//   payload      concatenated raw little-endian IEEE-754 binary32 tensors,
//                offsets relative to payload start
//
// Loading then saving reproduces manifest content and weight bytes exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtoss/error.hpp"
#include "rtoss/model.hpp"

namespace rtoss {

namespace detail {

constexpr char kBundleMagic[4] = {'R', 'T', 'O', 'S'};
constexpr uint8_t kBundleFormatVersion = 1;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "weights are IEEE-754 binary32");

inline void append_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t read_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void floats_to_le_bytes(const std::vector<float>& values, std::string& out) {
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * 4);
  } else {
    for (float f : values) {
      auto u = std::bit_cast<uint32_t>(f);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
  }
}

inline std::vector<float> le_bytes_to_floats(const unsigned char* p, std::size_t count) {
  std::vector<float> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), p, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(p[i * 4 + b]) << (8 * b);
      values[i] = std::bit_cast<float>(u);
    }
  }
  return values;
}

inline std::string_view kind_name(LayerKind kind) {
  switch (kind) {
  case LayerKind::conv2d: return "conv2d";
  }
  return "conv2d";
}

inline LayerKind parse_kind(const std::string& s) {
  if (s == "conv2d") return LayerKind::conv2d;
  throw Error(ErrorKind::manifest_parse, "unknown layer kind '" + s + "'");
}

} // namespace detail

inline nlohmann::ordered_json bundle_manifest(const ModelBundle& bundle) {
  if (bundle.weights.size() != bundle.layers.size())
    throw Error(ErrorKind::inconsistent_inputs,
                "bundle layer and tensor counts differ");
  nlohmann::ordered_json manifest;
  manifest["manifest_version"] = bundle.manifest_version;
  auto layers = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (std::size_t i = 0; i < bundle.layers.size(); ++i) {
    const auto& layer = bundle.layers[i];
    nlohmann::ordered_json entry;
    entry["name"] = layer.name;
    entry["kind"] = detail::kind_name(layer.kind);
    entry["out_channels"] = layer.out_channels;
    entry["in_channels"] = layer.in_channels;
    entry["kernel_h"] = layer.kernel_h;
    entry["kernel_w"] = layer.kernel_w;
    entry["parents"] = layer.parents;
    uint64_t nbytes = bundle.weights[i].values.size() * 4;
    entry["offset"] = offset;
    entry["nbytes"] = nbytes;
    if (!layer.attrs.is_null()) entry["attrs"] = layer.attrs;
    offset += nbytes;
    layers.push_back(std::move(entry));
  }
  manifest["layers"] = std::move(layers);
  return manifest;
}

inline void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::string manifest = bundle_manifest(bundle).dump();

  std::string blob;
  blob.append(detail::kBundleMagic, 4);
  blob.push_back(static_cast<char>(detail::kBundleFormatVersion));
  detail::append_u64_le(blob, manifest.size());
  blob += manifest;
  for (const auto& tensor : bundle.weights)
    detail::floats_to_le_bytes(tensor.values, blob);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io_error, "cannot open '" + path.string() + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::io_error, "write to '" + path.string() + "' failed");
}

inline ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::io_error, "read from '" + path.string() + "' failed");

  if (blob.size() < 13 || std::memcmp(blob.data(), detail::kBundleMagic, 4) != 0)
    throw Error(ErrorKind::manifest_parse, "'" + path.string() + "' is not a bundle (bad magic)");
  if (blob[4] != detail::kBundleFormatVersion)
    throw Error(ErrorKind::manifest_parse,
                "unsupported container version " + std::to_string(blob[4]));
  uint64_t manifest_len = detail::read_u64_le(blob.data() + 5);
  if (13 + manifest_len > blob.size())
    throw Error(ErrorKind::manifest_parse, "manifest length exceeds file size");

  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(blob.begin() + 13,
                                             blob.begin() + 13 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::manifest_parse, e.what());
  }

  const unsigned char* payload = blob.data() + 13 + manifest_len;
  std::size_t payload_size = blob.size() - 13 - manifest_len;

  ModelBundle bundle;
  try {
    bundle.manifest_version = manifest.at("manifest_version").get<int>();
    for (const auto& entry : manifest.at("layers")) {
      LayerDescriptor layer;
      layer.name = entry.at("name").get<std::string>();
      layer.kind = detail::parse_kind(entry.at("kind").get<std::string>());
      layer.out_channels = entry.at("out_channels").get<int>();
      layer.in_channels = entry.at("in_channels").get<int>();
      layer.kernel_h = entry.at("kernel_h").get<int>();
      layer.kernel_w = entry.at("kernel_w").get<int>();
      layer.parents = entry.at("parents").get<std::vector<std::string>>();
      if (entry.contains("attrs")) layer.attrs = entry.at("attrs");

      uint64_t offset = entry.at("offset").get<uint64_t>();
      uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
      uint64_t expected = static_cast<uint64_t>(layer.out_channels) * layer.in_channels *
                          layer.kernel_h * layer.kernel_w * 4;
      if (nbytes != expected || offset + nbytes > payload_size || nbytes % 4 != 0)
        throw Error(ErrorKind::shape_mismatch,
                    "tensor bytes for '" + layer.name + "' do not match the declared shape");

      WeightTensor tensor;
      tensor.layer = layer.name;
      tensor.out_channels = layer.out_channels;
      tensor.in_channels = layer.in_channels;
      tensor.kernel_h = layer.kernel_h;
      tensor.kernel_w = layer.kernel_w;
      tensor.values = detail::le_bytes_to_floats(payload + offset, nbytes / 4);

      bundle.layers.push_back(std::move(layer));
      bundle.weights.push_back(std::move(tensor));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::manifest_parse, e.what());
  }

  auto diags = validate_model(bundle);
  for (const auto& diag : diags) {
    if (diag.severity != Severity::error) continue;
    ErrorKind kind = ErrorKind::manifest_parse;
    switch (diag.kind) {
    case DiagnosticKind::dangling_parent: kind = ErrorKind::dangling_parent; break;
    case DiagnosticKind::cycle_detected: kind = ErrorKind::cycle_detected; break;
    case DiagnosticKind::non_finite_weight: kind = ErrorKind::non_finite_weight; break;
    case DiagnosticKind::shape_mismatch: kind = ErrorKind::shape_mismatch; break;
    default: break;
    }
    throw Error(kind, diag.layer.empty() ? diag.message
                                         : diag.layer + ": " + diag.message);
  }
  return bundle;
}

} // namespace rtoss
