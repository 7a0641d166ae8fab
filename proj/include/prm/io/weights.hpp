#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prm/io/files.hpp"
#include "prm/network.hpp"

namespace prm::io {

// Layout: "PRMW" | u32 LE header length | JSON header | param_count LE doubles.
inline constexpr char kWeightsMagic[4] = {'P', 'R', 'M', 'W'};
inline constexpr int kWeightsVersion = 1;

enum class WeightsErrorCode { BadMagic = 10, Malformed, Version, Truncated, CountMismatch, Checksum };

inline const char* to_string(WeightsErrorCode c) {
  switch (c) {
    case WeightsErrorCode::BadMagic: return "bad-magic";
    case WeightsErrorCode::Malformed: return "malformed-header";
    case WeightsErrorCode::Version: return "version-mismatch";
    case WeightsErrorCode::Truncated: return "truncated-payload";
    case WeightsErrorCode::CountMismatch: return "count-mismatch";
    case WeightsErrorCode::Checksum: return "checksum-failure";
  }
  return "unknown";
}

class WeightsError : public std::runtime_error {
 public:
  WeightsError(WeightsErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code) {}
  WeightsErrorCode code() const { return code_; }

 private:
  WeightsErrorCode code_;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

inline std::uint64_t get_u64_le(const char* p) {
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(p[k]);
  return v;
}

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  return std::visit(overloaded{
                        [](const Conv& c) {
                          return nlohmann::json{{"type", "conv"},     {"out", c.out_channels}, {"in", c.in_channels},
                                                {"kh", c.kernel_h},   {"kw", c.kernel_w},      {"stride", c.stride},
                                                {"pad", c.pad}};
                        },
                        [](const Relu&) { return nlohmann::json{{"type", "relu"}}; },
                        [](const MaxPool& p) {
                          return nlohmann::json{{"type", "maxpool"}, {"window", p.window}, {"stride", p.stride}};
                        },
                        [](const AvgPool& p) {
                          return nlohmann::json{{"type", "avgpool"}, {"window", p.window}, {"stride", p.stride}};
                        },
                    },
                    l);
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv") {
    return Conv::zeros(j.at("out").get<std::size_t>(), j.at("in").get<std::size_t>(), j.at("kh").get<std::size_t>(),
                       j.at("kw").get<std::size_t>(), j.at("stride").get<std::size_t>(), j.at("pad").get<std::size_t>());
  }
  if (type == "relu") return Relu{};
  if (type == "maxpool") return MaxPool{j.at("window").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  if (type == "avgpool") return AvgPool{j.at("window").get<std::size_t>(), j.at("stride").get<std::size_t>()};
  throw std::invalid_argument("unknown layer type '" + type + "'");
}

}  // namespace detail

inline std::string encode_weights(const NetworkSpec& net) {
  validate(net);
  std::string payload;
  payload.reserve(net.param_count() * 8);
  for_each_param(net, [&](double v) { detail::put_u64_le(payload, std::bit_cast<std::uint64_t>(v)); });

  nlohmann::json header{{"version", kWeightsVersion},
                        {"num_classes", net.num_classes},
                        {"param_count", net.param_count()},
                        {"checksum", detail::hex64(detail::fnv1a64(payload))},
                        {"layers", nlohmann::json::array()}};
  for (const auto& l : net.layers) header["layers"].push_back(detail::layer_to_json(l));
  const std::string h = header.dump();

  std::string out(kWeightsMagic, 4);
  const auto n = static_cast<std::uint32_t>(h.size());
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((n >> (8 * k)) & 0xff));
  out += h;
  out += payload;
  return out;
}

inline NetworkSpec decode_weights(const std::string& bytes) {
  using E = WeightsErrorCode;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0) throw WeightsError(E::BadMagic, "not a weights file");
  std::uint32_t hlen = 0;
  for (int k = 3; k >= 0; --k) hlen = (hlen << 8) | static_cast<unsigned char>(bytes[4 + k]);
  if (bytes.size() - 8 < hlen) throw WeightsError(E::Truncated, "header cut short");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw WeightsError(E::Malformed, e.what());
  }
  NetworkSpec net;
  std::size_t declared = 0;
  std::string checksum;
  try {
    const int version = header.at("version").get<int>();
    if (version != kWeightsVersion)
      throw WeightsError(E::Version, "file version " + std::to_string(version) + ", reader supports " +
                                         std::to_string(kWeightsVersion));
    net.num_classes = header.at("num_classes").get<std::size_t>();
    for (const auto& l : header.at("layers")) net.layers.push_back(detail::layer_from_json(l));
    declared = header.at("param_count").get<std::size_t>();
    checksum = header.at("checksum").get<std::string>();
    validate(net);
  } catch (const WeightsError&) {
    throw;
  } catch (const std::exception& e) {
    throw WeightsError(E::Malformed, e.what());
  }
  if (declared != net.param_count())
    throw WeightsError(E::CountMismatch, "header declares " + std::to_string(declared) + " parameters, layers need " +
                                             std::to_string(net.param_count()));

  const std::string_view payload(bytes.data() + 8 + hlen, bytes.size() - 8 - hlen);
  if (payload.size() < declared * 8)
    throw WeightsError(E::Truncated, "payload has " + std::to_string(payload.size()) + " bytes, expected " +
                                         std::to_string(declared * 8));
  if (payload.size() > declared * 8)
    throw WeightsError(E::CountMismatch, "payload has " + std::to_string(payload.size() - declared * 8) +
                                             " trailing bytes");
  if (detail::hex64(detail::fnv1a64(payload)) != checksum) throw WeightsError(E::Checksum, "payload checksum differs");

  std::size_t k = 0;
  for_each_param(net, [&](double& v) { v = std::bit_cast<double>(detail::get_u64_le(payload.data() + 8 * k++)); });
  return net;
}

inline void save_weights(const std::filesystem::path& path, const NetworkSpec& net) {
  atomic_write(path, encode_weights(net));
}

inline NetworkSpec load_weights(const std::filesystem::path& path) { return decode_weights(read_file(path)); }

}  // namespace prm::io
