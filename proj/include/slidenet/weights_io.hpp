#pragma once

// Weights file:
//   "STRN1\n" | u32 little-endian header length | UTF-8 JSON header |
//   raw little-endian f32 buffers, row-major, in header order.
// The header echoes the network config and lists {name, shape, dtype}.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slidenet/errors.hpp"
#include "slidenet/network.hpp"

namespace slidenet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON mapping for the network config

inline json extent_to_json(const Extent3& e) { return json::array({e.d, e.h, e.w}); }

inline Extent3 extent_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected [d, h, w] triple, got " + j.dump());
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

inline json conv_spec_to_json(const ConvSpec& s) {
  return {{"out_channels", s.out_channels},
          {"kernel", extent_to_json(s.kernel)},
          {"stride", extent_to_json(s.params.stride)},
          {"padding", extent_to_json(s.params.padding)}};
}

inline ConvSpec conv_spec_from_json(const json& j) {
  ConvSpec s;
  s.out_channels = j.at("out_channels").get<std::size_t>();
  s.kernel = extent_from_json(j.at("kernel"));
  s.params.stride = extent_from_json(j.at("stride"));
  s.params.padding = extent_from_json(j.at("padding"));
  return s;
}

inline json config_to_json(const NetworkConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.blocks) blocks.push_back({{"conv1", conv_spec_to_json(b.first)}, {"conv2", conv_spec_to_json(b.second)}});
  json pools = json::array();
  for (const auto& p : c.pools) pools.push_back({{"window", extent_to_json(p.window)}, {"stride", extent_to_json(p.stride)}});
  return {{"name", c.name},
          {"input", {{"channels", c.input.channels}, {"frames", c.input.frames}, {"height", c.input.height}, {"width", c.input.width}}},
          {"stem", conv_spec_to_json(c.stem)},
          {"blocks", blocks},
          {"pools", pools},
          {"fc", c.fc_widths},
          {"init_seed", c.init_seed},
          {"require_standard_topology", c.require_standard_topology}};
}

inline NetworkConfig config_from_json(const json& j) {
  try {
    NetworkConfig c;
    c.name = j.value("name", std::string("custom"));
    const auto& in = j.at("input");
    c.input = {in.at("channels").get<std::size_t>(), in.at("frames").get<std::size_t>(),
               in.at("height").get<std::size_t>(), in.at("width").get<std::size_t>()};
    c.stem = conv_spec_from_json(j.at("stem"));
    for (const auto& b : j.at("blocks")) c.blocks.push_back({conv_spec_from_json(b.at("conv1")), conv_spec_from_json(b.at("conv2"))});
    for (const auto& p : j.at("pools")) c.pools.push_back({extent_from_json(p.at("window")), extent_from_json(p.at("stride"))});
    c.fc_widths = j.at("fc").get<std::vector<std::size_t>>();
    c.init_seed = j.value("init_seed", std::uint64_t{0});
    c.require_standard_topology = j.value("require_standard_topology", true);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad network config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Little-endian helpers shared by the binary containers

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32le(std::string_view in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

template <typename T>
void put_f32le(std::string& out, std::span<const T> values) {
  for (T v : values) put_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline float get_f32le(std::string_view in, std::size_t pos) {
  return std::bit_cast<float>(get_u32le(in, pos));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

// Splits magic | u32 length | header JSON | payload.
struct Container {
  json header;
  std::string_view payload;
};

inline Container split_container(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic) {
    throw BadMagicError("bad magic: expected " + std::string(magic.substr(0, magic.size() - 1)));
  }
  if (bytes.size() < magic.size() + 4) throw LengthMismatchError("file ends inside the header length field");
  const std::uint32_t len = get_u32le(bytes, magic.size());
  const std::size_t body = magic.size() + 4;
  if (bytes.size() - body < len) throw LengthMismatchError("header length exceeds file size");
  Container c;
  try {
    c.header = json::parse(bytes.substr(body, len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("unreadable header: ") + e.what());
  }
  c.payload = bytes.substr(body + len);
  return c;
}

inline std::string join_container(std::string_view magic, const json& header, std::string_view payload) {
  std::string out(magic);
  const std::string h = header.dump();
  put_u32le(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out += payload;
  return out;
}

}  // namespace detail

inline constexpr std::string_view kWeightsMagic = "STRN1\n";

template <typename T>
std::string serialize_weights(const Network<T>& net) {
  json tensors = json::array();
  std::string payload;
  for (const auto& p : net.weights().params) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"dtype", "f32le"}});
    detail::put_f32le<T>(payload, p.value.values());
  }
  const json header = {{"format", "STRN1"}, {"config", config_to_json(net.config())}, {"tensors", tensors}};
  return detail::join_container(kWeightsMagic, header, payload);
}

inline Network<float> deserialize_weights(std::string_view bytes) {
  auto c = detail::split_container(bytes, kWeightsMagic);
  NetworkConfig config;
  std::vector<std::pair<std::string, Shape>> declared;
  try {
    config = config_from_json(c.header.at("config"));
    for (const auto& t : c.header.at("tensors")) {
      if (t.value("dtype", std::string("f32le")) != "f32le") throw FormatError("unsupported dtype " + t.at("dtype").dump());
      declared.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed weights header: ") + e.what());
  }
  std::size_t expected = 0;
  for (const auto& [name, shape] : declared) expected += 4 * shape_size(shape);
  if (c.payload.size() != expected) {
    throw LengthMismatchError("header declares " + std::to_string(declared.size()) + " tensors totalling " +
                              std::to_string(expected) + " bytes, buffer holds " +
                              std::to_string(c.payload.size()));
  }
  const auto specs = parameter_specs(config);
  if (specs.size() != declared.size()) {
    throw ShapeError("embedded config needs " + std::to_string(specs.size()) + " tensors, file declares " +
                     std::to_string(declared.size()));
  }
  Weights<float> w;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < declared.size(); ++i) {
    const auto& [name, shape] = declared[i];
    if (specs[i].name != name || specs[i].shape != shape) {
      throw ShapeError("tensor " + name + " " + to_string(shape) + " does not match config (" + specs[i].name +
                       " " + to_string(specs[i].shape) + ")");
    }
    std::vector<float> data(shape_size(shape));
    for (auto& v : data) {
      v = detail::get_f32le(c.payload, pos);
      pos += 4;
    }
    w.params.push_back({name, Tensor<float>(shape, std::move(data))});
  }
  return Network<float>(std::move(config), std::move(w));
}

template <typename T>
void save_weights(const Network<T>& net, const std::filesystem::path& destination) {
  detail::write_file(destination, serialize_weights(net));
}

inline Network<float> load_weights(const std::filesystem::path& source) {
  return deserialize_weights(detail::read_file(source));
}

}  // namespace slidenet
