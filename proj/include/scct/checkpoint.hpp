#pragma once

// Checkpoint container: "SCJ1", a little-endian u64 header length, a JSON
// header listing every array as {name, shape, offset}, then the arrays as raw
// little-endian float64. Offsets are bytes from the start of the data block.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scct/config.hpp"
#include "scct/optim.hpp"
#include "scct/params.hpp"

namespace scct {

inline constexpr char kCheckpointMagic[4] = {'S', 'C', 'J', '1'};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<OptimState> optim;
  nlohmann::json extra = nlohmann::json::object();
};

namespace detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

inline void put_le_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void put_le_f64(std::string& out, double d) {
  put_le_u64(out, std::bit_cast<std::uint64_t>(d));
}

inline double get_le_f64(const unsigned char* p) {
  return std::bit_cast<double>(get_le_u64(p));
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string data;
  auto add = [&](const std::string& name, const Shape& shape, std::span<const double> values) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", data.size()}});
    for (double d : values) detail::put_le_f64(data, d);
  };
  for (const auto& [name, t] : ck.params.all()) add(name, t.shape(), t.data());
  nlohmann::json header = {{"format", "SCJ1"}, {"config", ck.config}, {"extra", ck.extra}};
  if (ck.optim) {
    const OptimState& st = *ck.optim;
    header["optim"] = {{"config", st.cfg}, {"step", st.step}, {"skipped", st.skipped}};
    for (const auto& [name, t] : ck.params.all()) {
      add("adam.m/" + name, t.shape(), st.m.at(name));
      add("adam.v/" + name, t.shape(), st.v.at(name));
    }
  }
  header["tensors"] = tensors;
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put_le_u64(out, h.size());
  out += h;
  out += data;
  return out;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(what + ": bad magic, expected SCJ1");
  }
  const std::uint64_t hlen = detail::get_le_u64(p + 4);
  if (hlen > bytes.size() - 12) throw FormatError(what + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": unreadable header: " + e.what());
  }
  const std::size_t base = 12 + hlen;

  Checkpoint ck;
  try {
    ck.config = parse_strict<ModelConfig>(header.at("config"), "checkpoint config");
    ck.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  ck.config.validate();

  std::map<std::string, Tensor> arrays;
  for (const auto& e : header.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    const auto off = e.at("offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (off + 8 * n > bytes.size() - base) throw FormatError(what + ": array '" + name + "' truncated");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = detail::get_le_f64(p + base + off + 8 * i);
    arrays.emplace(name, Tensor(shape, std::move(v)));
  }

  // Shapes must match a freshly built model of the stored configuration.
  const ModelParams ref = init_params(ck.config, 0);
  for (const auto& [name, t] : ref.all()) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError(what + ": missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw DimensionError(what + ": parameter '" + name + "' has shape " +
                           shape_str(it->second.shape()) + ", config expects " +
                           shape_str(t.shape()));
    }
    ck.params.insert(name, it->second);
  }
  for (const auto& [name, _] : arrays) {
    if (name.rfind("adam.", 0) != 0 && !ref.contains(name)) {
      throw FormatError(what + ": unexpected parameter '" + name + "'");
    }
  }

  if (header.contains("optim")) {
    const auto& o = header["optim"];
    OptimState st;
    st.cfg = parse_strict<OptimConfig>(o.at("config"), "checkpoint optim config");
    st.step = o.at("step").get<std::uint64_t>();
    st.skipped = o.value("skipped", std::uint64_t{0});
    for (const auto& [name, t] : ref.all()) {
      for (const char* kind : {"adam.m/", "adam.v/"}) {
        auto it = arrays.find(kind + name);
        if (it == arrays.end()) throw FormatError(what + ": missing " + kind + name);
        if (it->second.shape() != t.shape()) {
          throw DimensionError(what + ": " + kind + name + " shape mismatch");
        }
        auto& dst = kind[5] == 'm' ? st.m[name] : st.v[name];
        dst.assign(it->second.data().begin(), it->second.data().end());
      }
    }
    ck.optim = std::move(st);
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path);
}

// Loads and additionally requires the stored config to equal `expected`.
inline Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (nlohmann::json(ck.config) != nlohmann::json(expected)) {
    throw DimensionError(path + ": checkpoint config differs from the requested model config");
  }
  return ck;
}

}  // namespace scct
