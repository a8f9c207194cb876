// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace mrvm {

using detail::json;

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

template <class T>
void put_le(std::string& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t pos) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

const char* kGroups[] = {"param", "adam_m", "adam_v"};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const train::TrainState& state) {
  const diff::ParamStore* stores[] = {&state.model.params, &state.adam_m, &state.adam_v};
  std::string payload;
  json arrays = json::array();
  for (int g = 0; g < 3; ++g) {
    const diff::ParamStore& s = *stores[g];
    for (std::size_t i = 0; i < s.size(); ++i) {
      const diff::Param& p = s.param(i);
      arrays.push_back({{"group", kGroups[g]},
                        {"name", s.name(i)},
                        {"shape", {p.rows, p.cols}},
                        {"dtype", "f64le"},
                        {"offset", payload.size()}});
      for (double v : p.data) put_le(payload, v);
    }
  }
  json index = {{"iteration", state.iteration},
                {"adam_steps", state.adam_steps},
                {"phase", train::to_string(state.phase)},
                {"mode", to_string(state.model.mode)},
                {"param_seed", state.model.params.rng_seed()},
                {"rng_state", state.rng_state},
                {"clip_events", state.clip_events},
                {"aborted_steps", state.aborted_steps},
                {"config", json::parse(train::train_config_to_json(state.config))},
                {"arrays", arrays},
                {"payload_bytes", payload.size()},
                {"payload_fnv1a", fnv1a(payload)}};
  const std::string header = index.dump();
  std::string file(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le(file, kCheckpointVersion);
  put_le(file, static_cast<std::uint64_t>(header.size()));
  file += header;
  file += payload;

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw DataError("write failed for checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

train::TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str();
  const std::string where = "checkpoint " + path.string() + ": ";
  constexpr std::size_t kFixed = sizeof kCheckpointMagic + 4 + 8;
  if (file.size() < kFixed || std::memcmp(file.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw DataError(where + "bad magic, not a checkpoint file");
  const auto version = get_le<std::uint32_t>(file, sizeof kCheckpointMagic);
  if (version != kCheckpointVersion)
    throw DataError(where + "unsupported version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(file, sizeof kCheckpointMagic + 4);
  if (header_len > file.size() - kFixed) throw DataError(where + "truncated index");
  json index;
  try {
    index = json::parse(file.substr(kFixed, header_len));
  } catch (const json::exception& e) {
    throw DataError(where + "corrupt index: " + e.what());
  }
  const std::string payload = file.substr(kFixed + header_len);
  train::TrainState s;
  try {
    if (payload.size() != index.at("payload_bytes").get<std::size_t>())
      throw DataError(where + "payload is " + std::to_string(payload.size()) + " bytes, index says " +
                      std::to_string(index.at("payload_bytes").get<std::size_t>()));
    if (fnv1a(payload) != index.at("payload_fnv1a").get<std::uint64_t>())
      throw DataError(where + "payload checksum mismatch");
    s.config = train::train_config_from_json(index.at("config").dump());
    s.phase = train::phase_from_string(index.at("phase").get<std::string>());
    s.iteration = index.at("iteration").get<std::int64_t>();
    s.adam_steps = index.at("adam_steps").get<std::int64_t>();
    s.rng_state = index.at("rng_state").get<std::string>();
    s.clip_events = index.at("clip_events").get<std::int64_t>();
    s.aborted_steps = index.at("aborted_steps").get<std::int64_t>();
    const auto seed = index.at("param_seed").get<std::uint64_t>();
    s.model.config = s.config.model;
    s.model.mode = mrvm_mode_from_string(index.at("mode").get<std::string>());
    s.model.params = diff::ParamStore(seed);
    s.adam_m = diff::ParamStore(seed);
    s.adam_v = diff::ParamStore(seed);
    diff::ParamStore* stores[] = {&s.model.params, &s.adam_m, &s.adam_v};
    for (const auto& a : index.at("arrays")) {
      const std::string group = a.at("group").get<std::string>();
      int g = 0;
      while (g < 3 && group != kGroups[g]) ++g;
      if (g == 3) throw DataError(where + "unknown array group '" + group + "'");
      if (a.at("dtype").get<std::string>() != "f64le") throw DataError(where + "unsupported dtype");
      diff::Param p;
      p.rows = a.at("shape").at(0).get<std::size_t>();
      p.cols = a.at("shape").at(1).get<std::size_t>();
      const std::size_t offset = a.at("offset").get<std::size_t>();
      const std::size_t count = p.rows * p.cols;
      if (offset > payload.size() || count * 8 > payload.size() - offset)
        throw DataError(where + "array '" + a.at("name").get<std::string>() + "' runs past the payload");
      p.data.resize(count);
      for (std::size_t k = 0; k < count; ++k) p.data[k] = get_le<double>(payload, offset + 8 * k);
      stores[g]->add(a.at("name").get<std::string>(), std::move(p));
    }
    rng_state_from_string(s.rng_state);
  } catch (const json::exception& e) {
    throw DataError(where + "malformed index: " + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(where + e.what());
  }
  return s;
}

}  // namespace mrvm
