// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>

#include "fastprotect/errors.hpp"
#include "fastprotect/mop.hpp"

namespace fastprotect {
namespace {

using nlohmann::json;

constexpr unsigned char kMagic[4] = {'F', 'P', 'M', 'P'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const unsigned char> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

class TensorWriter {
 public:
  void add(const std::string& name, const std::vector<std::size_t>& shape, std::span<const double> values) {
    const std::size_t offset = payload_.size();
    for (double v : values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      put_u32(payload_, bits);
    }
    const auto crc = crc32(0L, payload_.data() + offset, static_cast<uInt>(payload_.size() - offset));
    directory_.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"crc32", crc}});
  }

  json directory() const { return directory_; }
  const std::vector<unsigned char>& payload() const { return payload_; }

 private:
  json directory_ = json::array();
  std::vector<unsigned char> payload_;
};

class TensorReader {
 public:
  TensorReader(const json& directory, std::span<const unsigned char> payload) : payload_(payload) {
    for (const auto& entry : directory) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto crc = entry.at("crc32").get<std::uint64_t>();
      std::size_t count = 1;
      for (auto s : shape) count *= s;
      if (offset > payload_.size() || count * 4 > payload_.size() - offset) {
        throw CorruptionError("tensor '" + name + "' extends past the end of the bundle");
      }
      const auto actual = crc32(0L, payload_.data() + offset, static_cast<uInt>(count * 4));
      if (actual != crc) throw CorruptionError("checksum mismatch for tensor '" + name + "'");
      entries_[name] = {shape, offset, count};
      end_ = std::max(end_, offset + count * 4);
    }
  }

  std::vector<double> values(const std::string& name, const std::vector<std::size_t>& expected_shape) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("bundle is missing tensor '" + name + "'");
    if (it->second.shape != expected_shape) throw FormatError("tensor '" + name + "' has an unexpected shape");
    std::vector<double> out(it->second.count);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<double>(std::bit_cast<float>(get_u32(payload_, it->second.offset + 4 * i)));
    }
    return out;
  }

  Tensor tensor(const std::string& name, std::size_t c, std::size_t h, std::size_t w) const {
    return Tensor(c, h, w, values(name, {c, h, w}));
  }

  std::size_t end() const { return end_; }

 private:
  struct Entry {
    std::vector<std::size_t> shape;
    std::size_t offset;
    std::size_t count;
  };
  std::span<const unsigned char> payload_;
  std::map<std::string, Entry> entries_;
  std::size_t end_ = 0;
};

std::string level_key(TargetLevel level) { return std::string(to_string(level)); }

}  // namespace

std::vector<unsigned char> serialize_model(const MoPModel& m) {
  m.validate();
  TensorWriter writer;

  std::vector<double> flat_centroids;
  for (const auto& c : m.centroids.centroids) flat_centroids.insert(flat_centroids.end(), c.begin(), c.end());
  writer.add("centroids", {static_cast<std::size_t>(m.centroids.k), m.centroids.dim}, flat_centroids);

  json targets = json::array();
  for (const auto& t : m.targets) {
    const Tensor& z = t.z_y.z;
    writer.add("target/" + level_key(t.level) + "/z_y", {z.channels(), z.height(), z.width()}, z.data());
    targets.push_back({{"level", level_key(t.level)}, {"seed", t.seed}, {"entropy", t.entropy}});
  }
  const std::size_t r = m.base_resolution();
  for (const auto& b : m.banks) {
    const std::string prefix = "bank/" + level_key(b.target_id);
    writer.add(prefix + "/delta_g", {3, r, r}, b.delta_g.values.data());
    for (std::size_t k = 0; k < b.deltas.size(); ++k) {
      writer.add(prefix + "/delta/" + std::to_string(k), {3, r, r}, b.deltas[k].values.data());
    }
  }

  const json header = {
      {"eta", m.eta()},
      {"K", m.k()},
      {"base_resolution", r},
      {"encoder_fp", m.encoder_fp},
      {"encoder",
       {{"seed", m.encoder_cfg.seed},
        {"num_stages", m.encoder_cfg.num_stages},
        {"base_channels", m.encoder_cfg.base_channels},
        {"latent_channels", m.encoder_cfg.latent_channels},
        {"downsample_factor", m.encoder_cfg.downsample_factor}}},
      {"centroids",
       {{"seed", m.centroids.seed}, {"inertia", m.centroids.inertia}, {"iterations", m.centroids.iterations}}},
      {"targets", targets},
      {"train_meta",
       {{"steps", m.train_meta.steps},
        {"lr", m.train_meta.lr},
        {"beta1", m.train_meta.beta1},
        {"beta2", m.train_meta.beta2},
        {"batch_size", m.train_meta.batch_size},
        {"seed", m.train_meta.seed},
        {"lambda_ml", m.train_meta.lambda_ml},
        {"layers", m.train_meta.layers}}},
      {"tensors", writer.directory()},
  };
  const std::string header_text = header.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kBundleVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  out.insert(out.end(), writer.payload().begin(), writer.payload().end());
  return out;
}

MoPModel deserialize_model(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4) throw CorruptionError("bundle is truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not an FPMP bundle (bad magic)");
  if (bytes.size() < 12) throw CorruptionError("bundle is truncated");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kBundleVersion) throw FormatError("unsupported bundle version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (header_len > bytes.size() - 12) throw CorruptionError("bundle header is truncated");

  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("bundle header is not valid JSON: ") + e.what());
  }

  try {
    const auto payload = bytes.subspan(12 + header_len);
    const TensorReader reader(header.at("tensors"), payload);
    if (reader.end() != payload.size()) throw CorruptionError("bundle has trailing bytes");

    MoPModel m;
    const int eta = header.at("eta").get<int>();
    const int k = header.at("K").get<int>();
    const auto r = header.at("base_resolution").get<std::size_t>();
    m.encoder_fp = header.at("encoder_fp").get<std::string>();
    const json& enc = header.at("encoder");
    m.encoder_cfg = {enc.at("seed").get<std::uint64_t>(), enc.at("num_stages").get<int>(),
                     enc.at("base_channels").get<int>(), enc.at("latent_channels").get<int>(),
                     enc.at("downsample_factor").get<int>()};
    const json& meta = header.at("train_meta");
    m.train_meta = {meta.at("steps").get<int>(),           meta.at("lr").get<double>(),
                    meta.at("beta1").get<double>(),        meta.at("beta2").get<double>(),
                    meta.at("batch_size").get<int>(),      meta.at("seed").get<std::uint64_t>(),
                    meta.at("lambda_ml").get<double>(),    meta.at("layers").get<std::vector<std::string>>()};

    const json& cj = header.at("centroids");
    m.centroids.k = k;
    m.centroids.seed = cj.at("seed").get<std::uint64_t>();
    m.centroids.inertia = cj.at("inertia").get<double>();
    m.centroids.iterations = cj.at("iterations").get<int>();
    const json* centroid_entry = nullptr;
    for (const auto& e : header.at("tensors")) {
      if (e.at("name") == "centroids") centroid_entry = &e;
    }
    if (!centroid_entry) throw FormatError("bundle is missing tensor 'centroids'");
    const auto cshape = centroid_entry->at("shape").get<std::vector<std::size_t>>();
    if (cshape.size() != 2 || cshape[0] != static_cast<std::size_t>(k)) throw FormatError("centroid tensor has wrong shape");
    m.centroids.dim = cshape[1];
    const auto flat = reader.values("centroids", cshape);
    for (int c = 0; c < k; ++c) {
      m.centroids.centroids.emplace_back(flat.begin() + static_cast<long>(c * m.centroids.dim),
                                         flat.begin() + static_cast<long>((c + 1) * m.centroids.dim));
    }

    for (const auto& tj : header.at("targets")) {
      const TargetLevel level = parse_target_level(tj.at("level").get<std::string>());
      const std::string name = "target/" + level_key(level) + "/z_y";
      const json* entry = nullptr;
      for (const auto& e : header.at("tensors")) {
        if (e.at("name") == name) entry = &e;
      }
      if (!entry) throw FormatError("bundle is missing tensor '" + name + "'");
      const auto shape = entry->at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 3) throw FormatError("target latent must be rank 3");
      auto& slot = m.targets[static_cast<std::size_t>(level)];
      slot.level = level;
      slot.seed = tj.at("seed").get<std::uint64_t>();
      slot.entropy = tj.at("entropy").get<double>();
      slot.z_y.z = reader.tensor(name, shape[0], shape[1], shape[2]);
    }

    const double bound = half_budget_bound(eta);
    for (TargetLevel level : kTargetLevels) {
      const std::string prefix = "bank/" + level_key(level);
      PerturbationBank& b = m.banks[static_cast<std::size_t>(level)];
      b.eta = eta;
      b.target_id = level;
      b.base_resolution = r;
      b.delta_g = {reader.tensor(prefix + "/delta_g", 3, r, r), bound};
      for (int c = 0; c < k; ++c) {
        b.deltas.push_back({reader.tensor(prefix + "/delta/" + std::to_string(c), 3, r, r), bound});
      }
      if (!b.within_bounds()) throw CorruptionError("bank " + level_key(level) + " violates its half-budget bound");
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bundle header is missing fields: ") + e.what());
  }
}

void save_model(const MoPModel& m, const std::filesystem::path& path) {
  const auto bytes = serialize_model(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

MoPModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(bytes);
}

}  // namespace fastprotect
