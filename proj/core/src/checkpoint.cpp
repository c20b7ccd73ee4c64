// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace vqse {

namespace {

constexpr char kMagic[8] = {'V', 'Q', 'S', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.write(b, 4);
}

void put_i64(std::ostream& out, std::int64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.write(b, 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  char b[4];
  in.read(b, 4);
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

std::int64_t get_i64(std::istream& in) {
  char b[8];
  in.read(b, 8);
  std::int64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

std::string get_string(std::istream& in) {
  std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::map<std::string, std::string>& meta) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require_input(out.good(), "cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
      put_string(out, k);
      put_string(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      put_string(out, name);
      put_u32(out, static_cast<std::uint32_t>(t.rank()));
      for (int d = 0; d < t.rank(); ++d) put_i64(out, t.dim(d));
      put_i64(out, t.numel());
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel()) * 8);
    }
    require_input(out.good(), "write failure on checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require_input(in.good(), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  require_input(in.good() && std::memcmp(magic, kMagic, 8) == 0,
                "not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(in);
  require_input(version == kVersion, "unsupported checkpoint version in " + path);

  Checkpoint ckpt;
  const std::uint32_t meta_count = get_u32(in);
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = get_string(in);
    ckpt.meta[k] = get_string(in);
  }
  const std::uint32_t tensor_count = get_u32(in);
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = get_string(in);
    const std::uint32_t rank = get_u32(in);
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = get_i64(in);
    const std::int64_t numel = get_i64(in);
    Tensor t(shape);
    require_input(t.numel() == numel, "corrupt checkpoint entry: " + name);
    in.read(reinterpret_cast<char*>(t.data()), numel * 8);
    require_input(in.good(), "truncated checkpoint: " + path);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

std::vector<std::pair<std::string, Tensor>> snapshot_params(const ad::ParamStore& store) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(store.params().size());
  for (const auto& p : store.params()) out.emplace_back(p.name, p.var->value);
  return out;
}

void restore_params(const Checkpoint& ckpt, ad::ParamStore& store) {
  for (auto& p : store.params()) {
    auto it = ckpt.tensors.find(p.name);
    require_input(it != ckpt.tensors.end(), "checkpoint missing parameter: " + p.name);
    require_input(it->second.shape() == p.var->value.shape(),
                  "checkpoint shape mismatch for " + p.name);
    p.var->value = it->second;
  }
}

}  // namespace vqse
