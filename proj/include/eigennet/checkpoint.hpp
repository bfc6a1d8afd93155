// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// Single-file archive of named float64 arrays.
//
//   eigennet-checkpoint 1
//   <count>
//   <name> <rank> <d0> ... <dk>      one line per array, payload order
//   <blank line>
//   payload: little-endian IEEE-754 doubles, arrays back to back

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eigennet/errors.hpp"
#include "eigennet/model.hpp"
#include "eigennet/tensor.hpp"

namespace eigennet {

inline constexpr const char* kCheckpointMagic = "eigennet-checkpoint";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

namespace detail {

inline void put_le64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffU));
    bits >>= 8;
  }
}

inline double get_le64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_archive(const std::filesystem::path& path,
                          const std::vector<NamedArray>& arrays) {
  std::string out = std::string(kCheckpointMagic) + " 1\n" +
                    std::to_string(arrays.size()) + "\n";
  for (const auto& a : arrays) {
    if (a.name.empty() || a.name.find_first_of(" \n\t") != std::string::npos) {
      throw FormatError("invalid array name '" + a.name + "'");
    }
    if (numel(a.shape) != a.values.size()) {
      throw DimensionError("array '" + a.name + "' shape does not match values");
    }
    out += a.name + " " + std::to_string(a.shape.size());
    for (auto d : a.shape) out += " " + std::to_string(d);
    out += "\n";
  }
  out += "\n";
  for (const auto& a : arrays) {
    for (double v : a.values) detail::put_le64(out, v);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline std::vector<NamedArray> read_archive(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)),
                          std::istreambuf_iterator<char>());
  const auto manifest_end = bytes.find("\n\n");
  if (manifest_end == std::string::npos) {
    throw FormatError(path.string() + ": missing checkpoint manifest");
  }
  std::istringstream manifest(bytes.substr(0, manifest_end + 1));
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(manifest >> magic >> version) || magic != kCheckpointMagic ||
      version != 1) {
    throw FormatError(path.string() + ": not an eigennet checkpoint");
  }
  if (!(manifest >> count)) throw FormatError(path.string() + ": bad array count");
  std::vector<NamedArray> arrays(count);
  std::size_t total = 0;
  for (auto& a : arrays) {
    std::size_t rank = 0;
    if (!(manifest >> a.name >> rank)) {
      throw FormatError(path.string() + ": truncated manifest");
    }
    a.shape.resize(rank);
    for (auto& d : a.shape) {
      if (!(manifest >> d) || d == 0) {
        throw FormatError(path.string() + ": bad shape for '" + a.name + "'");
      }
    }
    total += numel(a.shape);
  }
  const std::size_t offset = manifest_end + 2;
  if (bytes.size() - offset != total * 8) {
    throw LengthError(path.string() + ": payload holds " +
                      std::to_string(bytes.size() - offset) + " bytes, manifest needs " +
                      std::to_string(total * 8));
  }
  const char* p = bytes.data() + offset;
  for (auto& a : arrays) {
    a.values.resize(numel(a.shape));
    for (double& v : a.values) {
      v = detail::get_le64(p);
      p += 8;
    }
  }
  return arrays;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::vector<NamedArray> arrays;
  for (const auto& p : model.all_parameters()) {
    const auto data = p.tensor.data();
    arrays.push_back({p.name, p.tensor.shape(), {data.begin(), data.end()}});
  }
  write_archive(path, arrays);
}

/// Copies every array into the matching parameter of `model`; names and
/// shapes must agree exactly.
inline void load_checkpoint(Model& model, const std::filesystem::path& path) {
  std::map<std::string, NamedArray> by_name;
  for (auto& a : read_archive(path)) {
    const std::string name = a.name;
    if (!by_name.emplace(name, std::move(a)).second) {
      throw FormatError(path.string() + ": duplicate array '" + name + "'");
    }
  }
  auto params = model.all_parameters();
  if (params.size() != by_name.size()) {
    throw FormatError(path.string() + ": holds " + std::to_string(by_name.size()) +
                      " arrays, model has " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw FormatError(path.string() + ": missing array '" + p.name + "'");
    }
    if (it->second.shape != p.tensor.shape()) {
      throw FormatError(path.string() + ": '" + p.name + "' has shape " +
                        to_string(it->second.shape) + ", model expects " +
                        to_string(p.tensor.shape()));
    }
  }
  for (auto& p : params) {
    const auto& values = by_name.at(p.name).values;
    std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
  }
}

}  // namespace eigennet
