/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>
#include <string>

#include "hafr/io.hpp"
#include "hafr/numeric.hpp"
#include "json.hpp"

// A checkpoint is two files: `<path>` holds a JSON manifest (model kind,
// descriptor, group table, dataset checksum, blob digest) and `<path>.bin`
// holds every group's values as little-endian float32, column-major, in
// group order.

namespace hafr {

inline constexpr std::string_view kCheckpointFormat = "hafr-checkpoint-v1";
inline constexpr std::string_view kCheckpointMagic = "HAFRCKP1";

inline std::filesystem::path checkpoint_blob_path(
    const std::filesystem::path& path) {
  return path.string() + ".bin";
}

template <typename Real>
std::string encode_param_values(const ParamStore<Real>& store) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& g : store) {
    w.u32(static_cast<std::uint32_t>(g.rows()));
    w.u32(static_cast<std::uint32_t>(g.cols()));
    for (Eigen::Index j = 0; j < g.value.size(); ++j) {
      w.f32(static_cast<float>(g.value.data()[j]));
    }
  }
  return w.take();
}

template <typename Real>
nlohmann::ordered_json save_checkpoint(const std::filesystem::path& path,
                                       const ParamStore<Real>& store,
                                       const nlohmann::ordered_json& descriptor,
                                       const std::string& dataset_checksum) {
  const auto blob = encode_param_values(store);
  nlohmann::ordered_json m;
  m["format"] = kCheckpointFormat;
  m["kind"] = descriptor.at("kind");
  m["descriptor"] = descriptor;
  m["seed"] = store.seed();
  m["steps"] = store.steps();
  m["dataset_checksum"] = dataset_checksum;
  auto& groups = m["groups"];
  groups = nlohmann::ordered_json::array();
  for (const auto& g : store) {
    groups.push_back({{"name", g.name},
                      {"rows", g.rows()},
                      {"cols", g.cols()},
                      {"l2", static_cast<double>(g.l2)},
                      {"layout", g.layout == Layout::columns ? "columns" : "dense"}});
  }
  m["blob_sha256"] = io::sha256_hex(blob);
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  io::write_file(checkpoint_blob_path(path), blob);
  io::write_file(path, m.dump(2) + "\n");
  return m;
}

inline nlohmann::json read_checkpoint_manifest(
    const std::filesystem::path& path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": not a checkpoint manifest (" + e.what() +
                ")");
  }
  if (m.value("format", "") != kCheckpointFormat) {
    throw Error(path.string() + ": unknown checkpoint format");
  }
  return m;
}

// Loads values into a store whose group layout was rebuilt from the
// manifest descriptor. Names and shapes must match exactly.
template <typename Real>
void load_checkpoint_values(const std::filesystem::path& path,
                            const nlohmann::json& manifest,
                            ParamStore<Real>& store) {
  const auto blob_path = checkpoint_blob_path(path);
  const auto blob = io::read_file(blob_path);
  if (io::sha256_hex(blob) != manifest.at("blob_sha256").get<std::string>()) {
    throw Error(blob_path.string() + ": digest does not match manifest");
  }
  const auto& groups = manifest.at("groups");
  if (groups.size() != store.size()) {
    throw Error(path.string() + ": group count mismatch");
  }
  io::ByteReader r(blob, blob_path.string());
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(blob_path.string() + ": bad magic");
  }
  if (r.u32() != store.size()) {
    throw Error(blob_path.string() + ": group count mismatch");
  }
  std::size_t gid = 0;
  for (auto& g : store) {
    const auto& entry = groups[gid++];
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (entry.at("name").get<std::string>() != g.name ||
        rows != static_cast<std::uint32_t>(g.rows()) ||
        cols != static_cast<std::uint32_t>(g.cols())) {
      throw Error(path.string() + ": group '" + g.name +
                  "' does not match the model layout");
    }
    for (Eigen::Index j = 0; j < g.value.size(); ++j) {
      g.value.data()[j] = static_cast<Real>(r.f32());
    }
  }
  if (r.remaining() != 0) {
    throw Error(blob_path.string() + ": trailing bytes");
  }
  store.set_steps(manifest.value("steps", std::uint64_t{0}));
}

}  // namespace hafr
