#pragma once

// Binary parameter container:
//   "PMUD" | u32 version | u32 entry count |
//   per entry: u16 name length, name bytes, u8 ndim, u32 dims[ndim], float32 data (row-major)
//   | u32 CRC-32 of every preceding byte
// All integers and floats are little-endian.

#include "fgmae/errors.hpp"
#include "fgmae/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fgmae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Matrix<float> value;
};
using Checkpoint = std::vector<CheckpointEntry>;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& entries);
// CorruptFile on bad magic, truncation or checksum mismatch;
// IncompatibleCheckpoint on an unknown version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Appends every parameter and buffer of `model`.
template <typename Model>
void export_model(Model& model, Checkpoint& out) {
  model.for_each_parameter([&out](auto& p) { out.push_back({p.name, p.value.template cast<float>()}); });
  model.for_each_buffer([&out](auto& b) { out.push_back({b.name, b.value.template cast<float>()}); });
}

const CheckpointEntry* find_entry(const Checkpoint& c, const std::string& name);

// Copies matching entries into `model`; IncompatibleCheckpoint names the
// first missing or mis-shaped entry.
template <typename Model>
void import_model(Model& model, const Checkpoint& c) {
  auto assign = [&c](auto& dst) {
    const CheckpointEntry* e = find_entry(c, dst.name);
    if (!e) throw IncompatibleCheckpoint("missing entry " + dst.name);
    if (e->value.rows() != dst.value.rows() || e->value.cols() != dst.value.cols())
      throw IncompatibleCheckpoint("entry " + dst.name + " has shape " + std::to_string(e->value.rows()) + "x" +
                                   std::to_string(e->value.cols()) + ", model expects " +
                                   std::to_string(dst.value.rows()) + "x" + std::to_string(dst.value.cols()));
    using S = typename std::decay_t<decltype(dst.value)>::Scalar;
    dst.value = e->value.template cast<S>();
  };
  model.for_each_parameter(assign);
  model.for_each_buffer(assign);
}

}  // namespace fgmae
