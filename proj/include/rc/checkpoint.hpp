#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rc/nn.hpp"

namespace rc {

/// Checkpoint layout (little-endian):
///   "RCNN1"
///   repeated per parameter:
///     u32 name length, name bytes, u32 rank, u64 extents[rank], f64 data[]
/// Data is always stored as 64-bit floats regardless of the build's real type.
inline constexpr char kCheckpointMagic[] = "RCNN1";

void write_checkpoint(const SmallCnn& model, std::ostream& out);
void save_checkpoint(const SmallCnn& model, const std::filesystem::path& path);

/// Loads parameters into a model that already has the matching architecture.
/// Throws FormatError on bad magic, truncation, unknown names or shape mismatch.
void read_checkpoint(SmallCnn& model, std::istream& in);
void load_checkpoint(SmallCnn& model, const std::filesystem::path& path);

/// FNV-1a hash over the checkpoint byte stream; cheap identity for logs.
std::uint64_t checkpoint_digest(const SmallCnn& model);

}  // namespace rc
