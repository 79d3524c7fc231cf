#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "probemb/core_types.hpp"
#include "probemb/retrieval.hpp"

namespace probemb {

// PEMB layout, all little-endian:
//   "PEMB" | version u32 | flags u32 | count u64 | dim u32
//   count x (id_len u16, id bytes)
//   count*dim f32 mu, row-major
//   count*dim f32 log_var, row-major   (only when flag bit 0 is set)
// flags bit 0: log-variance section present; bits 1-2: modality.
inline constexpr std::uint32_t kPembVersion = 1;
inline constexpr std::size_t kPembHeaderBytes = 24;
inline constexpr std::uint32_t kPembFlagLogVar = 1u;

/// Reads one set from a stream. Throws BadMagic, VersionUnsupported,
/// TruncatedFile, DuplicateId or MalformedFile (unknown flag bits, bad
/// UTF-8, trailing bytes).
EmbeddingSet read_pemb(std::istream& in);
EmbeddingSet read_pemb(const std::filesystem::path& path);

/// Values are rounded to 32-bit floats; OutOfRange if one overflows.
/// Sets without log-variance write the mean section only.
void write_pemb(const EmbeddingSet& set, std::ostream& out);
void write_pemb(const EmbeddingSet& set, const std::filesystem::path& path);

/// Exact byte length of the encoding of `set`.
std::size_t pemb_size(const EmbeddingSet& set);

/// The set as it reads back after a write: every value rounded to f32.
EmbeddingSet round_to_storage(const EmbeddingSet& set);

// Index layout ("PIDX"), little-endian:
//   "PIDX" | version u32 | flags u32 | count u64 | dim u32
//   count x (id_len u16, id bytes)
//   count*dim f64 mu | count f64 mass
//   if flag bit 0: nlist u32 | nlist*dim f64 centroids | per list (len u64, len x u64 item)
inline constexpr std::uint32_t kIndexVersion = 1;

void save_index(const ProbIndex& index, const std::filesystem::path& path);
ProbIndex load_index(const std::filesystem::path& path);

}  // namespace probemb
