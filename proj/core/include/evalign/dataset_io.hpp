#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evalign/alignment.hpp"
#include "evalign/emitter.hpp"
#include "evalign/event_repr.hpp"

namespace evalign::io {

// EventFileV1, little-endian:
//   0  char[4] "EVZ1"
//   4  u16     version = 1
//   6  u16     width
//   8  u16     height
//  10  u16     reserved = 0
//  12  u32     duration_us
//  16  u64     count
//  24  count x { u32 t_us, u16 x, u16 y, u8 polarity (0 neg, 1 pos), u8[3] pad = 0 }
inline constexpr std::size_t kEventHeaderSize = 24;
inline constexpr std::size_t kEventRecordSize = 12;

// EmbeddingFileV1, little-endian:
//   0  char[4] "EMB1"
//   4  u16     version = 1
//   6  u16     reserved = 0
//   8  u32     dim
//  12  u64     count
//  20  count x dim f32, row-major
inline constexpr std::size_t kEmbeddingHeaderSize = 20;

std::vector<std::uint8_t> encode_events(const events::EventStream& stream);
/// Throws FormatError naming the offending byte offset.
events::EventStream decode_events(std::span<const std::uint8_t> bytes);

void write_events(const events::EventStream& stream, const std::filesystem::path& path);
events::EventStream read_events(const std::filesystem::path& path);

/// Rows whose norm is within this distance of 1 are stored without
/// renormalization.
inline constexpr double kStoredUnitTolerance = 1e-6;

/// Normalizes each row before narrowing to f32 (rows already unit within
/// kStoredUnitTolerance are kept as given); a zero row is rejected with
/// ArgumentError.
std::vector<std::uint8_t> encode_embeddings(const align::EmbeddingBatch& batch);
/// Throws FormatError for layout defects and IntegrityError when a row's
/// norm deviates from 1 by more than 1e-4.
align::EmbeddingBatch decode_embeddings(std::span<const std::uint8_t> bytes,
                                        align::Role role = align::Role::Image);

void write_embeddings(const align::EmbeddingBatch& batch, const std::filesystem::path& path);
align::EmbeddingBatch read_embeddings(const std::filesystem::path& path,
                                      align::Role role = align::Role::Image);

struct EmbeddingRef {
  std::string file;  // relative to the manifest directory
  std::size_t row = 0;

  friend bool operator==(const EmbeddingRef&, const EmbeddingRef&) = default;
};

struct ManifestEntry {
  std::string event_file;    // relative to the manifest directory
  std::string source_image;  // informational; may be synthetic
  std::size_t class_id = 0;
  std::string class_name;
  std::optional<EmbeddingRef> image_embedding;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// JSON manifest pairing event files with images and labels. `config` is
/// an opaque JSON echo of the generating configuration.
struct Manifest {
  std::string dataset;
  std::uint64_t seed = 0;
  std::string config_json = "{}";
  std::vector<ManifestEntry> entries;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

std::string manifest_to_json(const Manifest& manifest);
/// Throws FormatError on schema violations or non-dense class ids.
Manifest manifest_from_json(const std::string& text);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
/// Parses and additionally checks that every referenced file exists next
/// to the manifest (IoError otherwise).
Manifest read_manifest(const std::filesystem::path& path);

struct PairedBatch {
  std::vector<repr::EventFrame> frames;
  align::EmbeddingBatch images;
  std::vector<std::size_t> class_ids;
};

/// Loads entries `indices` in order: event frame over the whole stream,
/// the referenced image embedding, and the class id. Throws IoError for
/// missing files and ArgumentError for bad indices, missing embedding
/// references or mixed embedding dimensions.
PairedBatch load_paired_batch(const Manifest& manifest, const std::filesystem::path& base_dir,
                              std::span<const std::size_t> indices);

}  // namespace evalign::io
