#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvse/config.hpp"
#include "mvse/params.hpp"
#include "mvse/text_encoder.hpp"
#include "mvse/visual_spaces.hpp"

namespace mvse {

inline constexpr char kContainerMagic[4] = {'M', 'V', 'S', 'E'};
inline constexpr std::uint16_t kContainerVersion = 1;

enum class ContainerKind : std::uint16_t { dataset = 1, checkpoint = 2 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagic : public FormatError {
 public:
  BadMagic() : FormatError("bad magic: not an MVSE container") {}
};
class VersionMismatch : public FormatError {
 public:
  explicit VersionMismatch(std::uint16_t found)
      : FormatError("version mismatch: container version " + std::to_string(found) +
                    ", reader supports " + std::to_string(kContainerVersion)) {}
};
class Truncated : public FormatError {
 public:
  explicit Truncated(const std::string& where) : FormatError("truncated container while reading " + where) {}
};
class TrailingBytes : public FormatError {
 public:
  explicit TrailingBytes(std::size_t extra)
      : FormatError("trailing bytes: " + std::to_string(extra) + " unread bytes after last section") {}
};

/// Features, vocabulary and sentences of one corpus. Dimensions with extent 0
/// mark an absent section (e.g. grid_channels == 0: no sequential space).
struct Dataset {
  std::size_t frames = 0;
  std::size_t grid = 0;
  std::size_t global_channels = 0;
  std::size_t grid_channels = 0;
  std::size_t action_dim = 0;
  std::vector<VideoFeature> videos;
  EmbeddingTable table;
  std::vector<std::vector<std::uint32_t>> sentences;

  std::size_t token_dim() const { return table.dim(); }
  /// Throws FormatError when a tensor disagrees with the header dimensions.
  void validate() const;
  /// Index of the video with `id`; throws std::out_of_range.
  std::size_t video_index(const std::string& id) const;
  bool supports(Space space) const;
};

/// Little-endian layout:
///   "MVSE" | u16 version | u16 kind(1)
///   u32 videos, frames, grid, global_channels, grid_channels, action_dim,
///       vocab, token_dim, sentences | u8 oov_policy | 3 zero bytes
///   sections video_ids, global_frames, grid_frames, action_vecs,
///   embedding_table, sentences; each is u8 name length | name | u64 payload
///   length | payload. Floats are f32, strings are u32 length + bytes,
///   sentences are u32 count + u32 token indices.
std::vector<std::uint8_t> write_container(const Dataset& dataset);
Dataset read_container(std::span<const std::uint8_t> bytes);

void save_container(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_container(const std::filesystem::path& path);

/// Parameters plus a string echo of the configuration that produced them.
struct Checkpoint {
  ModelConfig model;
  ModelParams params;
  std::map<std::string, std::string> echo;
};

/// Same framing as the dataset container with kind 2: u32 echo count, u32
/// tensor count, then sections "config" (u32-length key/value strings) and
/// "tensors" (name, u8 rank, u32 extents, f64 values). Parameters are stored
/// as f64 so reloading is lossless.
std::vector<std::uint8_t> write_checkpoint(const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Split definition: which videos take part and which sentences query them.
struct Manifest {
  struct Entry {
    std::string video_id;
    std::vector<std::uint32_t> sentences;
  };
  std::string split;
  std::string container;
  std::vector<Entry> videos;
  /// Optional named sentence populations, used to break down gate statistics.
  std::map<std::string, std::vector<std::uint32_t>> groups;

  /// Throws std::invalid_argument when an id is missing from `dataset`.
  void validate(const Dataset& dataset) const;
  std::size_t sentence_count() const;
};

std::string write_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace mvse
