#pragma once
// Time-tag data model and binary interchange format. All analyses operate
// on integer ticks (default 81 ps) so that time comparisons are exact.
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace photonstat {

struct TimeTag {
  std::uint64_t timestamp = 0;  // ticks
  std::uint16_t channel = 0;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
  friend bool operator<(const TimeTag& a, const TimeTag& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.channel < b.channel;
  }
};

struct StreamHeader {
  double tick_ps = 81.0;
  std::uint16_t channel_count = 1;
  std::uint64_t duration_ticks = 0;
  std::string origin;  // free-form scenario note, not serialized to the binary format
};

/// Immutable, sorted tag sequence. Construction validates the ordering and
/// range invariants; transforms produce new streams.
class TagStream {
 public:
  TagStream() = default;
  /// Takes tags already sorted by (timestamp, channel); throws IntegrityError otherwise.
  TagStream(StreamHeader header, std::vector<TimeTag> tags);
  /// Sorts, then validates.
  static TagStream from_unsorted(StreamHeader header, std::vector<TimeTag> tags);

  const StreamHeader& header() const { return header_; }
  const std::vector<TimeTag>& tags() const { return tags_; }
  std::size_t size() const { return tags_.size(); }
  double tick_ps() const { return header_.tick_ps; }
  std::uint16_t channel_count() const { return header_.channel_count; }
  std::uint64_t duration_ticks() const { return header_.duration_ticks; }
  double duration_seconds() const { return double(header_.duration_ticks) * header_.tick_ps * 1e-12; }

  std::vector<std::uint64_t> channel_counts() const;
  /// Timestamps of one channel, in order.
  std::vector<std::uint64_t> channel_times(std::uint16_t channel) const;

 private:
  StreamHeader header_;
  std::vector<TimeTag> tags_;
};

/// Binary tag file ("PTAG"), little-endian, 32-byte header + 16-byte records.
TagStream read_tags(const std::filesystem::path& path);
void write_tags(const TagStream& stream, const std::filesystem::path& path);

/// Sorted merge of streams sharing tick_ps; caller guarantees channels are
/// disjoint or intentionally shared.
TagStream merge(std::span<const TagStream> streams);

/// Per-window click patterns over contiguous windows [k*w, (k+1)*w); the
/// trailing partial window is discarded. Pattern = bitmask of channels with
/// at least one tag in the window; no-click windows are counted explicitly.
struct ClickStatistics {
  std::uint64_t window_ticks = 1;
  std::uint64_t window_count = 0;
  std::uint16_t channel_count = 0;
  std::vector<std::uint64_t> pattern_counts;  // size 1 << channel_count, indexed by bitmask

  std::uint64_t total_counts() const;
};

ClickStatistics window_clicks(const TagStream& stream, std::uint64_t window_ticks);

/// Chunked view for parallel scans: cores partition [0, duration), tags
/// within core +- halo are exposed, halo tags are duplicates by design.
struct StreamChunk {
  std::uint64_t core_begin = 0;
  std::uint64_t core_end = 0;
  std::span<const TimeTag> tags;  // all tags in [core_begin - halo, core_end + halo)

  bool in_core(const TimeTag& t) const {
    return t.timestamp >= core_begin && t.timestamp < core_end;
  }
};

std::vector<StreamChunk> chunks(const TagStream& stream, std::uint64_t chunk_ticks,
                                std::uint64_t halo_ticks);

}  // namespace photonstat
