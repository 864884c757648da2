#include "photonstat/tagstream.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "photonstat/errors.hpp"

namespace photonstat {

namespace {

void validate_header(const StreamHeader& h) {
  if (!(h.tick_ps > 0)) throw ConfigError("tick_ps must be > 0");
  if (h.channel_count < 1) throw ConfigError("channel_count must be >= 1");
}

}  // namespace

TagStream::TagStream(StreamHeader header, std::vector<TimeTag> tags)
    : header_(std::move(header)), tags_(std::move(tags)) {
  validate_header(header_);
  const TimeTag* prev = nullptr;
  for (const auto& t : tags_) {
    if (t.channel >= header_.channel_count)
      throw IntegrityError("tag channel " + std::to_string(t.channel) + " >= channel_count " +
                           std::to_string(header_.channel_count));
    if (t.timestamp > header_.duration_ticks)
      throw IntegrityError("tag timestamp beyond stream duration");
    if (prev && t < *prev) throw IntegrityError("tags out of (timestamp, channel) order");
    prev = &t;
  }
}

TagStream TagStream::from_unsorted(StreamHeader header, std::vector<TimeTag> tags) {
  std::sort(tags.begin(), tags.end());
  return TagStream(std::move(header), std::move(tags));
}

std::vector<std::uint64_t> TagStream::channel_counts() const {
  std::vector<std::uint64_t> counts(header_.channel_count, 0);
  for (const auto& t : tags_) ++counts[t.channel];
  return counts;
}

std::vector<std::uint64_t> TagStream::channel_times(std::uint16_t channel) const {
  std::vector<std::uint64_t> out;
  for (const auto& t : tags_)
    if (t.channel == channel) out.push_back(t.timestamp);
  return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'T', 'A', 'G'};
constexpr std::uint16_t kFormatVersion = 1;

void put_u16(unsigned char* p, std::uint16_t v) {
  p[0] = v & 0xFF;
  p[1] = (v >> 8) & 0xFF;
}
void put_u64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = (v >> (8 * i)) & 0xFF;
}
std::uint16_t get_u16(const unsigned char* p) {
  return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
}
std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tags(const TagStream& stream, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open for writing: " + path.string());

  unsigned char header[32] = {0};
  std::memcpy(header, kMagic, 4);
  put_u16(header + 4, kFormatVersion);
  put_u16(header + 6, stream.channel_count());
  put_u64(header + 8, std::bit_cast<std::uint64_t>(stream.tick_ps()));
  put_u64(header + 16, stream.duration_ticks());
  f.write(reinterpret_cast<const char*>(header), sizeof(header));

  std::vector<unsigned char> buf;
  buf.reserve(1 << 20);
  unsigned char rec[16] = {0};
  for (const auto& t : stream.tags()) {
    put_u64(rec, t.timestamp);
    put_u16(rec + 8, t.channel);
    buf.insert(buf.end(), rec, rec + 16);
    if (buf.size() >= (1 << 20)) {
      f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
      buf.clear();
    }
  }
  if (!buf.empty()) f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!f) throw FormatError("write failure: " + path.string());
}

TagStream read_tags(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open: " + path.string());

  unsigned char header[32];
  f.read(reinterpret_cast<char*>(header), sizeof(header));
  if (f.gcount() != sizeof(header)) throw FormatError("truncated header: " + path.string());
  if (std::memcmp(header, kMagic, 4) != 0) throw FormatError("bad magic, not a PTAG file");
  if (get_u16(header + 4) != kFormatVersion)
    throw FormatError("unsupported PTAG version " + std::to_string(get_u16(header + 4)));

  StreamHeader h;
  h.channel_count = get_u16(header + 6);
  h.tick_ps = std::bit_cast<double>(get_u64(header + 8));
  h.duration_ticks = get_u64(header + 16);
  if (!(h.tick_ps > 0) || h.channel_count < 1) throw FormatError("malformed PTAG header fields");

  std::vector<TimeTag> tags;
  unsigned char rec[16];
  while (f.read(reinterpret_cast<char*>(rec), sizeof(rec))) {
    tags.push_back({get_u64(rec), get_u16(rec + 8)});
  }
  if (f.gcount() != 0) throw FormatError("truncated record at end of " + path.string());

  try {
    return TagStream(std::move(h), std::move(tags));
  } catch (const IntegrityError& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

TagStream merge(std::span<const TagStream> streams) {
  if (streams.empty()) return TagStream({.tick_ps = 81.0, .channel_count = 1}, {});
  StreamHeader h = streams.front().header();
  std::size_t total = 0;
  for (const auto& s : streams) {
    if (s.tick_ps() != h.tick_ps)
      throw ConfigError("merge: mismatched tick_ps across streams");
    h.channel_count = std::max(h.channel_count, s.channel_count());
    h.duration_ticks = std::max(h.duration_ticks, s.duration_ticks());
    total += s.size();
  }
  std::vector<TimeTag> all;
  all.reserve(total);
  for (const auto& s : streams) all.insert(all.end(), s.tags().begin(), s.tags().end());
  std::sort(all.begin(), all.end());
  return TagStream(std::move(h), std::move(all));
}

std::uint64_t ClickStatistics::total_counts() const {
  std::uint64_t sum = 0;
  for (auto c : pattern_counts) sum += c;
  return sum;
}

ClickStatistics window_clicks(const TagStream& stream, std::uint64_t window_ticks) {
  if (window_ticks < 1) throw ConfigError("window_ticks must be >= 1");
  if (stream.channel_count() > 16)
    throw ConfigError("window_clicks supports at most 16 channels");

  ClickStatistics stats;
  stats.window_ticks = window_ticks;
  stats.channel_count = stream.channel_count();
  stats.window_count = stream.duration_ticks() / window_ticks;
  stats.pattern_counts.assign(std::size_t(1) << stream.channel_count(), 0);

  std::uint64_t nonempty = 0;
  const auto& tags = stream.tags();
  std::size_t i = 0;
  while (i < tags.size()) {
    const std::uint64_t win = tags[i].timestamp / window_ticks;
    if (win >= stats.window_count) break;  // trailing partial window
    std::uint32_t pattern = 0;
    while (i < tags.size() && tags[i].timestamp / window_ticks == win) {
      pattern |= 1u << tags[i].channel;
      ++i;
    }
    ++stats.pattern_counts[pattern];
    ++nonempty;
  }
  stats.pattern_counts[0] = stats.window_count - nonempty;
  return stats;
}

std::vector<StreamChunk> chunks(const TagStream& stream, std::uint64_t chunk_ticks,
                                std::uint64_t halo_ticks) {
  if (chunk_ticks <= halo_ticks) throw ConfigError("chunks: need chunk_ticks > halo_ticks");
  const auto& tags = stream.tags();
  const std::uint64_t duration = stream.duration_ticks();
  const std::uint64_t n_chunks = std::max<std::uint64_t>(1, (duration + chunk_ticks - 1) / chunk_ticks);

  const auto lower = [&](std::uint64_t v) {
    return std::lower_bound(tags.begin(), tags.end(), v,
                            [](const TimeTag& t, std::uint64_t x) { return t.timestamp < x; });
  };

  std::vector<StreamChunk> out;
  out.reserve(n_chunks);
  for (std::uint64_t k = 0; k < n_chunks; ++k) {
    StreamChunk c;
    c.core_begin = k * chunk_ticks;
    const bool final_chunk = (k + 1 == n_chunks);
    // tags exactly at `duration` are legal; the final core absorbs them
    c.core_end = final_chunk ? duration + 1 : (k + 1) * chunk_ticks;
    const std::uint64_t lo = c.core_begin >= halo_ticks ? c.core_begin - halo_ticks : 0;
    auto first = lower(lo);
    auto last = final_chunk ? tags.end() : lower(c.core_end + halo_ticks);
    c.tags = std::span<const TimeTag>(tags.data() + (first - tags.begin()),
                                      std::size_t(last - first));
    out.push_back(c);
  }
  return out;
}

}  // namespace photonstat
