#pragma once

// Replay dataset D of (s, a, a*, s', r) records with a length-prefixed binary
// file format:
//
//   header : "SNREPLAY" | u32 version | u64 record count
//   record : u32 payload length | payload
//
// All integers and doubles are little-endian. The payload holds two packed
// observation digests and the scalar fields, in the order written by
// `encode_record`.

#include <bit>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "safenav/observation.hpp"
#include "safenav/world_model.hpp"

namespace safenav {

static_assert(std::endian::native == std::endian::little, "replay files assume a little-endian host");

/// Observation packed to one bit per cell.
struct ObservationDigest {
  std::uint16_t frames{0};
  std::uint16_t height{0};
  std::uint16_t width{0};
  double cell_size{0.1};
  std::vector<std::uint8_t> bits;
  Vec2 goal_rel;
  Action velocity;

  bool operator==(const ObservationDigest&) const = default;
};

inline ObservationDigest digest(const Observation& obs) {
  ObservationDigest d;
  if (obs.frames.empty()) throw ValidationError("digest: observation has no frames");
  const Costmap& first = obs.frames.front();
  d.frames = static_cast<std::uint16_t>(obs.frames.size());
  d.height = static_cast<std::uint16_t>(first.height());
  d.width = static_cast<std::uint16_t>(first.width());
  d.cell_size = first.cell_size();
  const std::size_t cells = first.size();
  d.bits.assign((cells * obs.frames.size() + 7) / 8, 0);
  std::size_t bit = 0;
  for (const auto& f : obs.frames) {
    for (std::size_t i = 0; i < cells; ++i, ++bit) {
      if (f[i]) d.bits[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  d.goal_rel = obs.goal_rel;
  d.velocity = obs.velocity;
  return d;
}

inline Observation expand(const ObservationDigest& d) {
  Observation obs;
  const CostmapParams p{d.height, d.width, d.cell_size};
  const std::size_t cells = static_cast<std::size_t>(d.height) * d.width;
  std::size_t bit = 0;
  for (int k = 0; k < d.frames; ++k) {
    Costmap f(p);
    for (std::size_t i = 0; i < cells; ++i, ++bit) {
      if (d.bits[bit / 8] & (1u << (bit % 8))) f.cells()[i] = 1;
    }
    obs.frames.push_back(std::move(f));
  }
  obs.goal_rel = d.goal_rel;
  obs.velocity = d.velocity;
  return obs;
}

struct ReplayRecord {
  ObservationDigest obs;
  Action a_nom;
  Action a_star;
  ObservationDigest next_obs;
  double r{0.0};
  double r_g{0.0};
  double r_c{0.0};
  bool done{false};

  bool operator==(const ReplayRecord&) const = default;
};

inline void validate_record(const ReplayRecord& rec) {
  for (double v : {rec.r, rec.r_g, rec.r_c, rec.a_nom.linear, rec.a_nom.angular, rec.a_star.linear, rec.a_star.angular}) {
    if (!std::isfinite(v)) throw ValidationError("replay record: non-finite field");
  }
  if (rec.r != rec.r_g + rec.r_c) throw ValidationError("replay record: r must equal r_g + r_c");
  for (const auto* d : {&rec.obs, &rec.next_obs}) {
    const std::size_t cells = static_cast<std::size_t>(d->height) * d->width * d->frames;
    if (d->frames == 0 || d->bits.size() != (cells + 7) / 8) throw ValidationError("replay record: malformed digest");
  }
}

namespace detail {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw ValidationError("replay record: truncated payload");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw ValidationError("replay record: truncated payload");
    std::vector<std::uint8_t> v(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_{0};
};

inline void put_digest(std::vector<std::uint8_t>& out, const ObservationDigest& d) {
  put(out, d.frames);
  put(out, d.height);
  put(out, d.width);
  put(out, d.cell_size);
  put(out, static_cast<std::uint32_t>(d.bits.size()));
  out.insert(out.end(), d.bits.begin(), d.bits.end());
  put(out, d.goal_rel.x);
  put(out, d.goal_rel.y);
  put(out, d.velocity.linear);
  put(out, d.velocity.angular);
}

inline ObservationDigest get_digest(Reader& in) {
  ObservationDigest d;
  d.frames = in.get<std::uint16_t>();
  d.height = in.get<std::uint16_t>();
  d.width = in.get<std::uint16_t>();
  d.cell_size = in.get<double>();
  d.bits = in.bytes(in.get<std::uint32_t>());
  d.goal_rel.x = in.get<double>();
  d.goal_rel.y = in.get<double>();
  d.velocity.linear = in.get<double>();
  d.velocity.angular = in.get<double>();
  return d;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_record(const ReplayRecord& rec) {
  std::vector<std::uint8_t> out;
  detail::put_digest(out, rec.obs);
  for (double v : {rec.a_nom.linear, rec.a_nom.angular, rec.a_star.linear, rec.a_star.angular}) detail::put(out, v);
  detail::put_digest(out, rec.next_obs);
  for (double v : {rec.r, rec.r_g, rec.r_c}) detail::put(out, v);
  detail::put(out, static_cast<std::uint8_t>(rec.done ? 1 : 0));
  return out;
}

inline ReplayRecord decode_record(std::span<const std::uint8_t> payload) {
  detail::Reader in(payload);
  ReplayRecord rec;
  rec.obs = detail::get_digest(in);
  rec.a_nom.linear = in.get<double>();
  rec.a_nom.angular = in.get<double>();
  rec.a_star.linear = in.get<double>();
  rec.a_star.angular = in.get<double>();
  rec.next_obs = detail::get_digest(in);
  rec.r = in.get<double>();
  rec.r_g = in.get<double>();
  rec.r_c = in.get<double>();
  const auto done = in.get<std::uint8_t>();
  if (done > 1) throw ValidationError("replay record: bad done flag");
  rec.done = done == 1;
  if (!in.done()) throw ValidationError("replay record: trailing bytes");
  validate_record(rec);
  return rec;
}

/// Ordered replay buffer. With a non-zero capacity the oldest records are
/// evicted first.
class ReplayDataset {
 public:
  static constexpr char kMagic[8] = {'S', 'N', 'R', 'E', 'P', 'L', 'A', 'Y'};
  static constexpr std::uint32_t kVersion = 1;

  explicit ReplayDataset(std::size_t capacity = 0) : capacity_(capacity) {}

  void append(ReplayRecord rec) {
    validate_record(rec);
    records_.push_back(std::move(rec));
    if (capacity_ > 0 && records_.size() > capacity_) records_.pop_front();
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const ReplayRecord& operator[](std::size_t i) const { return records_[i]; }

  /// `n` records drawn uniformly with replacement; fixed seed, fixed batch.
  std::vector<ReplayRecord> sample(std::size_t n, std::uint64_t seed) const {
    if (records_.empty()) throw ValidationError("replay: cannot sample from an empty dataset");
    std::mt19937_64 rng(seed);
    std::vector<ReplayRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(records_[uniform_index(rng, records_.size())]);
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("replay: cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kVersion;
    const std::uint64_t count = records_.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const auto& rec : records_) {
      const auto payload = encode_record(rec);
      const auto len = static_cast<std::uint32_t>(payload.size());
      out.write(reinterpret_cast<const char*>(&len), sizeof len);
      out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    }
    if (!out) throw std::runtime_error("replay: write failed for " + path.string());
  }

  static ReplayDataset load(const std::filesystem::path& path, std::size_t capacity = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("replay: cannot open " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t count = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ValidationError("replay: bad header in " + path.string());
    if (version != kVersion) throw ValidationError("replay: unsupported version " + std::to_string(version));
    ReplayDataset ds(capacity);
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint32_t len = 0;
      in.read(reinterpret_cast<char*>(&len), sizeof len);
      if (!in) throw ValidationError("replay: truncated file " + path.string());
      std::vector<std::uint8_t> payload(len);
      in.read(reinterpret_cast<char*>(payload.data()), len);
      if (!in) throw ValidationError("replay: truncated record in " + path.string());
      ds.append(decode_record(payload));
    }
    return ds;
  }

 private:
  std::size_t capacity_;
  std::deque<ReplayRecord> records_;
};

/// One-step transition (s, a*, newest frame of s') for world-model fitting.
inline Transition to_transition(const ReplayRecord& rec, double sim_dt) {
  Observation next = expand(rec.next_obs);
  return {expand(rec.obs), rec.a_star, next.newest(), sim_dt};
}

}  // namespace safenav
