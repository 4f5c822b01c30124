#include "april/replay.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "replay dump assumes a little-endian host");

namespace april {

namespace {

constexpr char kDumpMagic[8] = {'A', 'P', 'R', 'L', 'R', 'P', 'B', 'F'};
constexpr std::uint8_t kDumpVersion = 1;

std::vector<std::uint8_t> encode_image(const Tensor& img) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(img.size()));
  for (long i = 0; i < img.size(); ++i) {
    const double v = img[i];
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("replay: observation value outside [0,1]");
    const double scaled = v * 255.0;
    const double rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > 1e-9)
      throw std::invalid_argument(
          "replay: observation is not on the renderer's 8-bit grid (malformed transition)");
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(rounded);
  }
  return out;
}

Tensor decode_image(const std::vector<std::uint8_t>& bytes, int h, int w) {
  Tensor img({h, w, 3});
  for (long i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]) / 255.0;
  return img;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("replay: truncated dump file");
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("replay: capacity must be positive");
}

ReplayBuffer::ReplayBuffer(ReplayBuffer&& other) noexcept
    : capacity_(other.capacity_),
      ring_(std::move(other.ring_)),
      head_(other.head_),
      appended_(other.appended_),
      state_count_(other.state_count_),
      obs_count_(other.obs_count_),
      height_(other.height_),
      width_(other.width_),
      map_count_(other.map_count_),
      state_dim_(other.state_dim_) {}

ReplayBuffer::Encoded ReplayBuffer::encode(const Transition& t) const {
  if (t.o.ndim() != 3 || t.o.dim(2) != 3 || !t.o_next.same_shape(t.o))
    throw std::invalid_argument("replay: observations must be matching {H,W,3} tensors");
  if (t.s.size() != t.s_next.size() || t.s.size() == 0)
    throw std::invalid_argument("replay: state vectors must be non-empty and matching");
  if (!t.s.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r) ||
      !t.a.allFinite())
    throw std::invalid_argument("replay: non-finite transition payload");
  if (state_dim_ >= 0) {
    if (t.s.size() != state_dim_ || t.o.dim(0) != height_ || t.o.dim(1) != width_ ||
        t.z.count() != map_count_)
      throw std::invalid_argument("replay: transition shape differs from buffer contents");
  }
  if (t.z.count() > 0 && (t.z.height() != t.o.dim(0) || t.z.width() != t.o.dim(1)))
    throw std::invalid_argument("replay: segmentation maps do not match the image size");
  Encoded e;
  e.s = t.s;
  e.s_next = t.s_next;
  e.o = encode_image(t.o);
  e.o_next = encode_image(t.o_next);
  e.z = t.z;
  e.a = t.a;
  e.r = t.r;
  e.done = t.done;
  e.source = t.source;
  return e;
}

Transition ReplayBuffer::decode(const Encoded& e) const {
  Transition t;
  t.s = e.s;
  t.s_next = e.s_next;
  t.o = decode_image(e.o, height_, width_);
  t.o_next = decode_image(e.o_next, height_, width_);
  t.z = e.z;
  t.a = e.a;
  t.r = e.r;
  t.done = e.done;
  t.source = e.source;
  return t;
}

void ReplayBuffer::append(const Transition& t) {
  Encoded e = encode(t);
  std::lock_guard<std::mutex> lock(mutex_);
  if (state_dim_ < 0) {
    state_dim_ = t.s.size();
    height_ = t.o.dim(0);
    width_ = t.o.dim(1);
    map_count_ = t.z.count();
  }
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(e));
  } else {
    ring_[head_] = std::move(e);
    head_ = (head_ + 1) % capacity_;
  }
  ++appended_;
  if (t.source == AgentSource::kState)
    ++state_count_;
  else
    ++obs_count_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return ring_.size();
}

std::size_t ReplayBuffer::physical_index(std::size_t age_index) const {
  return ring_.size() < capacity_ ? age_index : (head_ + age_index) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (ring_.empty())
    throw std::logic_error("replay: cannot sample from an empty buffer");
  std::vector<Transition> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto idx = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(ring_.size())));
    out.push_back(decode(ring_[idx]));
  }
  return out;
}

Transition ReplayBuffer::at(std::size_t index) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (index >= ring_.size()) throw std::out_of_range("replay: index past buffer size");
  return decode(ring_[physical_index(index)]);
}

std::pair<long, long> ReplayBuffer::source_counts() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return {state_count_, obs_count_};
}

long ReplayBuffer::total_appended() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return appended_;
}

void ReplayBuffer::dump(const std::string& path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("replay: cannot open '" + path + "' for writing");
  out.write(kDumpMagic, sizeof(kDumpMagic));
  put<std::uint8_t>(out, kDumpVersion);
  put<std::uint64_t>(out, capacity_);
  put<std::uint64_t>(out, ring_.size());
  put<std::int64_t>(out, appended_);
  put<std::int64_t>(out, state_count_);
  put<std::int64_t>(out, obs_count_);
  put<std::int32_t>(out, height_);
  put<std::int32_t>(out, width_);
  put<std::int32_t>(out, map_count_);
  put<std::int64_t>(out, state_dim_);
  for (std::size_t i = 0; i < ring_.size(); ++i) {
    const Encoded& e = ring_[physical_index(i)];  // oldest first
    out.write(reinterpret_cast<const char*>(e.s.data()),
              static_cast<std::streamsize>(sizeof(double) * e.s.size()));
    out.write(reinterpret_cast<const char*>(e.s_next.data()),
              static_cast<std::streamsize>(sizeof(double) * e.s_next.size()));
    out.write(reinterpret_cast<const char*>(e.o.data()), static_cast<std::streamsize>(e.o.size()));
    out.write(reinterpret_cast<const char*>(e.o_next.data()),
              static_cast<std::streamsize>(e.o_next.size()));
    for (const BitMask& m : e.z.maps)
      out.write(reinterpret_cast<const char*>(m.words().data()),
                static_cast<std::streamsize>(sizeof(std::uint64_t) * m.words().size()));
    put<double>(out, e.a.x());
    put<double>(out, e.a.y());
    put<double>(out, e.r);
    put<std::uint8_t>(out, e.done ? 1 : 0);
    put<std::uint8_t>(out, e.source == AgentSource::kState ? 0 : 1);
  }
  if (!out) throw std::runtime_error("replay: write failed for '" + path + "'");
}

ReplayBuffer ReplayBuffer::restore(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("replay: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDumpMagic, sizeof(magic)) != 0)
    throw std::runtime_error("replay: '" + path + "' has the wrong magic header");
  const auto version = get<std::uint8_t>(in);
  if (version != kDumpVersion)
    throw std::runtime_error("replay: unsupported dump version " + std::to_string(version));
  ReplayBuffer buf(get<std::uint64_t>(in));
  const auto count = get<std::uint64_t>(in);
  buf.appended_ = get<std::int64_t>(in);
  buf.state_count_ = get<std::int64_t>(in);
  buf.obs_count_ = get<std::int64_t>(in);
  buf.height_ = get<std::int32_t>(in);
  buf.width_ = get<std::int32_t>(in);
  buf.map_count_ = get<std::int32_t>(in);
  buf.state_dim_ = get<std::int64_t>(in);
  const long pixels = static_cast<long>(buf.height_) * buf.width_ * 3;
  const std::size_t words = (static_cast<std::size_t>(buf.height_) * buf.width_ + 63) / 64;
  for (std::uint64_t i = 0; i < count; ++i) {
    Encoded e;
    e.s.resize(buf.state_dim_);
    e.s_next.resize(buf.state_dim_);
    in.read(reinterpret_cast<char*>(e.s.data()),
            static_cast<std::streamsize>(sizeof(double) * buf.state_dim_));
    in.read(reinterpret_cast<char*>(e.s_next.data()),
            static_cast<std::streamsize>(sizeof(double) * buf.state_dim_));
    e.o.resize(static_cast<std::size_t>(pixels));
    e.o_next.resize(static_cast<std::size_t>(pixels));
    in.read(reinterpret_cast<char*>(e.o.data()), pixels);
    in.read(reinterpret_cast<char*>(e.o_next.data()), pixels);
    e.z.maps.assign(static_cast<std::size_t>(buf.map_count_), BitMask(buf.height_, buf.width_));
    for (BitMask& m : e.z.maps)
      in.read(reinterpret_cast<char*>(m.words().data()),
              static_cast<std::streamsize>(sizeof(std::uint64_t) * words));
    e.a.x() = get<double>(in);
    e.a.y() = get<double>(in);
    e.r = get<double>(in);
    e.done = get<std::uint8_t>(in) != 0;
    e.source = get<std::uint8_t>(in) == 0 ? AgentSource::kState : AgentSource::kObs;
    if (!in) throw std::runtime_error("replay: truncated dump record");
    buf.ring_.push_back(std::move(e));
  }
  return buf;
}

}  // namespace april
