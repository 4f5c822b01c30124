#include "april/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace april {

namespace {

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return value;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint8_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const CheckpointRecord& rec : records) {
    if (rec.name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: record name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(rec.name.size()));
    out.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.shape.size()));
    long n = 1;
    for (int d : rec.shape) {
      put<std::int32_t>(out, d);
      n *= d;
    }
    if (n != static_cast<long>(rec.values.size()))
      throw std::invalid_argument("checkpoint: record '" + rec.name + "' value count mismatch");
    out.write(reinterpret_cast<const char*>(rec.values.data()),
              static_cast<std::streamsize>(rec.values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::vector<CheckpointRecord> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' has the wrong magic header");
  const auto version = get<std::uint8_t>(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in);
  std::vector<CheckpointRecord> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    const auto name_len = get<std::uint16_t>(in);
    rec.name.resize(name_len);
    in.read(rec.name.data(), name_len);
    const auto ndim = get<std::uint8_t>(in);
    long n = 1;
    for (int d = 0; d < ndim; ++d) {
      rec.shape.push_back(get<std::int32_t>(in));
      n *= rec.shape.back();
    }
    if (n < 0) throw std::runtime_error("checkpoint: corrupt record shape");
    rec.values.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(rec.values.data()),
            static_cast<std::streamsize>(rec.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated record '" + rec.name + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

CheckpointRecord scalar_record(const std::string& name, double value) {
  return {name, {1}, {value}};
}

CheckpointRecord tensor_record(const std::string& name, const Tensor& t) {
  CheckpointRecord rec;
  rec.name = name;
  rec.shape = t.shape();
  rec.values.assign(t.data(), t.data() + t.size());
  return rec;
}

const CheckpointRecord* find_record(const std::vector<CheckpointRecord>& records,
                                    const std::string& name) {
  for (const CheckpointRecord& rec : records)
    if (rec.name == name) return &rec;
  return nullptr;
}

double scalar_value(const std::vector<CheckpointRecord>& records, const std::string& name) {
  const CheckpointRecord* rec = find_record(records, name);
  if (rec == nullptr || rec->values.size() != 1)
    throw std::runtime_error("checkpoint: missing scalar record '" + name + "'");
  return rec->values[0];
}

void append_graph_records(std::vector<CheckpointRecord>& out, const std::string& prefix,
                          const Graph& graph) {
  for (const Param& p : graph.params())
    out.push_back(tensor_record(prefix + "/" + p.name, p.value));
}

void load_graph_records(const std::vector<CheckpointRecord>& records,
                        const std::string& prefix, Graph& graph) {
  for (Param& p : graph.params()) {
    const CheckpointRecord* rec = find_record(records, prefix + "/" + p.name);
    if (rec == nullptr)
      throw std::runtime_error("checkpoint: missing record '" + prefix + "/" + p.name + "'");
    if (rec->shape != p.value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + prefix + "/" + p.name +
                               "': file has " + shape_str(rec->shape) + ", graph expects " +
                               shape_str(p.value.shape()));
    for (long k = 0; k < p.value.size(); ++k) p.value[k] = rec->values[static_cast<std::size_t>(k)];
  }
}

}  // namespace april
