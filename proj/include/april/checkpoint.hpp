#pragma once

#include <string>
#include <vector>

#include "april/graph.hpp"
#include "april/tensor.hpp"

namespace april {

// Flat ordered (name, shape, float64 values) records in a little-endian
// binary container:
//   magic "APRILCKP" | version u8 | record count u32 |
//   per record: name length u16 | name bytes | ndim u8 | dims i32... | values f64...
struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'P', 'R', 'I', 'L', 'C', 'K', 'P'};
inline constexpr unsigned char kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::string& path);

CheckpointRecord scalar_record(const std::string& name, double value);
CheckpointRecord tensor_record(const std::string& name, const Tensor& t);

const CheckpointRecord* find_record(const std::vector<CheckpointRecord>& records,
                                    const std::string& name);
// Throws if the record is missing or not a scalar.
double scalar_value(const std::vector<CheckpointRecord>& records, const std::string& name);

// Graph parameters under "<prefix>/<param name>".
void append_graph_records(std::vector<CheckpointRecord>& out, const std::string& prefix,
                          const Graph& graph);
void load_graph_records(const std::vector<CheckpointRecord>& records,
                        const std::string& prefix, Graph& graph);

}  // namespace april
