#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "dncl/tensor.hpp"

namespace dncl::ckpt {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NamedTensor {
    std::string name;
    tensor::Shape shape;
    std::vector<double> data; // held as f64 in memory, serialized as f32
};

struct Checkpoint {
    nlohmann::json header; // config, vocab, hashes, step count
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
};

// Layout: "DNCL" | u32 version | u64 header_len | header JSON |
// u64 entry_count | entries(name_len u64, name, rank u32, dims u64[rank],
// f32 data). All integers little-endian.
constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Round a live f64 buffer to its f32 image so that save -> load is exact.
void quantize_f32(std::vector<double>& v);

} // namespace dncl::ckpt
