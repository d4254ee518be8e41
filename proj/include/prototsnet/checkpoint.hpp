#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prototsnet/model.hpp"

namespace prototsnet {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "PTSNCKPT", u32 version, u64 manifest size, JSON manifest, blob.
// Parameter arrays are little-endian float32 in the blob at the offsets the
// manifest lists; mask bits are stored packed.
std::vector<std::uint8_t> serialize_model(const ProtoTSNetModel& model);
ProtoTSNetModel deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ProtoTSNetModel& model, const std::string& path);
ProtoTSNetModel load_checkpoint(const std::string& path);

// The JSON manifest of a serialized model, for inspection.
std::string checkpoint_manifest(const std::vector<std::uint8_t>& bytes);

}  // namespace prototsnet
