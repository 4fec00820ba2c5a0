#ifndef ESGLM_CHECKPOINT_HPP
#define ESGLM_CHECKPOINT_HPP

#include "esglm/encoder.hpp"

#include <cstdint>
#include <string>

namespace esglm {

inline constexpr char kCheckpointMagic[4] = {'E', 'S', 'G', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Stage { Pretrained, FinetunedA, FinetunedB };

const char* to_string(Stage stage);
Stage parse_stage(const std::string& s);

struct CheckpointMeta {
    Stage stage = Stage::Pretrained;
    std::uint64_t seed = 0;
    TrainConfig train;
};

struct Checkpoint {
    ModelConfig config;
    ParameterSet params;
    CheckpointMeta meta;
};

// Layout (all integers little-endian):
//   "ESGB" | u32 version | u32 n + JSON metadata (model config, stage, seed,
//   train config) | u32 tensor count | per tensor: u32 n + name, u8 dtype
//   (1 = f32), u32 rank, u64 dims[rank], f32 payload.
// Tensors appear in ParameterSet::for_each order.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

} // namespace esglm

#endif // ESGLM_CHECKPOINT_HPP
