#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypersolid/ndtensor.hpp"

namespace hypersolid::model {

using nd::Array;
using nd::Index;
using nd::NodeId;
using nd::Tape;

// MLP encoder + final linear projector. Grid inputs are patch-flattened, so
// input_dim = grid_h * grid_w when the grid dims are set.
struct EncoderConfig {
    Index input_dim = 64;
    std::vector<Index> hidden_dims = {256, 256};
    Index projector_dim = 1024;
    Index grid_h = 0;
    Index grid_w = 0;

    std::vector<Index> layer_dims() const; // [input, hidden..., projector]
    void validate() const;
};

struct Parameters {
    EncoderConfig config;
    std::vector<Array> weights; // layer l: (in_l, out_l)
    std::vector<Array> biases;  // layer l: (out_l)
    std::uint64_t init_seed = 0;

    Index layer_count() const { return weights.size(); }
    bool all_finite() const;
};

// Scaled-uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); deterministic per seed.
Parameters init(const EncoderConfig& config, std::uint64_t seed);

struct ForwardNodes {
    NodeId input = 0;
    std::vector<NodeId> weights;
    std::vector<NodeId> biases;
    NodeId output = 0; // B x V x D, pre-normalization
};

// Shared-encoder forward: every view passes through identical weights.
// views: B x V x P or B x V x H x W. Hidden layers use tanh; the final
// linear layer is the projector. Non-finite activations raise NumericError
// naming the layer.
ForwardNodes forward_on_tape(Tape& tape, const Parameters& params, const Array& views);

// Value-only convenience wrapper over a local tape.
Array forward(const Parameters& params, const Array& views);

// Checkpoint container: magic "HSCK1\n", u32 header bytes, key=value header
// lines, then one section per parameter array
// (u16 name_len, name, u32 rows, u32 cols, u8 dtype=1, f64 LE payload).
void save_checkpoint(const Parameters& params, const std::string& path);
Parameters load_checkpoint(const std::string& path);

} // namespace hypersolid::model
