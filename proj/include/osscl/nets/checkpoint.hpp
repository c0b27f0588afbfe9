#pragma once

#include <filesystem>

#include "osscl/nets/encoder_projector.hpp"

namespace osscl::nets {

// Flat binary checkpoint, all integers and floats little-endian:
//
//   magic        8 bytes  "OSSCLNET"
//   version      u32      1
//   conv_stem    u32      0 or 1
//   input_dim    u32
//   n_encoder    u32      followed by n_encoder u32 widths
//   proj_hidden  u32
//   embed_dim    u32
//   n_params     u32      followed, per parameter tensor, by
//                         u32 element count and that many f32 values
//
// Parameter order is EncoderProjector::parameters().
void save_checkpoint(const EncoderProjector<float>& net, const std::filesystem::path& path);
EncoderProjector<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace osscl::nets
