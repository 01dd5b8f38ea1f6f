#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ug2/graph.hpp"

namespace ug2 {

enum class EncoderKind { precomputed, hash_text, image_stub };

EncoderKind parse_encoder_kind(const std::string& s);
const char* encoder_kind_name(EncoderKind k);

/// Frozen modality-specific encoder mapping raw per-modality data to a
/// common input width. Pure function of (spec, input); nothing here is ever
/// trained. Source widths that differ from out_dim go through a fixed
/// random projection derived from (seed, modality name, source width).
struct ModalityEncoder {
  std::string name;
  EncoderKind kind = EncoderKind::precomputed;
  uint32_t out_dim = 32;
  uint32_t channels = 3;  // image_stub: channel blocks per row
  uint64_t seed = 0;

  FeatureMatrix encode(const RawFeatures& raw) const;
};

/// Per-node arithmetic mean of encoded rows over the node's present
/// modalities. `encoded` is ordered like g.modalities.
FeatureMatrix fuse_modalities(const MultimodalGraph& g,
                              const std::vector<FeatureMatrix>& encoded);

/// encode() every modality of g with its matching encoder (matched by name;
/// a missing name falls back to a precomputed encoder with out_dim), then
/// fuse. The common entry point for training and inference.
FeatureMatrix encode_and_fuse(const MultimodalGraph& g,
                              const std::vector<ModalityEncoder>& encoders,
                              uint32_t out_dim, uint64_t seed);

}  // namespace ug2
