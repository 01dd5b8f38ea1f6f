#include "ug2/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ug2/rng.hpp"

namespace ug2 {

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "precomputed") return EncoderKind::precomputed;
  if (s == "hash-text") return EncoderKind::hash_text;
  if (s == "image-stub") return EncoderKind::image_stub;
  throw ConfigError("unknown encoder kind '" + s +
                    "' (precomputed|hash-text|image-stub)");
}

const char* encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::precomputed: return "precomputed";
    case EncoderKind::hash_text: return "hash-text";
    case EncoderKind::image_stub: return "image-stub";
  }
  return "?";
}

namespace {

// Fixed projection: entries ~ N(0,1), applied as x P / sqrt(src_cols).
std::vector<float> frozen_projection(uint64_t seed, const std::string& name,
                                     uint32_t src, uint32_t dst) {
  Rng rng(mix_seed(mix_seed(seed, hash_str(name)), src));
  std::vector<float> p(size_t(src) * dst);
  for (float& v : p) v = float(rng.normal());
  return p;
}

FeatureMatrix project(const FeatureMatrix& in, uint64_t seed,
                      const std::string& name, uint32_t out_dim) {
  auto p = frozen_projection(seed, name, in.cols, out_dim);
  const double scale = 1.0 / std::sqrt(double(in.cols));
  FeatureMatrix out;
  out.rows = in.rows;
  out.cols = out_dim;
  out.data.assign(size_t(in.rows) * out_dim, 0.0f);
  for (uint32_t i = 0; i < in.rows; ++i) {
    for (uint32_t k = 0; k < in.cols; ++k) {
      const double x = in.at(i, k);
      if (x == 0.0) continue;
      const float* pr = &p[size_t(k) * out_dim];
      float* o = &out.data[size_t(i) * out_dim];
      for (uint32_t j = 0; j < out_dim; ++j) o[j] += float(x * scale * pr[j]);
    }
  }
  return out;
}

void l2_normalize_rows(FeatureMatrix& fm) {
  for (uint32_t i = 0; i < fm.rows; ++i) {
    double sq = 0.0;
    for (uint32_t j = 0; j < fm.cols; ++j) {
      const double v = fm.at(i, j);
      sq += v * v;
    }
    if (sq <= 0.0) continue;  // zero rows stay zero
    const float inv = float(1.0 / std::sqrt(sq));
    for (uint32_t j = 0; j < fm.cols; ++j) fm.data[size_t(i) * fm.cols + j] *= inv;
  }
}

FeatureMatrix encode_text(const std::vector<std::string>& lines,
                          const ModalityEncoder& enc) {
  FeatureMatrix out;
  out.rows = uint32_t(lines.size());
  out.cols = enc.out_dim;
  out.data.assign(size_t(out.rows) * out.cols, 0.0f);
  for (uint32_t i = 0; i < out.rows; ++i) {
    std::istringstream ss(lines[i]);
    std::string tok;
    while (ss >> tok) {
      const uint64_t h = hash_str(tok);
      const uint32_t bucket = uint32_t(h % enc.out_dim);
      // independent sign hash
      const uint64_t h2 = mix_seed(h, 0x5167);
      const float sign = (h2 & 1) ? 1.0f : -1.0f;
      out.data[size_t(i) * out.cols + bucket] += sign;
    }
  }
  l2_normalize_rows(out);
  return out;
}

FeatureMatrix encode_image_stub(const FeatureMatrix& raw,
                                const ModalityEncoder& enc) {
  constexpr uint32_t kBins = 16;
  if (enc.channels == 0 || raw.cols % enc.channels != 0)
    throw ConfigError("image-stub: row width " + std::to_string(raw.cols) +
                      " not divisible by " + std::to_string(enc.channels) +
                      " channels");
  const uint32_t pixels = raw.cols / enc.channels;
  FeatureMatrix hist;
  hist.rows = raw.rows;
  hist.cols = kBins * enc.channels;
  hist.data.assign(size_t(hist.rows) * hist.cols, 0.0f);
  for (uint32_t i = 0; i < raw.rows; ++i) {
    for (uint32_t ch = 0; ch < enc.channels; ++ch) {
      float* h = &hist.data[size_t(i) * hist.cols + size_t(ch) * kBins];
      for (uint32_t px = 0; px < pixels; ++px) {
        double v = raw.at(i, ch * pixels + px);
        v = std::clamp(v, 0.0, 1.0);
        uint32_t bin = std::min(uint32_t(v * kBins), kBins - 1);
        h[bin] += 1.0f / float(pixels);
      }
    }
  }
  auto out = project(hist, enc.seed, enc.name, enc.out_dim);
  l2_normalize_rows(out);
  return out;
}

}  // namespace

FeatureMatrix ModalityEncoder::encode(const RawFeatures& raw) const {
  if (out_dim == 0) throw ConfigError("encoder '" + name + "': out_dim must be positive");
  switch (kind) {
    case EncoderKind::precomputed: {
      const auto* fm = std::get_if<FeatureMatrix>(&raw);
      if (!fm)
        throw ConfigError("encoder '" + name +
                          "': precomputed kind expects numeric features");
      if (fm->cols == out_dim) return *fm;
      return project(*fm, seed, name, out_dim);
    }
    case EncoderKind::hash_text: {
      const auto* lines = std::get_if<std::vector<std::string>>(&raw);
      if (!lines)
        throw ConfigError("encoder '" + name +
                          "': hash-text kind expects text lines");
      return encode_text(*lines, *this);
    }
    case EncoderKind::image_stub: {
      const auto* fm = std::get_if<FeatureMatrix>(&raw);
      if (!fm)
        throw ConfigError("encoder '" + name +
                          "': image-stub kind expects numeric pixel rows");
      return encode_image_stub(*fm, *this);
    }
  }
  throw ConfigError("encoder '" + name + "': unknown kind");
}

FeatureMatrix fuse_modalities(const MultimodalGraph& g,
                              const std::vector<FeatureMatrix>& encoded) {
  if (encoded.size() != g.modalities.size())
    throw ContractError("fuse_modalities: encoded count mismatch");
  const uint32_t n = g.graph.num_nodes;
  uint32_t d = 0;
  for (const auto& e : encoded) {
    if (e.rows != n) throw ContractError("fuse_modalities: row count mismatch");
    if (d == 0) d = e.cols;
    if (e.cols != d)
      throw ContractError("fuse_modalities: encoded widths differ (" +
                          std::to_string(e.cols) + " vs " + std::to_string(d) + ")");
  }
  FeatureMatrix out;
  out.rows = n;
  out.cols = d;
  out.data.assign(size_t(n) * d, 0.0f);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t present = 0;
    float* o = &out.data[size_t(i) * d];
    for (size_t m = 0; m < encoded.size(); ++m) {
      if (!g.modalities[m].presence[i]) continue;
      ++present;
      const float* r = &encoded[m].data[size_t(i) * d];
      for (uint32_t j = 0; j < d; ++j) o[j] += r[j];
    }
    if (present == 0)
      throw ValidationError("fuse_modalities: node " + std::to_string(i) +
                            " has no present modality");
    const float inv = 1.0f / float(present);
    for (uint32_t j = 0; j < d; ++j) o[j] *= inv;
  }
  return out;
}

FeatureMatrix encode_and_fuse(const MultimodalGraph& g,
                              const std::vector<ModalityEncoder>& encoders,
                              uint32_t out_dim, uint64_t seed) {
  std::vector<FeatureMatrix> encoded;
  for (const auto& m : g.modalities) {
    const ModalityEncoder* spec = nullptr;
    for (const auto& e : encoders)
      if (e.name == m.name) spec = &e;
    ModalityEncoder fallback;
    if (!spec) {
      fallback.name = m.name;
      fallback.kind = EncoderKind::precomputed;
      fallback.out_dim = out_dim;
      fallback.seed = seed;
      spec = &fallback;
    }
    if (spec->out_dim != out_dim)
      throw ConfigError("encoder '" + spec->name + "' out_dim " +
                        std::to_string(spec->out_dim) + " != common width " +
                        std::to_string(out_dim));
    encoded.push_back(spec->encode(m.raw));
  }
  return fuse_modalities(g, encoded);
}

}  // namespace ug2
