#pragma once

#include <string>

#include "pedgen/nn.hpp"
#include "pedgen/tensor.hpp"

namespace pedgen {

// Spatial feature map flattened to region vectors: values is (channels, N)
// with region u at column u, regions ordered row-major over (height, width).
struct RegionFeatureGrid {
  Tensor values;  // (channels, N)
  int height = 0;
  int width = 0;

  int regions() const { return height * width; }
  int channels() const { return values.defined() ? values.dim(0) : 0; }
  void validate() const;  // N == height*width, finite entries
};

RegionFeatureGrid grid_from_chw(const Tensor& chw);            // (C,H,W) -> grid
Tensor grid_to_chw(const RegionFeatureGrid& g);                // grid -> (C,H,W)

// Words-to-regions attention. Scores are bilinear through a single learned
// projection of words into region space, which is also used for the context
// sum, so the residual addition is well-typed for any word dimension.
//
//   score(u,t) = rho_u . (P w_t)
//   alpha      = row-softmax over t            (N x T, rows sum to 1)
//   out_u      = rho_u + sum_t alpha(u,t) P w_t
struct VisaParams {
  Tensor projection;  // (region_dim, word_dim)

  VisaParams() = default;
  VisaParams(int region_dim, int word_dim, Rng& rng, ParamMap& params, const std::string& name);
};

struct VisaResult {
  RegionFeatureGrid grid;
  Tensor attention;  // (N, T) row-stochastic
};

VisaResult visa_attend(const RegionFeatureGrid& regions, const Tensor& words,
                       const VisaParams& params);
// Ablation path: attention fixed at 1/T, same context projection.
VisaResult visa_attend_uniform(const RegionFeatureGrid& regions, const Tensor& words,
                               const VisaParams& params);

// Region-to-region attention whose key/query/value maps consume the region
// feature concatenated with the sentence vector.
//
//   c(u,v)    = K([rho_u; s]) . Q([rho_v; s])
//   beta(v,u) = softmax over u of c(u,v)       (N x N, rows sum to 1)
//   o_v       = Wz sum_u beta(v,u) V([rho_u; s])
//   out       = rho + gamma * o                (gamma learned, init 0)
struct ScaParams {
  Tensor key;    // (region_dim + sentence_dim, key_dim)
  Tensor query;  // (region_dim + sentence_dim, key_dim)
  Tensor value;  // (region_dim + sentence_dim, value_dim)
  Tensor out;    // (region_dim, value_dim)
  Tensor gamma;  // scalar

  ScaParams() = default;
  ScaParams(int region_dim, int sentence_dim, Rng& rng, ParamMap& params, const std::string& name);
  // key/value dims follow the region dimension: key_dim = max(1, region_dim/8),
  // value_dim = max(1, region_dim/2).
};

struct ScaResult {
  RegionFeatureGrid grid;
  Tensor attention;  // (N, N) rows indexed by target region v
};

ScaResult sca_attend(const RegionFeatureGrid& regions, const Tensor& sentence,
                     const ScaParams& params);

// Row-major float32 blob with a two-u32 header (rows, cols); the exchange
// format for attention maps.
void write_attention_blob(const Tensor& map, const std::string& path);
Tensor read_attention_blob(const std::string& path);

}  // namespace pedgen
