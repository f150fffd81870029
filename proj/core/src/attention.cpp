#include "pedgen/attention.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

#include "pedgen/common.hpp"

namespace pedgen {

void RegionFeatureGrid::validate() const {
  if (!values.defined() || values.shape().size() != 2)
    throw ContractError("RegionFeatureGrid: values must be a (channels, N) matrix");
  if (values.dim(1) != height * width)
    throw ContractError("RegionFeatureGrid: N=" + std::to_string(values.dim(1)) +
                        " != height*width=" + std::to_string(height * width));
  check_finite(values, "RegionFeatureGrid");
}

RegionFeatureGrid grid_from_chw(const Tensor& chw) {
  if (chw.shape().size() != 3) throw ContractError("grid_from_chw: (C,H,W) expected");
  RegionFeatureGrid g;
  g.height = chw.dim(1);
  g.width = chw.dim(2);
  g.values = reshape(chw, {chw.dim(0), g.height * g.width});
  return g;
}

Tensor grid_to_chw(const RegionFeatureGrid& g) {
  return reshape(g.values, {g.values.dim(0), g.height, g.width});
}

VisaParams::VisaParams(int region_dim, int word_dim, Rng& rng, ParamMap& params,
                       const std::string& name) {
  projection = params.add(name + ".proj", scaled_init({region_dim, word_dim}, word_dim, rng));
}

namespace {

void check_visa_inputs(const RegionFeatureGrid& regions, const Tensor& words,
                       const VisaParams& params) {
  if (words.shape().size() != 2) throw InputError("visa_attend: words must be (word_dim, T)");
  if (!params.projection.defined()) throw InputError("visa_attend: params not initialized");
  if (params.projection.dim(1) != words.dim(0))
    throw InputError("visa_attend: projection expects word_dim " +
                     std::to_string(params.projection.dim(1)) + ", got " +
                     std::to_string(words.dim(0)));
  if (params.projection.dim(0) != regions.values.dim(0))
    throw InputError("visa_attend: projection maps to region_dim " +
                     std::to_string(params.projection.dim(0)) + ", grid has " +
                     std::to_string(regions.values.dim(0)));
}

}  // namespace

VisaResult visa_attend(const RegionFeatureGrid& regions, const Tensor& words,
                       const VisaParams& params) {
  check_visa_inputs(regions, words, params);
  Tensor projected = matmul(params.projection, words);        // (C, T)
  Tensor scores = matmul(transpose(regions.values), projected);  // (N, T)
  Tensor alpha = softmax_rows(scores);                         // (N, T)
  Tensor context = matmul(projected, transpose(alpha));        // (C, N)
  VisaResult res;
  res.grid.values = add(regions.values, context);
  res.grid.height = regions.height;
  res.grid.width = regions.width;
  res.attention = alpha;
  return res;
}

VisaResult visa_attend_uniform(const RegionFeatureGrid& regions, const Tensor& words,
                               const VisaParams& params) {
  check_visa_inputs(regions, words, params);
  const int n = regions.regions();
  const int t = words.dim(1);
  Tensor alpha = Tensor::full({n, t}, 1.0 / t);
  // Context collapses to the mean projected word, identical for every region.
  Tensor projected = matmul(params.projection.detach(), words);  // frozen projection
  Tensor context = matmul(projected, transpose(alpha));          // (C, N)
  VisaResult res;
  res.grid.values = add(regions.values, context);
  res.grid.height = regions.height;
  res.grid.width = regions.width;
  res.attention = alpha;
  return res;
}

ScaParams::ScaParams(int region_dim, int sentence_dim, Rng& rng, ParamMap& params,
                     const std::string& name) {
  const int in_dim = region_dim + sentence_dim;
  const int key_dim = std::max(1, region_dim / 8);
  const int value_dim = std::max(1, region_dim / 2);
  key = params.add(name + ".k", scaled_init({in_dim, key_dim}, in_dim, rng));
  query = params.add(name + ".q", scaled_init({in_dim, key_dim}, in_dim, rng));
  value = params.add(name + ".v", scaled_init({in_dim, value_dim}, in_dim, rng));
  out = params.add(name + ".z", scaled_init({region_dim, value_dim}, value_dim, rng));
  gamma = params.add(name + ".gamma", zeros_init({1}));
}

ScaResult sca_attend(const RegionFeatureGrid& regions, const Tensor& sentence,
                     const ScaParams& params) {
  if (sentence.shape().size() != 1) throw InputError("sca_attend: sentence must be 1-D");
  if (!params.key.defined()) throw InputError("sca_attend: params not initialized");
  const int n = regions.regions();
  const int region_dim = regions.values.dim(0);
  if (params.key.dim(0) != region_dim + sentence.dim(0))
    throw InputError("sca_attend: K expects dim " + std::to_string(params.key.dim(0)) +
                     ", inputs give " + std::to_string(region_dim + sentence.dim(0)));

  Tensor joint = concat({regions.values, broadcast_cols(sentence, n)}, 0);  // (C+S, N)
  Tensor keys = matmul(transpose(params.key), joint);      // (dk, N)
  Tensor queries = matmul(transpose(params.query), joint);  // (dk, N)
  Tensor values = matmul(transpose(params.value), joint);   // (dv, N)

  Tensor scores = matmul(transpose(keys), queries);  // (N, N), entry (u,v) = K_u . Q_v
  check_finite(scores, "sca_attend scores");
  Tensor beta = softmax_rows(transpose(scores));     // (N, N), row v normalizes over sources u
  Tensor attended = matmul(values, transpose(beta));  // (dv, N), column v
  Tensor o = matmul(params.out, attended);            // (C, N)

  ScaResult res;
  res.grid.values = add(regions.values, scale_by(o, params.gamma));
  res.grid.height = regions.height;
  res.grid.width = regions.width;
  res.attention = beta;
  return res;
}

void write_attention_blob(const Tensor& map, const std::string& path) {
  if (map.shape().size() != 2) throw ContractError("write_attention_blob: 2-D map expected");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_attention_blob: cannot open " + path);
  const uint32_t rows = static_cast<uint32_t>(map.dim(0));
  const uint32_t cols = static_cast<uint32_t>(map.dim(1));
  os.write(reinterpret_cast<const char*>(&rows), 4);
  os.write(reinterpret_cast<const char*>(&cols), 4);
  std::vector<float> buf(map.values().begin(), map.values().end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("write_attention_blob: short write to " + path);
}

Tensor read_attention_blob(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_attention_blob: cannot open " + path);
  uint32_t rows = 0, cols = 0;
  is.read(reinterpret_cast<char*>(&rows), 4);
  is.read(reinterpret_cast<char*>(&cols), 4);
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw IoError("read_attention_blob: truncated file " + path);
  std::vector<double> vals(buf.begin(), buf.end());
  return Tensor::leaf({static_cast<int>(rows), static_cast<int>(cols)}, std::move(vals));
}

}  // namespace pedgen
