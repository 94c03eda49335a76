#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cafield/ad/checkpoint.hpp"
#include "cafield/net/config.hpp"
#include "cafield/net/input.hpp"
#include "cafield/net/layers.hpp"
#include "cafield/so3/sphere.hpp"

namespace cafield::net {

inline constexpr std::size_t kBlocks = 3;

struct HeadPParams {
  Tensor w1, b1, w2, b2, w3, b3;  // embed -> 64 -> 32 -> 3
  ad::BatchNormState bn1, bn2;
};

struct ModelParams {
  std::array<EqConvWeights, kBlocks> conv;
  std::array<NonlinearityParams, kBlocks> nonlinearity;
  Tensor embed_w;  // [(lmax+1) * C_last, embed]
  Tensor embed_b;  // [embed]
  HeadPParams head_p;
  Tensor head_e;   // [C_last, 3M], no bias
};

struct ModelOutputs {
  std::vector<Tensor> features;  // per block, [points, (lmax+1)², C]
  Tensor pooled;                 // [(lmax+1)², C_last]
  Tensor h;                      // [queries, embed]
  Tensor p;                      // [queries, 3]
  std::vector<Tensor> e;         // M tensors [3, 3]
};

struct ForwardOptions {
  bool training = false;
  bool nonlinearity = true;  // false skips the sphere-domain blocks
};

/// Type-1 coefficient block [3, C] (m = -1, 0, 1) to xyz rows.
Tensor type1_rows_to_xyz(const Tensor& block);

Tensor head_p(const Tensor& h, HeadPParams& params, bool training);

/// Column block j of the mixed type-1 features, in xyz rows.
std::vector<Tensor> head_e(const Tensor& pooled, const Tensor& w, std::size_t candidates);

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const ConvPaths& paths(std::size_t block) const { return paths_[block]; }

  ModelOutputs forward(const NetInput& input, const ForwardOptions& opt = {});

  /// Trainable tensors (batch-norm running statistics excluded).
  std::vector<Tensor> parameters();

  ad::Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const ad::Checkpoint& ckpt);
  void save(const std::filesystem::path& manifest) const;
  static Model load(const std::filesystem::path& manifest);

 private:
  ModelConfig cfg_;
  std::array<ConvPaths, kBlocks> paths_;
  std::shared_ptr<const so3::SphereSampling> sampling_;
  ModelParams params_;
};

}  // namespace cafield::net
