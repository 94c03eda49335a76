#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cafield/ad/optim.hpp"
#include "cafield/field/grid.hpp"
#include "cafield/field/provider.hpp"
#include "cafield/net/model.hpp"
#include "cafield/so3/rotation.hpp"

namespace cafield::canon {

using ad::Tensor;
using so3::Mat3;
using Vec3 = Eigen::Vector3d;

struct ForegroundMask {
  std::vector<std::size_t> cells;  // ascending flat grid indices
};

/// Two-cluster 1D k-means on the grid values; the higher-mean cluster.
/// Throws DegenerateInputError on a constant field.
ForegroundMask foreground_cluster(const field::DensityGrid& grid, std::uint64_t seed = 0);

struct Selection {
  std::size_t index = 0;
  Mat3 e = Mat3::Identity();  // the raw winning candidate
  double residual = 0.0;      // mean_i |X_i - E P_i|²
};

/// Candidate minimizing mean_i |X_i - E_j P_i|², lowest index on ties.
Selection select_best_transform(const std::vector<Vec3>& x, const std::vector<Vec3>& p,
                                const std::vector<Mat3>& e);

/// mean_i |X_i - E P_i|² with X, P as [N, 3] and E as [3, 3].
Tensor loss_canon(const Tensor& x, const Tensor& p, const Tensor& e);

/// (1/M) sum_j |E_j - U_j V_jᵀ|_F with the SVD factors held constant.
Tensor loss_ortho(const std::vector<Tensor>& e);

/// Symmetric Chamfer distance between two [N, 3] sets with nearest
/// neighbors fixed at their current values.
Tensor loss_siamese(const Tensor& p1, const Tensor& p2);

struct LossWeights {
  double canon = 2.0;
  double ortho = 1.0;
  double siamese = 1.0;
};

struct LossParts {
  double canon = 0.0;
  double ortho = 0.0;
  std::optional<double> siamese;  // absent when the Siamese term is disabled
};

/// Weighted sum of the parts. Throws NumericError on a non-finite part.
double total_loss(const LossParts& parts, const LossWeights& w = {});
Tensor total_loss(const Tensor& canon, const Tensor& ortho, const std::optional<Tensor>& siamese,
                  const LossWeights& w = {});

/// Single-instance forward products used by training and inference.
struct InstanceForward {
  field::DensityGrid grid;
  ForegroundMask mask;
  net::NetInput input;
  net::ModelOutputs out;
  Tensor x;  // [|C_f|, 3] normalized positions of the foreground
};

InstanceForward forward_instance(net::Model& model, field::DensityGrid grid, bool training,
                                 std::uint64_t seed = 0);

struct TrainingInstance {
  std::string category;
  field::DensityGrid grid;
};

struct TrainingConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 2;
  LossWeights weights;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  bool siamese = true;
  std::size_t resolution = 0;     // resample size; 0 keeps each stored grid's size
  double depth_step = field::kDefaultDepthStep;
  bool repeat_augmentation = false;  // reuse epoch 1's pairs and rotations every epoch
  std::size_t checkpoint_every = 0;  // 0 disables the callback

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  LossParts parts;
  double total = 0.0;
};

struct TrainingResult {
  std::vector<EpochLog> log;
};

using CheckpointFn = std::function<void(std::size_t epoch, const net::Model& model)>;

/// Siamese training: each step draws a pair of instances of one category,
/// rotates each by a fresh Haar rotation, runs both through the shared model
/// and takes an Adam step on the weighted loss. Writes one log line per epoch
/// to `log` when given. Throws UsageError on an empty dataset or a category
/// with a single instance while the Siamese term is on, and NumericError on
/// a non-finite loss.
TrainingResult train(net::Model& model, const std::vector<TrainingInstance>& data,
                     const TrainingConfig& cfg, std::ostream* log = nullptr,
                     const CheckpointFn& checkpoint = {});

/// Header and column line of the training log.
void write_log_header(std::ostream& os, const TrainingConfig& cfg, const net::ModelConfig& model);
void write_log_line(std::ostream& os, const EpochLog& e);

struct CanonicalizationResult {
  Mat3 rotation = Mat3::Identity();  // E_b, orthonormalized with det +1
  Vec3 translation = Vec3::Zero();   // object center c in the scene frame
  double scale = 1.0;                // 2 / l
  std::vector<Vec3> p;               // canonical coordinates over C_f
  std::size_t candidate = 0;
  double residual = 0.0;
};

/// Inference on an object grid (already centered and scaled).
CanonicalizationResult canonicalize_grid(net::Model& model, const field::DensityGrid& grid,
                                         std::uint64_t seed = 0);

/// Full pipeline from a scene provider: probe, resample to n³, canonicalize.
CanonicalizationResult canonicalize(net::Model& model, const field::FieldProvider& provider,
                                    std::size_t n, double depth_step = field::kDefaultDepthStep,
                                    std::uint64_t seed = 0);

void write_result(const std::filesystem::path& path, const CanonicalizationResult& r);
CanonicalizationResult read_result(const std::filesystem::path& path);

}  // namespace cafield::canon
