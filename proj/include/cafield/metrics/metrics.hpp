#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cafield/field/synth.hpp"
#include "cafield/metrics/chamfer.hpp"
#include "cafield/so3/rotation.hpp"

namespace cafield::net {
class Model;
}

namespace cafield::metrics {

using so3::Mat3;

/// Center at the mean and divide by the largest centered norm.
PointSet normalize_unit_scale(const PointSet& p);

PointSet transform(const Mat3& m, const PointSet& p);

/// Rows are covariance eigenvectors by descending eigenvalue, each signed so
/// the third central moment along it is positive; the last row is flipped if
/// needed for det +1. Throws DegenerateInputError when the covariance is
/// rank deficient or two eigenvalues are closer than 1e-9 (relative).
Mat3 pca_canonicalizer(const PointSet& p);

/// One evaluation instance: a synthetic shape and its unit-scale template
/// point set in the canonical frame.
struct EvalInstance {
  field::SyntheticInstance instance;
  PointSet points;
};

EvalInstance make_eval_instance(const std::string& category, std::uint64_t seed,
                                std::size_t points = 512, std::uint64_t point_seed = 0);

/// Predicts the canonicalizing rotation C for the instance seen in pose r,
/// i.e. for the point set r P (or the field of the shape rotated by r).
class Canonicalizer {
 public:
  virtual ~Canonicalizer() = default;
  virtual std::string name() const = 0;
  virtual Mat3 predict(const EvalInstance& inst, const Mat3& r) = 0;
};

class OracleCanonicalizer final : public Canonicalizer {
 public:
  std::string name() const override { return "oracle"; }
  Mat3 predict(const EvalInstance&, const Mat3& r) override { return r.transpose(); }
};

class IdentityCanonicalizer final : public Canonicalizer {
 public:
  std::string name() const override { return "identity"; }
  Mat3 predict(const EvalInstance&, const Mat3&) override { return Mat3::Identity(); }
};

class PcaCanonicalizer final : public Canonicalizer {
 public:
  std::string name() const override { return "pca"; }
  Mat3 predict(const EvalInstance& inst, const Mat3& r) override;
};

/// Canonicalizes the density field of the shape posed by r (clutter free) and
/// returns E_bᵀ.
class ModelCanonicalizer final : public Canonicalizer {
 public:
  ModelCanonicalizer(net::Model& model, std::size_t resolution, double depth_step, std::uint64_t seed)
      : model_(model), resolution_(resolution), depth_step_(depth_step), seed_(seed) {}
  std::string name() const override { return "model"; }
  Mat3 predict(const EvalInstance& inst, const Mat3& r) override;

 private:
  net::Model& model_;
  std::size_t resolution_;
  double depth_step_;
  std::uint64_t seed_;
};

struct MetricConfig {
  std::size_t trials = 10;                 // rotation pairs T per instance / pair / triple
  std::uint64_t seed = 0;
  std::size_t exhaustive_limit = 100000;   // |P|³ T at or below this enumerates all triples
  std::size_t sampled_triples = 1000;      // otherwise
};

struct MetricValue {
  double value = 0.0;      // mean Chamfer distance (not scaled)
  std::size_t trials = 0;  // Chamfer evaluations averaged
};

/// mean over instances and T rotation pairs of CD(C(R1 P) R1 P, C(R2 P) R2 P).
MetricValue instance_consistency(Canonicalizer& c, const std::vector<EvalInstance>& set,
                                 const MetricConfig& cfg);
/// Same over ordered pairs i != j. Throws UsageError for fewer than 2 instances.
MetricValue category_consistency(Canonicalizer& c, const std::vector<EvalInstance>& set,
                                 const MetricConfig& cfg);
/// mean over triples (i, j, k) and T rotation pairs of CD(C(R1 P_i) R1 P_k, C(R2 P_j) R2 P_k).
MetricValue ground_truth_equivariance(Canonicalizer& c, const std::vector<EvalInstance>& set,
                                      const MetricConfig& cfg);

struct CategoryMetrics {
  std::string category;
  std::size_t instances = 0;
  double ic = 0.0, cc = 0.0, gec = 0.0;  // ×100
  std::size_t ic_trials = 0, cc_trials = 0, gec_trials = 0;
};

struct Reference {
  std::string source;  // table the numbers come from
  std::string label;
  std::string metric;
  double value = 0.0;
};

struct MetricsReport {
  std::string canonicalizer;
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<CategoryMetrics> categories;
  double ic = 0.0, cc = 0.0, gec = 0.0;  // category averages, ×100
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<Reference> references;
};

/// Reference averages from the published evaluation; annotations only.
std::vector<Reference> published_references();

/// Runs IC, CC and GEC per category (instances grouped by category, in order).
MetricsReport evaluate_suite(Canonicalizer& c, const std::vector<EvalInstance>& set,
                             const MetricConfig& cfg);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& path, const MetricsReport& r);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace cafield::metrics
