#include "cafield/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "cafield/canon/canon.hpp"
#include "cafield/error.hpp"
#include "cafield/net/model.hpp"
#include "cafield/parallel.hpp"
#include "cafield/random.hpp"

namespace cafield::metrics {

PointSet normalize_unit_scale(const PointSet& p) {
  if (p.empty()) throw DegenerateInputError("cannot normalize an empty point set");
  Vec3 mean = Vec3::Zero();
  for (const auto& v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double r = 0.0;
  for (const auto& v : p) r = std::max(r, (v - mean).norm());
  if (!(r > 0.0)) throw DegenerateInputError("point set has zero extent");
  PointSet out;
  out.reserve(p.size());
  for (const auto& v : p) out.push_back((v - mean) / r);
  return out;
}

PointSet transform(const Mat3& m, const PointSet& p) {
  PointSet out;
  out.reserve(p.size());
  for (const auto& v : p) out.push_back(m * v);
  return out;
}

Mat3 pca_canonicalizer(const PointSet& p) {
  if (p.size() < 3) throw DegenerateInputError("PCA needs at least 3 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& v : p) mean += v;
  mean /= static_cast<double>(p.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& v : p) cov += (v - mean) * (v - mean).transpose();
  cov /= static_cast<double>(p.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  const double top = ev[2];
  if (!(top > 0.0) || ev[0] <= 1e-12 * top) throw DegenerateInputError("point covariance is rank deficient");
  if (ev[1] - ev[0] < 1e-9 * top || ev[2] - ev[1] < 1e-9 * top) {
    throw DegenerateInputError("principal axes are not unique (repeated eigenvalue)");
  }
  Mat3 rows;
  for (int r = 0; r < 3; ++r) {
    Vec3 axis = es.eigenvectors().col(2 - r);
    double m3 = 0.0;
    for (const auto& v : p) m3 += std::pow(axis.dot(v - mean), 3);
    bool flip = m3 < 0.0;
    if (std::abs(m3) <= 1e-12 * std::pow(top, 1.5) * static_cast<double>(p.size())) {
      // No skew to decide by: make the largest component positive.
      Eigen::Index i;
      axis.cwiseAbs().maxCoeff(&i);
      flip = axis[i] < 0.0;
    }
    rows.row(r) = (flip ? -axis : axis).transpose();
  }
  if (rows.determinant() < 0.0) rows.row(2) *= -1.0;
  return rows;
}

EvalInstance make_eval_instance(const std::string& category, std::uint64_t seed, std::size_t points,
                                std::uint64_t point_seed) {
  EvalInstance e;
  e.instance = field::synth_generate(category, seed, 0.0, 0.0, false).instance;
  e.points = normalize_unit_scale(field::template_points(e.instance, points, point_seed));
  return e;
}

Mat3 PcaCanonicalizer::predict(const EvalInstance& inst, const Mat3& r) {
  return pca_canonicalizer(transform(r, inst.points));
}

Mat3 ModelCanonicalizer::predict(const EvalInstance& inst, const Mat3& r) {
  const auto provider = field::posed_object(inst.instance, r, inst.instance.placement);
  const auto res = canon::canonicalize(model_, *provider, resolution_, depth_step_, seed_);
  return res.rotation.transpose();
}

namespace {

// CD(C(R1 P_a) R1 P_ka, C(R2 P_b) R2 P_kb).
struct Task {
  std::size_t a, b, ka, kb;
  Mat3 r1, r2;
};

// Predictions first (sequential, the model parallelizes internally), then
// Chamfer distances in parallel; the sum runs in task order.
MetricValue run_tasks(Canonicalizer& c, const std::vector<EvalInstance>& set, const std::vector<Task>& tasks) {
  std::vector<Mat3> c1(tasks.size()), c2(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    if (t > 0 && tasks[t - 1].a == task.a && tasks[t - 1].b == task.b && tasks[t - 1].r1 == task.r1 &&
        tasks[t - 1].r2 == task.r2) {
      c1[t] = c1[t - 1];
      c2[t] = c2[t - 1];
      continue;
    }
    c1[t] = c.predict(set[task.a], task.r1);
    c2[t] = c.predict(set[task.b], task.r2);
    if (!so3::is_rotation(c1[t], 1e-6) || !so3::is_rotation(c2[t], 1e-6)) {
      throw NumericError("canonicalizer " + c.name() + " returned a non-rotation");
    }
  }
  std::vector<double> cd(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const auto& task = tasks[t];
      cd[t] = chamfer(transform(c1[t] * task.r1, set[task.ka].points),
                      transform(c2[t] * task.r2, set[task.kb].points));
    }
  });
  MetricValue v;
  for (double x : cd) v.value += x;
  v.trials = tasks.size();
  if (v.trials) v.value /= static_cast<double>(v.trials);
  return v;
}

std::uint64_t instance_key(const EvalInstance& e) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : e.instance.category) h = (h ^ ch) * 0x100000001b3ULL;
  return mix_seed(h, e.instance.seed);
}

// Rotation pairs are keyed by instance identity, not position, so relabeling
// the dataset permutes the terms without changing them.
std::pair<Mat3, Mat3> rotation_pair(std::uint64_t seed, std::uint64_t metric, const EvalInstance& a,
                                    const EvalInstance& b, std::size_t t) {
  Rng rng(mix_seed(mix_seed(mix_seed(mix_seed(seed, metric), instance_key(a)), instance_key(b)), t));
  const Mat3 r1 = so3::random_rotation(rng).matrix();
  return {r1, so3::random_rotation(rng).matrix()};
}

void check_trials(const MetricConfig& cfg) {
  if (cfg.trials < 1) throw UsageError("at least one rotation pair per trial is required");
}

}  // namespace

MetricValue instance_consistency(Canonicalizer& c, const std::vector<EvalInstance>& set,
                                 const MetricConfig& cfg) {
  check_trials(cfg);
  if (set.empty()) throw UsageError("instance consistency needs at least one instance");
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const auto [r1, r2] = rotation_pair(cfg.seed, 1, set[i], set[i], t);
      tasks.push_back({i, i, i, i, r1, r2});
    }
  return run_tasks(c, set, tasks);
}

MetricValue category_consistency(Canonicalizer& c, const std::vector<EvalInstance>& set,
                                 const MetricConfig& cfg) {
  check_trials(cfg);
  if (set.size() < 2) throw UsageError("category consistency needs at least 2 instances");
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = 0; j < set.size(); ++j) {
      if (i == j) continue;
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto [r1, r2] = rotation_pair(cfg.seed, 2, set[i], set[j], t);
        tasks.push_back({i, j, i, j, r1, r2});
      }
    }
  return run_tasks(c, set, tasks);
}

MetricValue ground_truth_equivariance(Canonicalizer& c, const std::vector<EvalInstance>& set,
                                      const MetricConfig& cfg) {
  check_trials(cfg);
  if (set.empty()) throw UsageError("GEC needs at least one instance");
  const std::size_t n = set.size();
  Rng rng(mix_seed(cfg.seed, 3));
  std::vector<Task> tasks;
  if (n * n * n * cfg.trials <= cfg.exhaustive_limit) {
    // Rotations are drawn per (i, j, t) and shared by every measured k.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < cfg.trials; ++t) {
          const auto [r1, r2] = rotation_pair(cfg.seed, 3, set[i], set[j], t);
          for (std::size_t k = 0; k < n; ++k) tasks.push_back({i, j, k, k, r1, r2});
        }
  } else {
    for (std::size_t s = 0; s < cfg.sampled_triples; ++s) {
      const std::size_t i = rng.index(n), j = rng.index(n), k = rng.index(n);
      for (std::size_t t = 0; t < cfg.trials; ++t) {
        const Mat3 r1 = so3::random_rotation(rng).matrix(), r2 = so3::random_rotation(rng).matrix();
        tasks.push_back({i, j, k, k, r1, r2});
      }
    }
  }
  return run_tasks(c, set, tasks);
}

std::vector<Reference> published_references() {
  return {
      {"published benchmark average", "reference method", "IC", 1.34},
      {"published benchmark average", "reference method", "CC", 1.45},
      {"published benchmark average", "reference method", "GEC", 1.67},
      {"published benchmark average", "PCA", "IC", 8.47},
      {"published benchmark average", "PCA", "CC", 10.36},
      {"published benchmark average", "PCA", "GEC", 8.61},
      {"published ablation average", "signal=xyz", "GEC", 1.95},
      {"published ablation average", "signal=gradient", "GEC", 1.57},
      {"published ablation average", "weighting=direct", "GEC", 1.57},
      {"published ablation average", "weighting=local-average", "GEC", 1.73},
      {"published ablation average", "siamese=off", "GEC", 1.86},
      {"published ablation average", "siamese=on", "GEC", 1.57},
  };
}

MetricsReport evaluate_suite(Canonicalizer& c, const std::vector<EvalInstance>& set,
                             const MetricConfig& cfg) {
  MetricsReport r;
  r.canonicalizer = c.name();
  r.seed = cfg.seed;
  r.trials = cfg.trials;
  r.references = published_references();
  std::vector<std::string> order;
  std::map<std::string, std::vector<EvalInstance>> groups;
  for (const auto& e : set) {
    if (!groups.count(e.instance.category)) order.push_back(e.instance.category);
    groups[e.instance.category].push_back(e);
  }
  if (order.empty()) throw UsageError("evaluation set is empty");
  for (std::size_t ci = 0; ci < order.size(); ++ci) {
    const auto& g = groups[order[ci]];
    MetricConfig mc = cfg;
    mc.seed = mix_seed(cfg.seed, ci);
    CategoryMetrics m;
    m.category = order[ci];
    m.instances = g.size();
    const auto ic = instance_consistency(c, g, mc);
    const auto cc = category_consistency(c, g, mc);
    const auto ge = ground_truth_equivariance(c, g, mc);
    m.ic = 100.0 * ic.value;
    m.cc = 100.0 * cc.value;
    m.gec = 100.0 * ge.value;
    m.ic_trials = ic.trials;
    m.cc_trials = cc.trials;
    m.gec_trials = ge.trials;
    r.ic += m.ic;
    r.cc += m.cc;
    r.gec += m.gec;
    r.categories.push_back(m);
  }
  const double nc = static_cast<double>(r.categories.size());
  r.ic /= nc;
  r.cc /= nc;
  r.gec /= nc;
  return r;
}

std::string report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["format"] = "cafield-metrics-v1";
  j["canonicalizer"] = r.canonicalizer;
  j["seed"] = r.seed;
  j["trials"] = r.trials;
  j["scale"] = "x100";
  j["protocol"] = "IC and CC formalized by analogy with GEC (k = i for IC, cross-instance pairs for CC)";
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.settings) settings[k] = v;
  j["settings"] = settings;
  nlohmann::ordered_json cats = nlohmann::ordered_json::array();
  for (const auto& m : r.categories) {
    cats.push_back({{"category", m.category},
                    {"instances", m.instances},
                    {"IC", m.ic},
                    {"CC", m.cc},
                    {"GEC", m.gec},
                    {"IC_trials", m.ic_trials},
                    {"CC_trials", m.cc_trials},
                    {"GEC_trials", m.gec_trials}});
  }
  j["categories"] = cats;
  j["average"] = {{"IC", r.ic}, {"CC", r.cc}, {"GEC", r.gec}};
  nlohmann::ordered_json refs = nlohmann::ordered_json::array();
  for (const auto& ref : r.references) {
    refs.push_back({{"source", ref.source}, {"label", ref.label}, {"metric", ref.metric}, {"value", ref.value}});
  }
  j["reference"] = {{"note", "published averages over the full benchmark; not reproduced at desk scale"},
                    {"values", refs}};
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "cafield-metrics-v1") throw FormatError("not a cafield-metrics-v1 report");
    r.canonicalizer = j.at("canonicalizer").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.trials = j.at("trials").get<std::size_t>();
    for (const auto& [k, v] : j.at("settings").items()) r.settings.emplace_back(k, v.get<std::string>());
    for (const auto& c : j.at("categories")) {
      CategoryMetrics m;
      m.category = c.at("category").get<std::string>();
      m.instances = c.at("instances").get<std::size_t>();
      m.ic = c.at("IC").get<double>();
      m.cc = c.at("CC").get<double>();
      m.gec = c.at("GEC").get<double>();
      m.ic_trials = c.at("IC_trials").get<std::size_t>();
      m.cc_trials = c.at("CC_trials").get<std::size_t>();
      m.gec_trials = c.at("GEC_trials").get<std::size_t>();
      r.categories.push_back(m);
    }
    r.ic = j.at("average").at("IC").get<double>();
    r.cc = j.at("average").at("CC").get<double>();
    r.gec = j.at("average").at("GEC").get<double>();
    for (const auto& ref : j.at("reference").at("values")) {
      r.references.push_back({ref.at("source").get<std::string>(), ref.at("label").get<std::string>(),
                              ref.at("metric").get<std::string>(), ref.at("value").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << report_to_json(r);
  if (!os) throw IoError("failed writing " + path.string());
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace cafield::metrics
