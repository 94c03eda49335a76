#include "cafield/canon/canon.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "cafield/error.hpp"
#include "cafield/field/preprocess.hpp"
#include "cafield/metrics/chamfer.hpp"
#include "cafield/random.hpp"

namespace cafield::canon {

namespace {

Tensor points_tensor(const std::vector<Vec3>& pts) {
  std::vector<double> v(pts.size() * 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) v[i * 3 + static_cast<std::size_t>(a)] = pts[i][a];
  return Tensor({pts.size(), 3}, std::move(v));
}

std::vector<Vec3> tensor_points(const Tensor& t) {
  std::vector<Vec3> out(t.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3(t[i * 3], t[i * 3 + 1], t[i * 3 + 2]);
  return out;
}

Mat3 tensor_mat(const Tensor& t) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t[static_cast<std::size_t>(i * 3 + j)];
  return m;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what + " loss");
}

}  // namespace

ForegroundMask foreground_cluster(const field::DensityGrid& grid, std::uint64_t seed) {
  const auto km = field::kmeans_1d(grid.values, 2, seed);
  ForegroundMask m;
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    if (km.assignment[i] == 1) m.cells.push_back(i);
  if (m.cells.empty()) throw DegenerateInputError("foreground cluster is empty");
  return m;
}

Selection select_best_transform(const std::vector<Vec3>& x, const std::vector<Vec3>& p,
                                const std::vector<Mat3>& e) {
  if (x.empty() || x.size() != p.size()) throw DimensionError("X and P must be non-empty and equal in size");
  if (e.empty()) throw DimensionError("at least one candidate transform is required");
  Selection best;
  best.residual = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < e.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - e[j] * p[i]).squaredNorm();
    s /= static_cast<double>(x.size());
    if (s < best.residual) {
      best.residual = s;
      best.index = j;
      best.e = e[j];
    }
  }
  if (!std::isfinite(best.residual)) throw NumericError("non-finite transform residual");
  return best;
}

Tensor loss_canon(const Tensor& x, const Tensor& p, const Tensor& e) {
  if (x.rank() != 2 || x.dim(1) != 3 || x.shape() != p.shape() || e.shape() != ad::Shape{3, 3}) {
    throw DimensionError("loss_canon expects X, P as [N, 3] and E as [3, 3]");
  }
  const Tensor diff = ad::sub(x, ad::matmul(p, ad::transpose(e)));
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(x.dim(0)));
}

Tensor loss_ortho(const std::vector<Tensor>& e) {
  if (e.empty()) throw DimensionError("loss_ortho needs at least one candidate");
  Tensor total = Tensor::scalar(0.0);
  for (const auto& ej : e) {
    const auto svd = so3::svd3(tensor_mat(ej));
    const Mat3 target = svd.U * svd.V.transpose();
    std::vector<double> t(9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t[static_cast<std::size_t>(i * 3 + j)] = target(i, j);
    total = ad::add(total, ad::sqrt(ad::sum(ad::square(ad::sub(ej, Tensor({3, 3}, std::move(t)))))));
  }
  return ad::scale(total, 1.0 / static_cast<double>(e.size()));
}

Tensor loss_siamese(const Tensor& p1, const Tensor& p2) {
  if (p1.rank() != 2 || p2.rank() != 2 || p1.dim(1) != 3 || p2.dim(1) != 3 || p1.dim(0) == 0 ||
      p2.dim(0) == 0) {
    throw DimensionError("loss_siamese expects two non-empty [N, 3] sets");
  }
  const auto a = tensor_points(p1), b = tensor_points(p2);
  const Tensor d12 = ad::sub(p1, ad::gather(p2, metrics::nearest_brute(a, b)));
  const Tensor d21 = ad::sub(p2, ad::gather(p1, metrics::nearest_brute(b, a)));
  return ad::add(ad::scale(ad::sum(ad::square(d12)), 1.0 / static_cast<double>(a.size())),
                 ad::scale(ad::sum(ad::square(d21)), 1.0 / static_cast<double>(b.size())));
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  check_finite(parts.canon, "canonical");
  check_finite(parts.ortho, "orthonormality");
  double t = w.canon * parts.canon + w.ortho * parts.ortho;
  if (parts.siamese) {
    check_finite(*parts.siamese, "siamese");
    t += w.siamese * *parts.siamese;
  }
  return t;
}

Tensor total_loss(const Tensor& canon, const Tensor& ortho, const std::optional<Tensor>& siamese,
                  const LossWeights& w) {
  LossParts parts{canon[0], ortho[0], std::nullopt};
  if (siamese) parts.siamese = (*siamese)[0];
  total_loss(parts, w);
  Tensor t = ad::add(ad::scale(canon, w.canon), ad::scale(ortho, w.ortho));
  if (siamese) t = ad::add(t, ad::scale(*siamese, w.siamese));
  return t;
}

InstanceForward forward_instance(net::Model& model, field::DensityGrid grid, bool training,
                                 std::uint64_t seed) {
  InstanceForward f;
  f.grid = std::move(grid);
  f.mask = foreground_cluster(f.grid, seed);
  f.input = net::build_net_input(f.grid, model.config(), f.mask.cells);
  f.out = model.forward(f.input, {training, true});
  f.x = points_tensor(f.input.query);
  return f;
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size != 2) throw UsageError("batch size must be 2 (one Siamese pair per step)");
  if (!(weights.canon > 0 && weights.ortho > 0 && weights.siamese > 0)) {
    throw UsageError("loss weights must be positive");
  }
  if (!(depth_step > 0)) throw UsageError("depth step must be positive");
  if (resolution != 0 && resolution < 8) throw UsageError("resolution must be 0 or at least 8");
}

void write_log_header(std::ostream& os, const TrainingConfig& cfg, const net::ModelConfig& m) {
  os << "# cafield-train-v1 epochs=" << cfg.epochs << " batch=" << cfg.batch_size
     << " lr=" << cfg.adam.lr << " weight_decay=" << cfg.adam.weight_decay << " seed=" << cfg.seed
     << " siamese=" << (cfg.siamese ? 1 : 0) << " w_canon=" << cfg.weights.canon
     << " w_ortho=" << cfg.weights.ortho << " w_siamese=" << cfg.weights.siamese
     << " lmax=" << m.lmax << " candidates=" << m.candidates << " signal=" << net::to_string(m.signal)
     << " weighting=" << net::to_string(m.weighting) << "\n";
  os << "epoch\tcanon\tortho";
  if (cfg.siamese) os << "\tsiamese";
  os << "\ttotal\n";
}

void write_log_line(std::ostream& os, const EpochLog& e) {
  std::ostringstream line;
  line << std::setprecision(10) << e.epoch << '\t' << e.parts.canon << '\t' << e.parts.ortho;
  if (e.parts.siamese) line << '\t' << *e.parts.siamese;
  line << '\t' << e.total << '\n';
  os << line.str();
  os.flush();
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> draw_pairs(
    const std::map<std::string, std::vector<std::size_t>>& by_cat, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [cat, ids] : by_cat) {
    std::vector<std::size_t> order = ids;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t i = 0; i + 1 < order.size(); i += 2) pairs.emplace_back(order[i], order[i + 1]);
    if (order.size() % 2 == 1) {
      const std::size_t last = order.back();
      if (order.size() == 1) {
        pairs.emplace_back(last, last);
      } else {
        pairs.emplace_back(last, order[rng.index(order.size() - 1)]);
      }
    }
  }
  for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng.index(i)]);
  return pairs;
}

}  // namespace

TrainingResult train(net::Model& model, const std::vector<TrainingInstance>& data,
                     const TrainingConfig& cfg, std::ostream* log, const CheckpointFn& checkpoint) {
  cfg.validate();
  if (data.empty()) throw UsageError("training dataset is empty");
  std::map<std::string, std::vector<std::size_t>> by_cat;
  for (std::size_t i = 0; i < data.size(); ++i) by_cat[data[i].category].push_back(i);
  if (cfg.siamese)
    for (const auto& [cat, ids] : by_cat)
      if (ids.size() < 2) throw UsageError("category " + cat + " needs at least 2 instances for Siamese training");

  std::vector<field::GridProvider> providers;
  for (const auto& d : data) providers.emplace_back(d.grid, cfg.depth_step);

  auto params = model.parameters();
  ad::AdamState adam(cfg.adam);
  TrainingResult result;
  if (log) write_log_header(*log, cfg, model.config());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, cfg.repeat_augmentation ? 1 : epoch));
    const auto pairs = draw_pairs(by_cat, rng);
    double sum_canon = 0.0, sum_ortho = 0.0, sum_siamese = 0.0, sum_total = 0.0;
    for (const auto& [a, b] : pairs) {
      std::array<InstanceForward, 2> f;
      for (int s = 0; s < 2; ++s) {
        const std::size_t id = s == 0 ? a : b;
        const field::DensityGrid& g = data[id].grid;
        const so3::Rotation r = so3::random_rotation(rng);
        const field::SceneBounds bounds{g.center, g.diagonal, 0};
        const std::size_t n = cfg.resolution ? cfg.resolution : g.dims[0];
        f[static_cast<std::size_t>(s)] = forward_instance(
            model, field::resample_object_grid(providers[id], bounds, n, cfg.depth_step, r.matrix()),
            true, mix_seed(cfg.seed, id));
      }
      Tensor canon = Tensor::scalar(0.0), ortho = Tensor::scalar(0.0);
      for (auto& fi : f) {
        std::vector<Mat3> cands;
        for (const auto& e : fi.out.e) cands.push_back(tensor_mat(e));
        const auto sel = select_best_transform(fi.input.query, tensor_points(fi.out.p), cands);
        canon = ad::add(canon, ad::scale(loss_canon(fi.x, fi.out.p, fi.out.e[sel.index]), 0.5));
        ortho = ad::add(ortho, ad::scale(loss_ortho(fi.out.e), 0.5));
      }
      std::optional<Tensor> siamese;
      if (cfg.siamese) siamese = loss_siamese(f[0].out.p, f[1].out.p);
      Tensor total = total_loss(canon, ortho, siamese, cfg.weights);
      total.backward();
      ad::adam_step(params, adam);
      sum_canon += canon[0];
      sum_ortho += ortho[0];
      if (siamese) sum_siamese += (*siamese)[0];
      sum_total += total[0];
    }
    const double n = static_cast<double>(pairs.size());
    EpochLog e;
    e.epoch = epoch;
    e.parts.canon = sum_canon / n;
    e.parts.ortho = sum_ortho / n;
    if (cfg.siamese) e.parts.siamese = sum_siamese / n;
    e.total = sum_total / n;
    result.log.push_back(e);
    if (log) write_log_line(*log, e);
    if (checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) checkpoint(epoch, model);
  }
  return result;
}

CanonicalizationResult canonicalize_grid(net::Model& model, const field::DensityGrid& grid,
                                         std::uint64_t seed) {
  InstanceForward f = forward_instance(model, grid, false, seed);
  std::vector<Mat3> cands;
  for (const auto& e : f.out.e) cands.push_back(tensor_mat(e));
  CanonicalizationResult r;
  r.p = tensor_points(f.out.p);
  const auto sel = select_best_transform(f.input.query, r.p, cands);
  r.rotation = so3::nearest_rotation(sel.e);
  r.translation = grid.center;
  r.scale = 2.0 / grid.diagonal;
  r.candidate = sel.index;
  r.residual = sel.residual;
  return r;
}

CanonicalizationResult canonicalize(net::Model& model, const field::FieldProvider& provider,
                                    std::size_t n, double depth_step, std::uint64_t seed) {
  const auto bounds = field::scene_probe(provider, depth_step, seed);
  return canonicalize_grid(model, field::resample_object_grid(provider, bounds, n, depth_step), seed);
}

void write_result(const std::filesystem::path& path, const CanonicalizationResult& r) {
  nlohmann::ordered_json j;
  j["format"] = "cafield-canon-v1";
  std::vector<double> rot;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot.push_back(r.rotation(i, k));
  j["rotation"] = rot;
  j["translation"] = {r.translation.x(), r.translation.y(), r.translation.z()};
  j["scale"] = r.scale;
  j["candidate"] = r.candidate;
  j["residual"] = r.residual;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << std::setprecision(17) << j.dump(2) << "\n";
  if (!os) throw IoError("failed writing " + path.string());
}

CanonicalizationResult read_result(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  CanonicalizationResult r;
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.at("format") != "cafield-canon-v1") throw FormatError("not a canonicalization record: " + path.string());
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto t = j.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || t.size() != 3) throw FormatError("malformed canonicalization record");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) r.rotation(i, k) = rot[static_cast<std::size_t>(i * 3 + k)];
    r.translation = Vec3(t[0], t[1], t[2]);
    r.scale = j.at("scale").get<double>();
    r.candidate = j.at("candidate").get<std::size_t>();
    r.residual = j.at("residual").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed canonicalization record " + path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace cafield::canon
