#include "cafield/net/model.hpp"

#include <cmath>
#include <sstream>

#include "cafield/error.hpp"
#include "cafield/random.hpp"
#include "cafield/so3/sh.hpp"

namespace cafield::net {

namespace {

Tensor init_weight(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> v(rows * cols);
  const double s = rows > 0 ? 1.0 / std::sqrt(static_cast<double>(rows)) : 0.0;
  for (auto& x : v) x = rng.normal() * s;
  return Tensor({rows, cols}, std::move(v), true);
}

Tensor zeros_param(std::size_t n) { return Tensor::zeros({n}, true); }

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<double> split(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

std::map<std::string, std::string> config_meta(const ModelConfig& c) {
  std::map<std::string, std::string> m;
  m["lmax"] = std::to_string(c.lmax);
  m["channels"] = join({static_cast<double>(c.channels[0]), static_cast<double>(c.channels[1]),
                        static_cast<double>(c.channels[2])});
  m["embed"] = std::to_string(c.embed);
  m["candidates"] = std::to_string(c.candidates);
  m["radii"] = join(c.radii);
  m["tau"] = fmt(c.tau);
  m["cutoff"] = fmt(c.cutoff);
  m["neighbors"] = std::to_string(c.neighbors);
  m["weighting"] = to_string(c.weighting);
  m["local_radius"] = fmt(c.local_radius);
  m["signal"] = to_string(c.signal);
  m["density_floor"] = fmt(c.density_floor);
  m["sphere_samples"] = std::to_string(c.sphere_samples);
  m["bn_momentum"] = fmt(c.bn_momentum);
  return m;
}

ModelConfig config_from_meta(const ad::Checkpoint& ck) {
  ModelConfig c;
  try {
    c.lmax = std::stoi(ck.meta_at("lmax"));
    const auto ch = split(ck.meta_at("channels"));
    if (ch.size() != 3) throw FormatError("checkpoint channels must list three values");
    for (std::size_t i = 0; i < 3; ++i) c.channels[i] = static_cast<std::size_t>(ch[i]);
    c.embed = std::stoul(ck.meta_at("embed"));
    c.candidates = std::stoul(ck.meta_at("candidates"));
    c.radii = split(ck.meta_at("radii"));
    c.tau = std::stod(ck.meta_at("tau"));
    c.cutoff = std::stod(ck.meta_at("cutoff"));
    c.neighbors = std::stoul(ck.meta_at("neighbors"));
    c.weighting = parse_weighting(ck.meta_at("weighting"));
    c.local_radius = std::stod(ck.meta_at("local_radius"));
    c.signal = parse_signal(ck.meta_at("signal"));
    c.density_floor = std::stod(ck.meta_at("density_floor"));
    c.sphere_samples = std::stoul(ck.meta_at("sphere_samples"));
    c.bn_momentum = std::stod(ck.meta_at("bn_momentum"));
  } catch (const std::invalid_argument&) {
    throw FormatError("checkpoint metadata holds a malformed number");
  } catch (const std::out_of_range&) {
    throw FormatError("checkpoint metadata holds an out-of-range number");
  }
  c.validate();
  return c;
}

void put_bn(ad::Checkpoint& ck, const std::string& name, const ad::BatchNormState& bn) {
  ck.tensors.emplace_back(name + ".gamma", bn.gamma);
  ck.tensors.emplace_back(name + ".beta", bn.beta);
  ck.tensors.emplace_back(name + ".mean", Tensor({bn.channels}, bn.running_mean));
  ck.tensors.emplace_back(name + ".var", Tensor({bn.channels}, bn.running_var));
}

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw FormatError("checkpoint tensor " + name + " has shape " + ad::shape_string(src.shape()) +
                      ", expected " + ad::shape_string(dst.shape()));
  }
  auto d = dst.mutable_values();
  const auto s = src.values();
  std::copy(s.begin(), s.end(), d.begin());
}

void get_bn(const ad::Checkpoint& ck, const std::string& name, ad::BatchNormState& bn) {
  copy_into(bn.gamma, ck.at(name + ".gamma"), name + ".gamma");
  copy_into(bn.beta, ck.at(name + ".beta"), name + ".beta");
  Tensor mean({bn.channels}, bn.running_mean), var({bn.channels}, bn.running_var);
  copy_into(mean, ck.at(name + ".mean"), name + ".mean");
  copy_into(var, ck.at(name + ".var"), name + ".var");
  bn.running_mean.assign(mean.values().begin(), mean.values().end());
  bn.running_var.assign(var.values().begin(), var.values().end());
}

}  // namespace

Tensor type1_rows_to_xyz(const Tensor& block) {
  const so3::Mat3 pi = so3::type1_to_xyz_matrix();
  std::vector<double> v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[static_cast<std::size_t>(i * 3 + j)] = pi(i, j);
  return ad::matmul(Tensor({3, 3}, std::move(v)), block);
}

Tensor head_p(const Tensor& h, HeadPParams& p, bool training) {
  Tensor x = ad::add(ad::matmul(h, p.w1), p.b1);
  x = ad::relu(ad::batch_norm(x, p.bn1, training));
  x = ad::add(ad::matmul(x, p.w2), p.b2);
  x = ad::relu(ad::batch_norm(x, p.bn2, training));
  return ad::add(ad::matmul(x, p.w3), p.b3);
}

std::vector<Tensor> head_e(const Tensor& pooled, const Tensor& w, std::size_t candidates) {
  const Tensor xyz = type1_rows_to_xyz(ad::slice(pooled, 0, 1, 3));
  const Tensor mixed = ad::matmul(xyz, w);
  std::vector<Tensor> out;
  for (std::size_t j = 0; j < candidates; ++j) out.push_back(ad::slice(mixed, 1, 3 * j, 3));
  return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  const std::size_t K = cfg_.radii.size();
  sampling_ = std::make_shared<const so3::SphereSampling>(cfg_.lmax, cfg_.sphere_samples);
  std::size_t c_in = 1;
  int l_in = 1;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::size_t c_out = cfg_.channels[b];
    paths_[b] = ConvPaths::make(l_in, cfg_.lmax, cfg_.lmax);
    auto& conv = params_.conv[b];
    for (int J = 0; J <= cfg_.lmax; ++J) {
      const std::size_t rows = paths_[b].paths[static_cast<std::size_t>(J)].size() * K * c_in;
      conv.w.push_back(init_weight(rng, rows, c_out));
    }
    conv.bias = zeros_param(c_out);
    auto& nl = params_.nonlinearity[b];
    nl.bn = ad::BatchNormState(c_out, cfg_.bn_momentum);
    nl.w = init_weight(rng, c_out, c_out);
    nl.b = zeros_param(c_out);
    c_in = c_out;
    l_in = cfg_.lmax;
  }
  const std::size_t c_last = cfg_.channels[kBlocks - 1];
  params_.embed_w = init_weight(rng, static_cast<std::size_t>(cfg_.lmax + 1) * c_last, cfg_.embed);
  params_.embed_b = zeros_param(cfg_.embed);
  auto& hp = params_.head_p;
  hp.w1 = init_weight(rng, cfg_.embed, 64);
  hp.b1 = zeros_param(64);
  hp.bn1 = ad::BatchNormState(64, cfg_.bn_momentum);
  hp.w2 = init_weight(rng, 64, 32);
  hp.b2 = zeros_param(32);
  hp.bn2 = ad::BatchNormState(32, cfg_.bn_momentum);
  hp.w3 = init_weight(rng, 32, 3);
  hp.b3 = zeros_param(3);
  params_.head_e = init_weight(rng, c_last, 3 * cfg_.candidates);
}

ModelOutputs Model::forward(const NetInput& input, const ForwardOptions& opt) {
  if (input.levels.size() != kLevels || input.geometry.size() != kBlocks) {
    throw DimensionError("network input must hold " + std::to_string(kLevels) + " levels");
  }
  ModelOutputs out;
  Tensor x = input.signal;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    x = eqconv_layer(x, input.geometry[b], paths_[b], params_.conv[b], input.levels[b + 1].weight);
    if (opt.nonlinearity) x = equivariant_nonlinearity(x, *sampling_, params_.nonlinearity[b], opt.training);
    out.features.push_back(x);
  }
  out.pooled = global_pool(x, cfg_.lmax).pooled;
  out.h = invariant_embedding(out.pooled, cfg_.lmax, input.query, params_.embed_w, params_.embed_b);
  out.p = head_p(out.h, params_.head_p, opt.training);
  out.e = head_e(out.pooled, params_.head_e, cfg_.candidates);
  return out;
}

std::vector<Tensor> Model::parameters() {
  std::vector<Tensor> p;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    for (auto& w : params_.conv[b].w) p.push_back(w);
    p.push_back(params_.conv[b].bias);
    auto& nl = params_.nonlinearity[b];
    p.insert(p.end(), {nl.bn.gamma, nl.bn.beta, nl.w, nl.b});
  }
  auto& hp = params_.head_p;
  p.insert(p.end(), {params_.embed_w, params_.embed_b, hp.w1, hp.b1, hp.bn1.gamma, hp.bn1.beta,
                     hp.w2, hp.b2, hp.bn2.gamma, hp.bn2.beta, hp.w3, hp.b3, params_.head_e});
  return p;
}

ad::Checkpoint Model::to_checkpoint() const {
  ad::Checkpoint ck;
  ck.meta = config_meta(cfg_);
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::string pre = "block" + std::to_string(b);
    const auto& conv = params_.conv[b];
    for (std::size_t J = 0; J < conv.w.size(); ++J) ck.tensors.emplace_back(pre + ".w" + std::to_string(J), conv.w[J]);
    ck.tensors.emplace_back(pre + ".bias", conv.bias);
    const auto& nl = params_.nonlinearity[b];
    put_bn(ck, pre + ".bn", nl.bn);
    ck.tensors.emplace_back(pre + ".mlp_w", nl.w);
    ck.tensors.emplace_back(pre + ".mlp_b", nl.b);
  }
  const auto& hp = params_.head_p;
  ck.tensors.emplace_back("embed.w", params_.embed_w);
  ck.tensors.emplace_back("embed.b", params_.embed_b);
  ck.tensors.emplace_back("head_p.w1", hp.w1);
  ck.tensors.emplace_back("head_p.b1", hp.b1);
  put_bn(ck, "head_p.bn1", hp.bn1);
  ck.tensors.emplace_back("head_p.w2", hp.w2);
  ck.tensors.emplace_back("head_p.b2", hp.b2);
  put_bn(ck, "head_p.bn2", hp.bn2);
  ck.tensors.emplace_back("head_p.w3", hp.w3);
  ck.tensors.emplace_back("head_p.b3", hp.b3);
  ck.tensors.emplace_back("head_e.w", params_.head_e);
  return ck;
}

Model Model::from_checkpoint(const ad::Checkpoint& ck) {
  Model m(config_from_meta(ck), 0);
  auto& P = m.params_;
  for (std::size_t b = 0; b < kBlocks; ++b) {
    const std::string pre = "block" + std::to_string(b);
    auto& conv = P.conv[b];
    for (std::size_t J = 0; J < conv.w.size(); ++J) {
      const std::string n = pre + ".w" + std::to_string(J);
      copy_into(conv.w[J], ck.at(n), n);
    }
    copy_into(conv.bias, ck.at(pre + ".bias"), pre + ".bias");
    auto& nl = P.nonlinearity[b];
    get_bn(ck, pre + ".bn", nl.bn);
    copy_into(nl.w, ck.at(pre + ".mlp_w"), pre + ".mlp_w");
    copy_into(nl.b, ck.at(pre + ".mlp_b"), pre + ".mlp_b");
  }
  auto& hp = P.head_p;
  copy_into(P.embed_w, ck.at("embed.w"), "embed.w");
  copy_into(P.embed_b, ck.at("embed.b"), "embed.b");
  copy_into(hp.w1, ck.at("head_p.w1"), "head_p.w1");
  copy_into(hp.b1, ck.at("head_p.b1"), "head_p.b1");
  get_bn(ck, "head_p.bn1", hp.bn1);
  copy_into(hp.w2, ck.at("head_p.w2"), "head_p.w2");
  copy_into(hp.b2, ck.at("head_p.b2"), "head_p.b2");
  get_bn(ck, "head_p.bn2", hp.bn2);
  copy_into(hp.w3, ck.at("head_p.w3"), "head_p.w3");
  copy_into(hp.b3, ck.at("head_p.b3"), "head_p.b3");
  copy_into(P.head_e, ck.at("head_e.w"), "head_e.w");
  return m;
}

void Model::save(const std::filesystem::path& manifest) const {
  ad::write_checkpoint(manifest, to_checkpoint());
}

Model Model::load(const std::filesystem::path& manifest) {
  return from_checkpoint(ad::read_checkpoint(manifest));
}

}  // namespace cafield::net
