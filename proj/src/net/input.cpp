#include "cafield/net/input.hpp"

#include <string>

#include "cafield/error.hpp"
#include "cafield/so3/sh.hpp"
#include "cafield/so3/wigner.hpp"

namespace cafield::net {

Vec3 normalized_position(const field::DensityGrid& grid, std::size_t flat) {
  return (grid.position(flat) - grid.center) * (2.0 / grid.diagonal);
}

std::vector<NetLevel> build_hierarchy(const field::DensityGrid& grid, double floor,
                                      std::size_t levels) {
  grid.validate();
  if (levels == 0) throw UsageError("hierarchy needs at least one level");
  const double h0 = 2.0 / static_cast<double>(grid.dims[0] - 1);
  std::vector<NetLevel> out;
  for (std::size_t k = 0; k < levels; ++k) {
    const std::size_t stride = std::size_t{1} << k;
    NetLevel level;
    level.spacing = h0 * static_cast<double>(stride);
    for (std::size_t i = 0; i < grid.dims[0]; i += stride)
      for (std::size_t j = 0; j < grid.dims[1]; j += stride)
        for (std::size_t l = 0; l < grid.dims[2]; l += stride) {
          const std::size_t flat = grid.index(i, j, l);
          if (grid.values[flat] > floor) level.cells.push_back(flat);
        }
    if (level.cells.empty()) {
      if (k == 0) {
        throw DegenerateInputError("no grid cell exceeds the density floor " + std::to_string(floor));
      }
      level.cells = out.back().cells;
    }
    for (auto c : level.cells) level.positions.push_back(normalized_position(grid, c));
    level.weight.assign(level.cells.size(), 1.0);
    out.push_back(std::move(level));
  }
  return out;
}

double density_weight(Weighting variant, const field::DensityGrid& grid, std::size_t flat,
                      double radius) {
  if (variant == Weighting::Direct) return grid.values.at(flat);
  return field::local_average(grid, flat, radius);
}

void build_geometry(NetInput& input, const ModelConfig& cfg) {
  input.geometry.clear();
  for (std::size_t k = 0; k + 1 < input.levels.size(); ++k) {
    const NetLevel& src = input.levels[k];
    GeometryConfig g;
    for (double r : cfg.radii) g.radii.push_back(r * src.spacing);
    g.tau = cfg.tau * src.spacing;
    g.cutoff = cfg.cutoff * src.spacing;
    g.max_neighbors = cfg.neighbors;
    g.kernel_lmax = cfg.lmax;
    input.geometry.push_back(std::make_shared<const ConvGeometry>(
        build_conv_geometry(src.positions, input.levels[k + 1].positions, g)));
  }
}

NetInput build_net_input(const field::DensityGrid& grid, const ModelConfig& cfg,
                         const std::vector<std::size_t>& query_cells) {
  cfg.validate();
  NetInput in;
  in.levels = build_hierarchy(grid, cfg.density_floor, kLevels);
  const double radius = cfg.local_radius * grid.spacing()[0];
  for (auto& level : in.levels)
    for (std::size_t p = 0; p < level.cells.size(); ++p)
      level.weight[p] = density_weight(cfg.weighting, grid, level.cells[p], radius);

  const NetLevel& l0 = in.levels[0];
  std::vector<double> sig(l0.cells.size() * 4);
  std::vector<Vec3> grad;
  if (cfg.signal == Signal::Gradient) grad = field::finite_gradient(grid);
  for (std::size_t p = 0; p < l0.cells.size(); ++p) {
    const std::size_t c = l0.cells[p];
    const Vec3 v = cfg.signal == Signal::Gradient ? Vec3(grad[c] * (grid.diagonal / 2.0))
                                                  : l0.positions[p];
    const Vec3 t1 = so3::xyz_to_type1(v);
    sig[p * 4] = grid.values[c];
    for (int m = 0; m < 3; ++m) sig[p * 4 + 1 + static_cast<std::size_t>(m)] = t1[m];
  }
  in.signal = Tensor({l0.cells.size(), 4, 1}, std::move(sig));
  for (auto c : query_cells) {
    if (c >= grid.size()) throw DimensionError("query cell out of range");
    in.query.push_back(normalized_position(grid, c));
  }
  build_geometry(in, cfg);
  return in;
}

NetInput rotate_input(const NetInput& input, const so3::Rotation& r, const ModelConfig& cfg) {
  NetInput out = input;
  const so3::Mat3& m = r.matrix();
  for (auto& level : out.levels)
    for (auto& p : level.positions) p = m * p;
  for (auto& q : out.query) q = m * q;
  const Eigen::MatrixXd d1 = so3::wigner_d(1, r);
  const std::size_t n = input.signal.dim(0);
  std::vector<double> sig(input.signal.values().begin(), input.signal.values().end());
  for (std::size_t p = 0; p < n; ++p) {
    const Eigen::Vector3d v(sig[p * 4 + 1], sig[p * 4 + 2], sig[p * 4 + 3]);
    const Eigen::Vector3d w = d1 * v;
    for (int a = 0; a < 3; ++a) sig[p * 4 + 1 + static_cast<std::size_t>(a)] = w[a];
  }
  out.signal = Tensor(input.signal.shape(), std::move(sig));
  build_geometry(out, cfg);
  return out;
}

}  // namespace cafield::net
