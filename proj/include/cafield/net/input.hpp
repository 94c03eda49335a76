#pragma once

#include <cstddef>
#include <vector>

#include "cafield/ad/tensor.hpp"
#include "cafield/field/grid.hpp"
#include "cafield/net/config.hpp"
#include "cafield/net/layers.hpp"
#include "cafield/so3/rotation.hpp"

namespace cafield::net {

inline constexpr std::size_t kLevels = 4;

/// Points of one resolution level. Positions live in the normalized object
/// frame u = (x - c) * 2 / l, so the object cube spans [-1, 1]³.
struct NetLevel {
  std::vector<Vec3> positions;
  std::vector<std::size_t> cells;  // flat grid index per point
  std::vector<double> weight;      // f_w per point
  double spacing = 0.0;            // lattice step of this level, normalized units
};

/// Level k keeps every 2^k-th cell per axis whose value exceeds `floor`.
/// A level that would be empty repeats the previous level.
/// Throws DegenerateInputError when no cell exceeds the floor.
std::vector<NetLevel> build_hierarchy(const field::DensityGrid& grid, double floor,
                                      std::size_t levels = kLevels);

/// Direct: sigma_D at the cell. LocalAverage: mean of sigma_D over lattice
/// points within `radius` scene units.
double density_weight(Weighting variant, const field::DensityGrid& grid, std::size_t flat,
                      double radius);

struct NetInput {
  std::vector<NetLevel> levels;
  std::vector<GeometryPtr> geometry;  // level k -> level k+1
  Tensor signal;                      // [level-0 points, 4, 1]: type 0 then type 1
  std::vector<Vec3> query;            // normalized positions where heads are evaluated
};

/// Normalized position of a grid cell.
Vec3 normalized_position(const field::DensityGrid& grid, std::size_t flat);

/// Hierarchy, weights, input signal (sigma_D and either its gradient with
/// respect to u or u itself) and convolution geometry for a grid.
NetInput build_net_input(const field::DensityGrid& grid, const ModelConfig& cfg,
                         const std::vector<std::size_t>& query_cells);

/// Recomputes all convolution neighborhoods from the level positions.
void build_geometry(NetInput& input, const ModelConfig& cfg);

/// Exactly rotated copy: positions, queries and the type-1 signal rotated by
/// R about the origin; densities and weights unchanged; geometry rebuilt.
NetInput rotate_input(const NetInput& input, const so3::Rotation& r, const ModelConfig& cfg);

}  // namespace cafield::net
