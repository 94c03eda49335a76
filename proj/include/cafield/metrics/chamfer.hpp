#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cafield::metrics {

using Vec3 = Eigen::Vector3d;
using PointSet = std::vector<Vec3>;

/// Index in `to` of the nearest point for every point of `from`; equal
/// distances resolve to the lowest index. Throws DegenerateInputError when
/// `to` is empty.
std::vector<std::size_t> nearest_brute(const PointSet& from, const PointSet& to);

/// Same result as nearest_brute through a uniform cell grid.
std::vector<std::size_t> nearest_grid(const PointSet& from, const PointSet& to);

/// (1/|A|) sum_a min_b |a-b|² + (1/|B|) sum_b min_a |a-b|², brute force.
double chamfer_brute(const PointSet& a, const PointSet& b);

/// Same value as chamfer_brute, bit for bit; uses the cell grid for large sets.
double chamfer(const PointSet& a, const PointSet& b);

}  // namespace cafield::metrics
