#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "msv/camera_model.hpp"
#include "msv/errors.hpp"
#include "msv/raster.hpp"
#include "msv/synthetic_rig.hpp"

namespace msv {

/// Ordered circle centers of one view, paired with their target-plane coordinates.
struct GridObservation {
  std::string view_id;
  CameraId camera = CameraId::rgb;
  int rows = 0;
  int cols = 0;
  std::vector<PixelCoord> image_points;  // row-major
  std::vector<WorldPoint> object_points; // z = 0

  std::size_t size() const { return image_points.size(); }
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline constexpr std::array<std::array<int, 2>, 8> kNeighbors8{
    {{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

}  // namespace detail

/// Finds dark circular blobs and returns their intensity-weighted centroids.
///
/// The image is thresholded at mean - 0.5 * stddev; dark pixels are grouped into
/// 8-connected components and components whose area falls outside
/// [0.2, 5] x the median area are discarded. Each centroid is weighted by how far a
/// pixel sits below the surrounding plate level, over the component plus a two-pixel
/// ring so that anti-aliased edges contribute symmetrically.
template <typename T>
std::vector<PixelCoord> detect_blobs(const Raster<T>& image, std::size_t expected_count) {
  if (image.empty()) throw InvalidArgument("empty image");
  const GrayImage gray = to_gray(image);
  const int w = gray.width();
  const int h = gray.height();
  const auto px = gray.data();

  double mean = 0.0;
  for (double v : px) mean += v;
  mean /= static_cast<double>(px.size());
  double var = 0.0;
  for (double v : px) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / static_cast<double>(px.size()));
  // A flat image has no dark features; rounding in the mean must not invent any.
  if (!(stddev > 1e-9 * std::max(1.0, std::abs(mean)))) throw WrongBlobCount(0, expected_count);
  const double threshold = mean - 0.5 * stddev;

  // Connected components of dark pixels.
  std::vector<int> label(px.size(), -1);
  std::vector<std::vector<int>> components;
  std::vector<int> stack;
  for (int start = 0; start < static_cast<int>(px.size()); ++start) {
    if (label[start] >= 0 || !(px[start] < threshold)) continue;
    const int id = static_cast<int>(components.size());
    components.emplace_back();
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      components[id].push_back(cur);
      const int cx = cur % w;
      const int cy = cur / w;
      for (const auto& [dx, dy] : detail::kNeighbors8) {
        const int nx = cx + dx;
        const int ny = cy + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int n = ny * w + nx;
        if (label[n] >= 0 || !(px[n] < threshold)) continue;
        label[n] = id;
        stack.push_back(n);
      }
    }
  }

  std::vector<double> areas;
  for (const auto& c : components) areas.push_back(static_cast<double>(c.size()));
  const double median_area = detail::median_of(areas);
  std::vector<int> kept;
  for (int i = 0; i < static_cast<int>(components.size()); ++i) {
    const double a = areas[i];
    if (a >= 0.2 * median_area && a <= 5.0 * median_area) kept.push_back(i);
  }
  if (kept.size() != expected_count) throw WrongBlobCount(kept.size(), expected_count);

  // Grow every kept blob by two pixels into the bright plate; each ring pixel goes to
  // whichever blob reaches it first.
  constexpr int kRing = 2;
  std::vector<int> owner(px.size(), -1);
  std::vector<int> dist(px.size(), 0);
  std::deque<int> queue;
  for (int k = 0; k < static_cast<int>(kept.size()); ++k) {
    for (int p : components[kept[k]]) {
      owner[p] = k;
      queue.push_back(p);
    }
  }
  std::vector<std::vector<int>> ring(kept.size());
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    if (dist[cur] == kRing) continue;
    const int cx = cur % w;
    const int cy = cur / w;
    for (const auto& [dx, dy] : detail::kNeighbors8) {
      const int nx = cx + dx;
      const int ny = cy + dy;
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      const int n = ny * w + nx;
      if (owner[n] >= 0 || label[n] >= 0) continue;
      owner[n] = owner[cur];
      dist[n] = dist[cur] + 1;
      ring[owner[cur]].push_back(n);
      queue.push_back(n);
    }
  }

  std::vector<PixelCoord> centroids;
  centroids.reserve(kept.size());
  for (int k = 0; k < static_cast<int>(kept.size()); ++k) {
    std::vector<double> ring_values;
    ring_values.reserve(ring[k].size());
    for (int p : ring[k]) ring_values.push_back(px[p]);
    const double plate = ring_values.empty() ? threshold : detail::median_of(ring_values);
    double sw = 0.0;
    double su = 0.0;
    double sv = 0.0;
    auto accumulate = [&](int p) {
      const double weight = std::max(0.0, plate - px[p]);
      sw += weight;
      su += weight * (p % w);
      sv += weight * (p / w);
    };
    for (int p : components[kept[k]]) accumulate(p);
    for (int p : ring[k]) accumulate(p);
    if (sw <= 0.0) throw WrongBlobCount(kept.size() - 1, expected_count);
    centroids.emplace_back(su / sw, sv / sw);
  }
  return centroids;
}

namespace detail {

/// Dominant lattice direction from nearest-neighbor offsets (defined modulo 90 degrees).
inline Eigen::Vector2d lattice_direction(std::span<const PixelCoord> pts) {
  double c = 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Vector2d off = Eigen::Vector2d::UnitX();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j) continue;
      const double d = (pts[j] - pts[i]).squaredNorm();
      if (d < best) {
        best = d;
        off = pts[j] - pts[i];
      }
    }
    const double a = 4.0 * std::atan2(off.y(), off.x());
    c += std::cos(a);
    s += std::sin(a);
  }
  const double theta = 0.25 * std::atan2(s, c);
  return {std::cos(theta), std::sin(theta)};
}

/// Splits points into `rows` bands across `along`, each band sorted along `along`.
inline bool cluster_bands(std::span<const PixelCoord> pts, const Eigen::Vector2d& along, int rows, int cols,
                          std::vector<std::vector<int>>& grid) {
  const Eigen::Vector2d across(-along.y(), along.x());
  std::vector<int> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> key(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) key[i] = pts[i].dot(across);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return key[a] < key[b]; });

  std::vector<std::pair<double, int>> gaps;
  for (std::size_t i = 1; i < idx.size(); ++i) gaps.emplace_back(key[idx[i]] - key[idx[i - 1]], static_cast<int>(i));
  std::stable_sort(gaps.begin(), gaps.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> cuts;
  for (int i = 0; i < rows - 1; ++i) cuts.push_back(gaps[i].second);
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(static_cast<int>(idx.size()));

  grid.assign(rows, {});
  int begin = 0;
  for (int r = 0; r < rows; ++r) {
    if (cuts[r] - begin != cols) return false;
    grid[r].assign(idx.begin() + begin, idx.begin() + cuts[r]);
    std::stable_sort(grid[r].begin(), grid[r].end(),
                     [&](int a, int b) { return pts[a].dot(along) < pts[b].dot(along); });
    begin = cuts[r];
  }
  return true;
}

/// Homography taking four source points exactly onto four destination points.
inline std::optional<Eigen::Matrix3d> four_point_homography(const std::array<Eigen::Vector2d, 4>& src,
                                                            const std::array<Eigen::Vector2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x();
    const double y = src[i].y();
    const double u = dst[i].x();
    const double v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

inline std::vector<int> convex_hull(std::span<const PixelCoord> pts) {
  std::vector<int> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return pts[a].x() < pts[b].x() || (pts[a].x() == pts[b].x() && pts[a].y() < pts[b].y());
  });
  auto cross = [&](int o, int a, int b) {
    return (pts[a] - pts[o]).x() * (pts[b] - pts[o]).y() - (pts[a] - pts[o]).y() * (pts[b] - pts[o]).x();
  };
  std::vector<int> hull(2 * idx.size());
  std::size_t k = 0;
  for (int i : idx) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], i) <= 0) --k;
    hull[k++] = i;
  }
  for (std::size_t i = idx.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], idx[i]) <= 0) --k;
    hull[k++] = idx[i];
  }
  hull.resize(k > 1 ? k - 1 : k);
  return hull;
}

/// Perspective-robust ordering: the four outer corners of the grid define a homography
/// onto the integer lattice, and every centroid is labeled by rounding its image.
inline bool cluster_by_corners(std::span<const PixelCoord> pts, int rows, int cols,
                               std::vector<std::vector<int>>& grid) {
  const std::vector<int> hull = convex_hull(pts);
  const int n = static_cast<int>(hull.size());
  if (n < 4) return false;
  auto area = [&](int a, int b, int c, int d) {
    const std::array<int, 4> q{hull[a], hull[b], hull[c], hull[d]};
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
      const auto& p0 = pts[q[i]];
      const auto& p1 = pts[q[(i + 1) % 4]];
      s += p0.x() * p1.y() - p1.x() * p0.y();
    }
    return std::abs(s);
  };
  std::array<int, 4> best{};
  double best_area = -1.0;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int c = b + 1; c < n; ++c)
        for (int d = c + 1; d < n; ++d) {
          const double s = area(a, b, c, d);
          if (s > best_area) {
            best_area = s;
            best = {hull[a], hull[b], hull[c], hull[d]};
          }
        }

  const std::array<Eigen::Vector2d, 4> lattice{Eigen::Vector2d(0, 0), Eigen::Vector2d(cols - 1, 0),
                                               Eigen::Vector2d(cols - 1, rows - 1), Eigen::Vector2d(0, rows - 1)};
  double best_residual = std::numeric_limits<double>::infinity();
  bool found = false;
  for (int start = 0; start < 4; ++start) {
    for (int dir : {1, 3}) {
      std::array<Eigen::Vector2d, 4> src;
      for (int i = 0; i < 4; ++i) src[i] = pts[best[(start + dir * i) % 4]];
      const auto hmat = four_point_homography(src, lattice);
      if (!hmat) continue;
      std::vector<std::vector<int>> cand(rows, std::vector<int>(cols, -1));
      double residual = 0.0;
      bool ok = true;
      for (int i = 0; i < static_cast<int>(pts.size()) && ok; ++i) {
        const Eigen::Vector3d q = *hmat * pts[i].homogeneous();
        if (!(std::abs(q.z()) > 1e-12)) {
          ok = false;
          break;
        }
        const Eigen::Vector2d g = q.head<2>() / q.z();
        const long c = std::lround(g.x());
        const long r = std::lround(g.y());
        if (r < 0 || c < 0 || r >= rows || c >= cols || cand[r][c] >= 0) {
          ok = false;
          break;
        }
        cand[r][c] = i;
        residual += (g - Eigen::Vector2d(c, r)).squaredNorm();
      }
      if (ok && residual < best_residual) {
        best_residual = residual;
        grid = std::move(cand);
        found = true;
      }
    }
  }
  return found;
}

}  // namespace detail

/// Orders `rows * cols` centroids row-major. Rows are found as bands across the grid's
/// principal axis; among the equivalent orientations of the lattice the one whose first
/// point minimizes u + v is chosen, with rows running towards +u on square grids.
inline std::vector<PixelCoord> order_grid(std::span<const PixelCoord> centroids, int rows, int cols) {
  if (rows < 2 || cols < 2) throw InvalidArgument("grid needs at least 2 rows and 2 columns");
  if (centroids.size() != static_cast<std::size_t>(rows) * cols) {
    throw InvalidArgument("expected " + std::to_string(rows * cols) + " centroids, got " +
                          std::to_string(centroids.size()));
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : centroids) mean += p;
  mean /= static_cast<double>(centroids.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : centroids) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Eigen::Vector2d minor = eig.eigenvectors().col(0);
  const Eigen::Vector2d major = eig.eigenvectors().col(1);
  const bool anisotropic = eig.eigenvalues()(1) > 1.2 * eig.eigenvalues()(0);

  // Rows run along the long side of the grid.
  std::vector<Eigen::Vector2d> candidates;
  if (anisotropic) {
    const Eigen::Vector2d primary = cols >= rows ? major : minor;
    candidates = {primary, Eigen::Vector2d(-primary.y(), primary.x())};
  } else {
    const Eigen::Vector2d d = detail::lattice_direction(centroids);
    candidates = {d, Eigen::Vector2d(-d.y(), d.x())};
  }

  std::vector<std::vector<int>> grid;
  bool ok = false;
  for (const auto& along : candidates) {
    if (detail::cluster_bands(centroids, along, rows, cols, grid)) {
      ok = true;
      break;
    }
  }
  // Strong perspective makes rows converge so that bands overlap; fall back to labeling
  // through the outer corners.
  if (!ok) ok = detail::cluster_by_corners(centroids, rows, cols, grid);
  if (!ok) throw AmbiguousGrid("could not split centroids into equal rows");

  auto at = [&](int r, int c, bool flip_r, bool flip_c, bool transpose) {
    if (transpose) std::swap(r, c);
    return centroids[grid[flip_r ? rows - 1 - r : r][flip_c ? cols - 1 - c : c]];
  };
  bool best_fr = false;
  bool best_fc = false;
  bool best_tr = false;
  double best_sum = std::numeric_limits<double>::infinity();
  double best_step = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < (rows == cols ? 2 : 1); ++t) {
    for (int f = 0; f < 4; ++f) {
      const bool fr = f & 1;
      const bool fc = f & 2;
      const PixelCoord first = at(0, 0, fr, fc, t);
      const double sum = first.x() + first.y();
      const double step = at(0, 1, fr, fc, t).x() - first.x();
      constexpr double kTie = 1e-9;
      if (sum < best_sum - kTie || (std::abs(sum - best_sum) <= kTie && step > best_step)) {
        best_sum = sum;
        best_step = step;
        best_fr = fr;
        best_fc = fc;
        best_tr = t;
      }
    }
  }
  std::vector<PixelCoord> ordered;
  ordered.reserve(centroids.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) ordered.push_back(at(r, c, best_fr, best_fc, best_tr));
  }
  return ordered;
}

inline GridObservation make_observation(std::vector<PixelCoord> ordered, const TargetSpec& target,
                                        std::string view_id, CameraId camera) {
  if (ordered.size() != target.count()) throw InvalidArgument("observation size does not match the target");
  GridObservation obs;
  obs.view_id = std::move(view_id);
  obs.camera = camera;
  obs.rows = target.rows;
  obs.cols = target.cols;
  obs.image_points = std::move(ordered);
  obs.object_points = target.object_points();
  return obs;
}

/// Detect, order and pair with object coordinates in one step.
template <typename T>
GridObservation detect_grid(const Raster<T>& image, const TargetSpec& target, std::string view_id, CameraId camera) {
  const auto blobs = detect_blobs(image, target.count());
  return make_observation(order_grid(blobs, target.rows, target.cols), target, std::move(view_id), camera);
}

}  // namespace msv
