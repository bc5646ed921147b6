#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/geometry.hpp"

namespace skyshade {

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Exact k-nearest-neighbor index over a fixed point set. Results are sorted
/// by ascending distance with ties broken by insertion order, matching a
/// linear scan with the same comparator. Read-only after construction, so
/// concurrent queries are safe.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    nodes_.reserve(points_.size() / kLeafSize * 2 + 4);
    if (!points_.empty()) root_ = build(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// The min(k, N) nearest points to `query` by Euclidean distance.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
    if (points_.empty()) fail(errc::empty_cloud, "knn on empty index");
    if (k == 0) fail(errc::invalid_config, "knn needs k >= 1");
    k = std::min(k, points_.size());

    // Max-heap of the best k candidates ordered by (distance^2, index).
    std::vector<Entry> heap;
    heap.reserve(k);
    search(root_, query, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i)
      out[i] = {heap[i].index, std::sqrt(heap[i].dist2)};
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 16;
  static constexpr int kNone = -1;

  struct Entry {
    double dist2;
    std::size_t index;
    bool operator<(const Entry& o) const {
      return dist2 != o.dist2 ? dist2 < o.dist2 : index < o.index;
    }
  };

  struct Node {
    double split = 0.0;
    int axis = 0;
    int left = kNone;
    int right = kNone;
    std::size_t begin = 0;
    std::size_t end = 0;  // leaf iff end > begin
  };

  static double coord(const Vec3& p, int axis) {
    return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
  }

  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
      // Keep insertion order inside leaves so equal-distance ties resolve
      // identically to a forward linear scan.
      std::sort(order_.begin() + begin, order_.begin() + end);
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& p = points_[order_[i]];
      lo.x = std::min(lo.x, p.x);
      lo.y = std::min(lo.y, p.y);
      lo.z = std::min(lo.z, p.z);
      hi.x = std::max(hi.x, p.x);
      hi.y = std::max(hi.y, p.y);
      hi.z = std::max(hi.z, p.z);
    }
    const Vec3 extent = hi - lo;
    int axis = 0;
    if (extent.y > coord(extent, axis)) axis = 1;
    if (extent.z > coord(extent, axis)) axis = 2;
    if (coord(extent, axis) == 0.0) {
      // All points coincide on every axis; a leaf is the only sane shape.
      std::sort(order_.begin() + begin, order_.begin() + end);
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return coord(points_[a], axis) < coord(points_[b], axis);
                     });
    const double split = coord(points_[order_[mid]], axis);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void consider(const Vec3& query, std::size_t index, std::size_t k,
                std::vector<Entry>& heap) const {
    const Vec3 d = points_[index] - query;
    const Entry e{d.squared_norm(), index};
    if (heap.size() < k) {
      heap.push_back(e);
      std::push_heap(heap.begin(), heap.end());
    } else if (e < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = e;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(int node_id, const Vec3& query, std::size_t k, std::vector<Entry>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.end > node.begin) {
      for (std::size_t i = node.begin; i < node.end; ++i)
        consider(query, order_[i], k, heap);
      return;
    }
    const double dq = coord(query, node.axis) - node.split;
    const int near = dq < 0.0 ? node.left : node.right;
    const int far = dq < 0.0 ? node.right : node.left;
    search(near, query, k, heap);
    if (heap.size() < k || dq * dq <= heap.front().dist2) search(far, query, k, heap);
  }

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = kNone;
};

}  // namespace skyshade
