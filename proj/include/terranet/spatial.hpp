#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "terranet/pointcloud.hpp"
#include "terranet/rng.hpp"
#include "terranet/tensor.hpp"

namespace terranet {

/// Spherical neighborhood: sample exactly K points within radius R.
struct NeighborhoodSpec {
    double radius = 25.0;
    std::size_t k = 128;

    void validate() const {
        if (!(radius > 0)) throw DomainError("neighborhood radius must be > 0");
        if (k < 1) throw DomainError("neighborhood sample count must be >= 1");
    }
};

/// Static KD-tree over the scene points (2D or 3D keys). Median split with
/// ties broken by point index, so construction is deterministic given input
/// order. Queries always test the full 3D Euclidean distance.
class KdTree {
public:
    explicit KdTree(const PointCloud& cloud, int dims = 3, std::size_t leaf_capacity = 16)
        : dims_(dims), leaf_capacity_(std::max<std::size_t>(1, leaf_capacity)) {
        if (cloud.size() == 0) throw DomainError("build_kdtree: empty cloud");
        if (dims_ != 2 && dims_ != 3) throw DomainError("build_kdtree: dims must be 2 or 3");
        coords_.resize(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            coords_[i] = {cloud.points[i].x, cloud.points[i].y, cloud.points[i].z};
        }
        order_.resize(cloud.size());
        std::iota(order_.begin(), order_.end(), 0u);
        nodes_.reserve(2 * cloud.size() / leaf_capacity_ + 2);
        root_ = build(0, order_.size(), 0);
    }

    std::size_t size() const { return order_.size(); }

    /// All indices with 3D Euclidean distance <= R from the center, in
    /// ascending index order.
    std::vector<std::uint32_t> radius_query(double x, double y, double z, double radius) const {
        if (!(radius > 0)) throw DomainError("radius_query: radius must be > 0");
        std::vector<std::uint32_t> out;
        const double center[3] = {x, y, z};
        collect(root_, center, radius, radius * radius, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Visits every stored index exactly once (partition property checks).
    std::span<const std::uint32_t> all_indices() const { return order_; }

private:
    struct Node {
        double split = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
        std::int8_t axis = -1; // -1 marks a leaf
    };

    std::int32_t build(std::size_t begin, std::size_t end, int depth) {
        Node node;
        if (end - begin <= leaf_capacity_) {
            node.begin = static_cast<std::uint32_t>(begin);
            node.end = static_cast<std::uint32_t>(end);
            // canonical leaf order: ascending index
            std::sort(order_.begin() + begin, order_.begin() + end);
            nodes_.push_back(node);
            return static_cast<std::int32_t>(nodes_.size() - 1);
        }
        const int axis = depth % dims_;
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = coords_[a][axis], cb = coords_[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        node.axis = static_cast<std::int8_t>(axis);
        node.split = coords_[order_[mid]][axis];
        const std::int32_t self = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(node);
        const std::int32_t left = build(begin, mid, depth + 1);
        const std::int32_t right = build(mid, end, depth + 1);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return self;
    }

    void collect(std::int32_t node_id, const double center[3], double radius, double radius_sq,
                 std::vector<std::uint32_t>& out) const {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t idx = order_[i];
                const auto& c = coords_[idx];
                const double dx = c[0] - center[0];
                const double dy = c[1] - center[1];
                const double dz = c[2] - center[2];
                if (dx * dx + dy * dy + dz * dz <= radius_sq) out.push_back(idx);
            }
            return;
        }
        const double delta = center[node.axis] - node.split;
        // Points equal to the split value may sit on either side.
        if (delta <= radius) collect(node.left, center, radius, radius_sq, out);
        if (delta >= -radius) collect(node.right, center, radius, radius_sq, out);
    }

    int dims_;
    std::size_t leaf_capacity_;
    std::vector<std::array<double, 3>> coords_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

inline KdTree build_kdtree(const PointCloud& cloud, int dims = 3) { return KdTree(cloud, dims); }

/// Exactly K samples from the candidate list: a uniform draw without
/// replacement when enough candidates exist, otherwise all candidates plus
/// uniform replication.
inline std::vector<std::uint32_t> sample_neighbors(std::span<const std::uint32_t> candidates,
                                                   std::size_t k, Rng& rng) {
    if (candidates.empty()) throw DomainError("sample_neighbors: empty candidate list");
    std::vector<std::uint32_t> out;
    out.reserve(k);
    if (candidates.size() >= k) {
        std::vector<std::uint32_t> pool(candidates.begin(), candidates.end());
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    } else {
        out.assign(candidates.begin(), candidates.end());
        while (out.size() < k) {
            out.push_back(candidates[rng.uniform_index(candidates.size())]);
        }
    }
    return out;
}

/// One x/y tile of the scene. Membership is half-open (min inclusive, max
/// exclusive); the outermost row/column additionally includes the scene's
/// upper boundary so the tiling covers every point.
struct Block {
    int ix = 0, iy = 0;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    std::vector<std::uint32_t> indices;

    std::size_t id() const { return static_cast<std::size_t>(iy) * 1000003u + ix; }
};

namespace detail {

struct BlockGridAxis {
    double origin = 0;
    double stride = 0;
    double block = 0;
    int count = 1;

    /// Inclusive anchor range [lo, hi] of blocks containing coordinate v.
    std::pair<int, int> touching(double v) const {
        int hi = static_cast<int>(std::floor((v - origin) / stride));
        int lo = static_cast<int>(std::floor((v - origin - block) / stride)) + 1;
        hi = std::min(hi, count - 1);
        lo = std::max(lo, 0);
        // A point exactly on the grid's outer open edge folds into the last block.
        if (lo > hi) lo = hi = count - 1;
        return {lo, hi};
    }
};

inline BlockGridAxis make_axis(double min_v, double max_v, double block, double stride) {
    BlockGridAxis axis{min_v, stride, block, 1};
    const double extent = max_v - min_v;
    if (extent > block) {
        axis.count = 1 + static_cast<int>(std::ceil((extent - block) / stride - 1e-9));
    }
    return axis;
}

} // namespace detail

/// Overlapping grid of blocks anchored at the scene x/y minimum, stride
/// block_size*(1-overlap), extended to cover the scene maximum. Blocks that
/// end up empty are dropped. Every point falls in at least one block.
inline std::vector<Block> partition_blocks(const PointCloud& cloud, double block_size,
                                           double overlap_fraction) {
    if (!(block_size > 0)) throw DomainError("partition_blocks: block_size must be > 0");
    if (!(overlap_fraction >= 0 && overlap_fraction < 1)) {
        throw DomainError("partition_blocks: overlap_fraction must lie in [0, 1)");
    }
    const double stride = block_size * (1.0 - overlap_fraction);
    const auto ax = detail::make_axis(cloud.min_bound[0], cloud.max_bound[0], block_size, stride);
    const auto ay = detail::make_axis(cloud.min_bound[1], cloud.max_bound[1], block_size, stride);

    std::vector<Block> grid(static_cast<std::size_t>(ax.count) * ay.count);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point& p = cloud.points[i];
        const auto [xlo, xhi] = ax.touching(p.x);
        const auto [ylo, yhi] = ay.touching(p.y);
        for (int by = ylo; by <= yhi; ++by) {
            for (int bx = xlo; bx <= xhi; ++bx) {
                grid[static_cast<std::size_t>(by) * ax.count + bx].indices.push_back(
                    static_cast<std::uint32_t>(i));
            }
        }
    }

    std::vector<Block> blocks;
    for (int by = 0; by < ay.count; ++by) {
        for (int bx = 0; bx < ax.count; ++bx) {
            Block& b = grid[static_cast<std::size_t>(by) * ax.count + bx];
            if (b.indices.empty()) continue;
            b.ix = bx;
            b.iy = by;
            b.x0 = ax.origin + bx * stride;
            b.y0 = ay.origin + by * stride;
            b.x1 = b.x0 + block_size;
            b.y1 = b.y0 + block_size;
            blocks.push_back(std::move(b));
        }
    }
    return blocks;
}

/// NxKx10 neighborhood features: slice [i,:,:] holds K sampled neighbors of
/// point i with the xyz channels query-centered (offsets from point i) and
/// the remaining channels as in the point feature vector. The tree must
/// cover the full scene — with R larger than the block size the neighbors
/// deliberately reach beyond the block.
inline Tensor<float> assemble_neighborhood_tensor(const PointCloud& cloud,
                                                  std::span<const std::uint32_t> block_points,
                                                  const KdTree& tree,
                                                  const NeighborhoodSpec& spec, Rng& rng) {
    spec.validate();
    if (block_points.empty()) {
        throw DomainError("assemble_neighborhood_tensor: empty block");
    }
    const std::size_t n = block_points.size();
    Tensor<float> out({n, spec.k, kFeatureCount});
    for (std::size_t i = 0; i < n; ++i) {
        const Point& query = cloud.points[block_points[i]];
        const auto candidates =
            tree.radius_query(query.x, query.y, query.z, spec.radius);
        const auto chosen = sample_neighbors(candidates, spec.k, rng);
        for (std::size_t s = 0; s < spec.k; ++s) {
            const Point& nb = cloud.points[chosen[s]];
            const auto norm = scene_normalize(cloud, nb);
            float* row = out.data() + (i * spec.k + s) * kFeatureCount;
            row[0] = static_cast<float>(nb.x - query.x);
            row[1] = static_cast<float>(nb.y - query.y);
            row[2] = static_cast<float>(nb.z - query.z);
            row[3] = static_cast<float>(nb.ir);
            row[4] = static_cast<float>(nb.r);
            row[5] = static_cast<float>(nb.g);
            row[6] = static_cast<float>(ndvi(nb.ir, nb.r));
            row[7] = static_cast<float>(norm[0]);
            row[8] = static_cast<float>(norm[1]);
            row[9] = static_cast<float>(norm[2]);
        }
    }
    return out;
}

} // namespace terranet
