#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "terranet/pointcloud.hpp"
#include "terranet/rng.hpp"

namespace terranet {

/// Procedural scene parameters. Defaults give a 200m x 200m mixed scene at
/// the 4 points/m^2 density typical of airborne acquisitions.
struct SynthConfig {
    double extent_x = 200.0;
    double extent_y = 200.0;
    double density = 4.0; // points per m^2

    int terrain_bumps = 30;
    double amplitude = 8.0;  // max height of a single bump, meters
    double wavelength = 40.0; // horizontal scale of the bumps, meters

    int buildings = 12;
    double building_footprint_min = 6.0, building_footprint_max = 14.0;
    double building_height_min = 3.0, building_height_max = 15.0;

    int trees = 30;
    double crown_radius_min = 1.0, crown_radius_max = 3.0;
    double tree_height_min = 4.0, tree_height_max = 10.0;

    double sensor_sigma = 0.02; // vertical noise on ground returns, meters
    std::uint64_t seed = 0;

    void validate() const {
        if (!(extent_x > 0) || !(extent_y > 0)) throw ConfigError("synth: extent must be > 0");
        if (!(density > 0)) throw ConfigError("synth: density must be > 0");
        if (amplitude < 0) throw ConfigError("synth: amplitude must be >= 0");
        if (terrain_bumps < 0 || buildings < 0 || trees < 0) {
            throw ConfigError("synth: object counts must be >= 0");
        }
        if (!(wavelength > 0)) throw ConfigError("synth: wavelength must be > 0");
        if (building_footprint_min > building_footprint_max ||
            building_height_min > building_height_max ||
            crown_radius_min > crown_radius_max || tree_height_min > tree_height_max) {
            throw ConfigError("synth: min/max ranges inverted");
        }
        if (buildings > 0 && (building_footprint_max >= extent_x ||
                              building_footprint_max >= extent_y)) {
            throw ConfigError("synth: building footprint does not fit the extent");
        }
        if (trees > 0 &&
            (2 * crown_radius_max >= extent_x || 2 * crown_radius_max >= extent_y)) {
            throw ConfigError("synth: tree crown does not fit the extent");
        }
        if (sensor_sigma < 0) throw ConfigError("synth: sensor_sigma must be >= 0");
    }
};

/// Smooth, bounded height field: a sum of seeded Gaussian bumps with
/// positive amplitudes, exactly evaluable anywhere. Serves as the per-point
/// ground truth oracle.
class TerrainFunction {
public:
    struct Bump {
        double cx, cy, amp, sigma;
    };

    static TerrainFunction random(const SynthConfig& config, Rng& rng) {
        TerrainFunction terrain;
        for (int i = 0; i < config.terrain_bumps; ++i) {
            Bump b;
            b.cx = rng.uniform(0.0, config.extent_x);
            b.cy = rng.uniform(0.0, config.extent_y);
            b.amp = rng.uniform(0.25, 1.0) * config.amplitude;
            b.sigma = rng.uniform(0.35, 1.0) * config.wavelength / 2.0;
            terrain.bumps_.push_back(b);
        }
        return terrain;
    }

    double operator()(double x, double y) const {
        double h = 0;
        for (const Bump& b : bumps_) {
            const double dx = x - b.cx;
            const double dy = y - b.cy;
            h += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        return h;
    }

    double amplitude_bound() const {
        double sum = 0;
        for (const Bump& b : bumps_) sum += std::abs(b.amp);
        return sum;
    }

    const std::vector<Bump>& bumps() const { return bumps_; }

private:
    std::vector<Bump> bumps_;
};

namespace detail {

struct BuildingBox {
    double x0, y0, x1, y1; // footprint
    double base, roof;     // elevations
};

inline double jitter(Rng& rng, double center, double spread) {
    return std::clamp(center + rng.uniform(-spread, spread), 0.0, 1.0);
}

} // namespace detail

struct SynthScene {
    PointCloud cloud;
    TerrainFunction terrain;
};

/// Deterministic scene: noisy ground sampling of the terrain, flat-roofed
/// boxes (roof and facade returns) and ellipsoidal tree crowns sitting on
/// it. Every point, including roof and canopy points, carries
/// gt_dtm = h(x, y) at its plan position. Vegetation gets a high-ir
/// signature so ndvi separates it from built structure.
inline SynthScene gen_scene_with_terrain(const SynthConfig& config) {
    config.validate();
    Rng rng(mix_seed(config.seed, {0x73796e7468ull})); // "synth"
    TerrainFunction terrain = TerrainFunction::random(config, rng);

    std::vector<detail::BuildingBox> boxes;
    for (int i = 0; i < config.buildings; ++i) {
        const double w = rng.uniform(config.building_footprint_min, config.building_footprint_max);
        const double d = rng.uniform(config.building_footprint_min, config.building_footprint_max);
        const double cx = rng.uniform(w / 2, config.extent_x - w / 2);
        const double cy = rng.uniform(d / 2, config.extent_y - d / 2);
        const double height = rng.uniform(config.building_height_min, config.building_height_max);
        detail::BuildingBox box{cx - w / 2, cy - d / 2, cx + w / 2, cy + d / 2, 0, 0};
        // base the roof on the highest footprint corner so walls never dig in
        box.base = std::max({terrain(box.x0, box.y0), terrain(box.x1, box.y0),
                             terrain(box.x0, box.y1), terrain(box.x1, box.y1),
                             terrain(cx, cy)});
        box.roof = box.base + height;
        boxes.push_back(box);
    }

    std::vector<Point> points;
    const double area = config.extent_x * config.extent_y;
    points.reserve(static_cast<std::size_t>(config.density * area * 1.1));

    auto inside_building = [&](double x, double y) {
        for (const auto& b : boxes) {
            if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) return true;
        }
        return false;
    };

    // Ground returns everywhere the sensor can see the ground.
    const auto ground_target = static_cast<std::size_t>(std::llround(config.density * area));
    for (std::size_t i = 0; i < ground_target; ++i) {
        const double x = rng.uniform(0.0, config.extent_x);
        const double y = rng.uniform(0.0, config.extent_y);
        const double noise = rng.normal(config.sensor_sigma);
        if (inside_building(x, y)) continue;
        Point p;
        p.x = x;
        p.y = y;
        p.z = terrain(x, y) + noise;
        p.ir = detail::jitter(rng, 0.32, 0.05);
        p.r = detail::jitter(rng, 0.30, 0.05);
        p.g = detail::jitter(rng, 0.33, 0.05);
        p.gt_dtm = terrain(x, y);
        points.push_back(p);
    }

    // Roof and facade returns.
    for (const auto& b : boxes) {
        const double w = b.x1 - b.x0, d = b.y1 - b.y0;
        const auto roof_count = static_cast<std::size_t>(std::llround(config.density * w * d));
        for (std::size_t i = 0; i < roof_count; ++i) {
            Point p;
            p.x = rng.uniform(b.x0, b.x1);
            p.y = rng.uniform(b.y0, b.y1);
            p.z = b.roof + rng.normal(config.sensor_sigma);
            p.ir = detail::jitter(rng, 0.48, 0.06);
            p.r = detail::jitter(rng, 0.47, 0.06);
            p.g = detail::jitter(rng, 0.47, 0.06);
            p.gt_dtm = terrain(p.x, p.y);
            points.push_back(p);
        }
        const double perimeter = 2 * (w + d);
        const double wall_height = b.roof - b.base;
        const auto facade_count = static_cast<std::size_t>(
            std::llround(config.density * 0.5 * perimeter * wall_height));
        for (std::size_t i = 0; i < facade_count; ++i) {
            const double along = rng.uniform(0.0, perimeter);
            Point p;
            if (along < w) {
                p.x = b.x0 + along;
                p.y = b.y0;
            } else if (along < w + d) {
                p.x = b.x1;
                p.y = b.y0 + (along - w);
            } else if (along < 2 * w + d) {
                p.x = b.x1 - (along - w - d);
                p.y = b.y1;
            } else {
                p.x = b.x0;
                p.y = b.y1 - (along - 2 * w - d);
            }
            const double local = terrain(p.x, p.y);
            p.z = rng.uniform(local, b.roof);
            p.ir = detail::jitter(rng, 0.45, 0.06);
            p.r = detail::jitter(rng, 0.44, 0.06);
            p.g = detail::jitter(rng, 0.44, 0.06);
            p.gt_dtm = local;
            points.push_back(p);
        }
    }

    // Tree crowns as ellipsoid shells above the terrain.
    for (int t = 0; t < config.trees; ++t) {
        const double r = rng.uniform(config.crown_radius_min, config.crown_radius_max);
        const double height = rng.uniform(config.tree_height_min, config.tree_height_max);
        const double cx = rng.uniform(r, config.extent_x - r);
        const double cy = rng.uniform(r, config.extent_y - r);
        const double ground = terrain(cx, cy);
        const double crown_z = ground + std::max(height - r, r + 0.5);
        const auto crown_count = static_cast<std::size_t>(
            std::llround(std::max(8.0, config.density * 2.0 * 3.141592653589793 * r * r)));
        for (std::size_t i = 0; i < crown_count; ++i) {
            // uniform direction via normalized gaussian triple
            double ux = rng.normal(), uy = rng.normal(), uz = rng.normal();
            const double len = std::sqrt(ux * ux + uy * uy + uz * uz);
            if (len < 1e-9) continue;
            Point p;
            p.x = cx + r * ux / len;
            p.y = cy + r * uy / len;
            p.z = crown_z + r * uz / len;
            p.z = std::max(p.z, terrain(p.x, p.y) + 0.05);
            p.ir = detail::jitter(rng, 0.78, 0.08);
            p.r = detail::jitter(rng, 0.16, 0.06);
            p.g = detail::jitter(rng, 0.42, 0.08);
            p.gt_dtm = terrain(p.x, p.y);
            points.push_back(p);
        }
    }

    SynthScene scene;
    scene.terrain = std::move(terrain);
    scene.cloud = finalize_cloud(std::move(points));
    return scene;
}

inline PointCloud gen_scene(const SynthConfig& config) {
    return gen_scene_with_terrain(config).cloud;
}

/// Splits one generated scene at the vertical mid-extent line into disjoint
/// train/test clouds sharing a single terrain function.
inline std::pair<PointCloud, PointCloud> gen_split(const SynthConfig& config) {
    const SynthScene scene = gen_scene_with_terrain(config);
    const double mid = config.extent_x / 2.0;
    std::vector<Point> left, right;
    for (const Point& p : scene.cloud.points) {
        Point world = p;
        world.z += scene.cloud.datum_offset;
        if (world.has_truth()) world.gt_dtm += scene.cloud.datum_offset;
        (world.x < mid ? left : right).push_back(world);
    }
    return {finalize_cloud(std::move(left)), finalize_cloud(std::move(right))};
}

} // namespace terranet
