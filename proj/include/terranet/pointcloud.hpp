#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "terranet/errors.hpp"
#include "terranet/tensor.hpp"

namespace terranet {

/// One point in a local planar coordinate system. Spectral values are
/// normalized to [0,1] at load; gt_dtm is NaN when no truth is attached.
struct Point {
    double x = 0, y = 0, z = 0;
    double ir = 0, r = 0, g = 0;
    double gt_dtm = std::numeric_limits<double>::quiet_NaN();

    bool has_truth() const { return std::isfinite(gt_dtm); }
};

/// Immutable-after-load scene. Elevations are datum-shifted so the minimum
/// point z is exactly 0 (the relu output head can only produce nonnegative
/// predictions); the subtracted offset is kept for restoring world heights.
struct PointCloud {
    std::vector<Point> points;
    std::array<double, 3> min_bound{0, 0, 0};
    std::array<double, 3> max_bound{0, 0, 0};
    double datum_offset = 0;
    bool has_truth = false;

    std::size_t size() const { return points.size(); }
};

/// Computes bounds and applies the datum shift to z and gt_dtm alike.
inline PointCloud finalize_cloud(std::vector<Point> points) {
    if (points.empty()) throw DomainError("point cloud is empty");
    PointCloud cloud;
    cloud.min_bound = {points[0].x, points[0].y, points[0].z};
    cloud.max_bound = cloud.min_bound;
    cloud.has_truth = true;
    for (const Point& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw DomainError("point cloud contains non-finite coordinates");
        }
        cloud.min_bound[0] = std::min(cloud.min_bound[0], p.x);
        cloud.min_bound[1] = std::min(cloud.min_bound[1], p.y);
        cloud.min_bound[2] = std::min(cloud.min_bound[2], p.z);
        cloud.max_bound[0] = std::max(cloud.max_bound[0], p.x);
        cloud.max_bound[1] = std::max(cloud.max_bound[1], p.y);
        cloud.max_bound[2] = std::max(cloud.max_bound[2], p.z);
        cloud.has_truth = cloud.has_truth && p.has_truth();
    }
    cloud.datum_offset = cloud.min_bound[2];
    for (Point& p : points) {
        p.z -= cloud.datum_offset;
        if (p.has_truth()) p.gt_dtm -= cloud.datum_offset;
    }
    cloud.min_bound[2] = 0.0;
    cloud.max_bound[2] -= cloud.datum_offset;
    cloud.points = std::move(points);
    return cloud;
}

enum class CloudFormat { XyzText, BinaryTile };

namespace detail {

inline constexpr char kBinaryMagic[4] = {'P', 'C', 'T', '1'};

inline void check_spectral(double v, const std::string& what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ParseError(what + ": spectral value " + std::to_string(v) +
                         " outside [0,1] after normalization");
    }
}

} // namespace detail

inline PointCloud load_cloud_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open point cloud: " + path.string());

    std::vector<Point> points;
    double spectral_range = 1.0;
    std::string line;
    std::size_t lineno = 0;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos) continue;
        if (line[start] == '#') {
            std::istringstream hdr(line.substr(start + 1));
            std::string key;
            hdr >> key;
            if (key == "spectral_range") {
                if (seen_data) {
                    throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                     ": spectral_range header after data lines");
                }
                if (!(hdr >> spectral_range) || !(spectral_range > 0)) {
                    throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                     ": invalid spectral_range");
                }
            }
            continue;
        }
        std::istringstream fields(line.substr(start));
        std::vector<double> cols;
        double v;
        while (fields >> v) cols.push_back(v);
        if (!fields.eof()) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": non-numeric field in record");
        }
        if (cols.size() != 6 && cols.size() != 7) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 6 or 7 " +
                             "columns (x y z ir r g [gt_dtm]), got " +
                             std::to_string(cols.size()));
        }
        Point p;
        p.x = cols[0];
        p.y = cols[1];
        p.z = cols[2];
        p.ir = cols[3] / spectral_range;
        p.r = cols[4] / spectral_range;
        p.g = cols[5] / spectral_range;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        detail::check_spectral(p.ir, where);
        detail::check_spectral(p.r, where);
        detail::check_spectral(p.g, where);
        if (cols.size() == 7) p.gt_dtm = cols[6];
        points.push_back(p);
        seen_data = true;
    }
    if (points.empty()) throw ParseError(path.string() + ": no data records");
    return finalize_cloud(std::move(points));
}

inline PointCloud load_cloud_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open point cloud: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, detail::kBinaryMagic, 4) != 0) {
        throw ParseError(path.string() + ": not a binary point tile (bad magic)");
    }
    std::uint64_t count = 0;
    if (!in.read(reinterpret_cast<char*>(&count), 8)) {
        throw ParseError(path.string() + ": truncated header");
    }
    if (count == 0) throw ParseError(path.string() + ": empty tile");
    std::vector<Point> points;
    points.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        double rec[7];
        if (!in.read(reinterpret_cast<char*>(rec), sizeof rec)) {
            throw ParseError(path.string() + ": truncated at point " + std::to_string(i));
        }
        Point p;
        p.x = rec[0];
        p.y = rec[1];
        p.z = rec[2];
        p.ir = rec[3];
        p.r = rec[4];
        p.g = rec[5];
        p.gt_dtm = rec[6];
        const std::string where = path.string() + " point " + std::to_string(i);
        detail::check_spectral(p.ir, where);
        detail::check_spectral(p.r, where);
        detail::check_spectral(p.g, where);
        points.push_back(p);
    }
    return finalize_cloud(std::move(points));
}

inline PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
    return format == CloudFormat::XyzText ? load_cloud_text(path) : load_cloud_binary(path);
}

/// Writes world-frame values (datum offset restored).
inline void write_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                        CloudFormat format) {
    if (format == CloudFormat::XyzText) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + path.string());
        out << "# x y z ir r g" << (cloud.has_truth ? " gt_dtm" : "") << "\n";
        out << "# spectral_range 1\n";
        char buf[256];
        for (const Point& p : cloud.points) {
            int len;
            if (cloud.has_truth) {
                len = std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", p.x,
                                    p.y, p.z + cloud.datum_offset, p.ir, p.r, p.g,
                                    p.gt_dtm + cloud.datum_offset);
            } else {
                len = std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f\n", p.x, p.y,
                                    p.z + cloud.datum_offset, p.ir, p.r, p.g);
            }
            out.write(buf, len);
        }
        if (!out) throw IoError("short write: " + path.string());
    } else {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + path.string());
        out.write(detail::kBinaryMagic, 4);
        const std::uint64_t count = cloud.points.size();
        out.write(reinterpret_cast<const char*>(&count), 8);
        for (const Point& p : cloud.points) {
            const double rec[7] = {
                p.x,  p.y,  p.z + cloud.datum_offset,
                p.ir, p.r,  p.g,
                p.has_truth() ? p.gt_dtm + cloud.datum_offset
                              : std::numeric_limits<double>::quiet_NaN()};
            out.write(reinterpret_cast<const char*>(rec), sizeof rec);
        }
        if (!out) throw IoError("short write: " + path.string());
    }
}

/// Prediction output: the cloud's text records with a dtm_pred column
/// appended (world-frame meters).
inline void write_predictions(const PointCloud& cloud, std::span<const double> predictions,
                              const std::filesystem::path& path) {
    if (predictions.size() != cloud.size()) {
        throw DimensionError("write_predictions: " + std::to_string(predictions.size()) +
                             " predictions for " + std::to_string(cloud.size()) + " points");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "# x y z ir r g" << (cloud.has_truth ? " gt_dtm" : "") << " dtm_pred\n";
    out << "# spectral_range 1\n";
    char buf[320];
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Point& p = cloud.points[i];
        int len;
        if (cloud.has_truth) {
            len = std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", p.x,
                                p.y, p.z + cloud.datum_offset, p.ir, p.r, p.g,
                                p.gt_dtm + cloud.datum_offset, predictions[i]);
        } else {
            len = std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", p.x, p.y,
                                p.z + cloud.datum_offset, p.ir, p.r, p.g, predictions[i]);
        }
        out.write(buf, len);
    }
    if (!out) throw IoError("short write: " + path.string());
}

/// Reads the last (dtm_pred) column of a predictions file.
inline std::vector<double> read_prediction_column(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions: " + path.string());
    std::vector<double> preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream fields(line.substr(start));
        std::vector<double> cols;
        double v;
        while (fields >> v) cols.push_back(v);
        if (cols.size() < 7) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": predictions record needs >= 7 columns");
        }
        preds.push_back(cols.back());
    }
    if (preds.empty()) throw ParseError(path.string() + ": no prediction records");
    return preds;
}

/// (ir - r) / (ir + r); 0 when both channels are zero.
inline double ndvi(double ir, double r) {
    if (ir < 0 || r < 0) throw DomainError("ndvi: negative spectral input");
    const double denom = ir + r;
    return denom == 0.0 ? 0.0 : (ir - r) / denom;
}

/// Min-max map of a point's coordinates to [0,1] over the scene extent;
/// degenerate axes map to 0.
inline std::array<double, 3> scene_normalize(const PointCloud& cloud, const Point& p) {
    std::array<double, 3> out{};
    const double coords[3] = {p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
        const double extent = cloud.max_bound[a] - cloud.min_bound[a];
        out[a] = extent > 0 ? (coords[a] - cloud.min_bound[a]) / extent : 0.0;
    }
    return out;
}

inline constexpr std::size_t kFeatureCount = 10;

/// The fixed 10-D feature vector: block-centered (x,y,z) from the centroid
/// of the selected points, spectral (ir,r,g), ndvi, scene-normalized
/// (x,y,z). Rows follow index order.
inline Tensor<float> build_feature_matrix(const PointCloud& cloud,
                                          std::span<const std::uint32_t> indices) {
    if (indices.empty()) throw DomainError("build_feature_matrix: empty index list");
    double cx = 0, cy = 0, cz = 0;
    for (std::uint32_t idx : indices) {
        const Point& p = cloud.points.at(idx);
        cx += p.x;
        cy += p.y;
        cz += p.z;
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    cx *= inv;
    cy *= inv;
    cz *= inv;

    Tensor<float> features({indices.size(), kFeatureCount});
    for (std::size_t row = 0; row < indices.size(); ++row) {
        const Point& p = cloud.points[indices[row]];
        const auto norm = scene_normalize(cloud, p);
        float* out = features.data() + row * kFeatureCount;
        out[0] = static_cast<float>(p.x - cx);
        out[1] = static_cast<float>(p.y - cy);
        out[2] = static_cast<float>(p.z - cz);
        out[3] = static_cast<float>(p.ir);
        out[4] = static_cast<float>(p.r);
        out[5] = static_cast<float>(p.g);
        out[6] = static_cast<float>(ndvi(p.ir, p.r));
        out[7] = static_cast<float>(norm[0]);
        out[8] = static_cast<float>(norm[1]);
        out[9] = static_cast<float>(norm[2]);
    }
    return features;
}

} // namespace terranet
