#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "csober/rng.hpp"

namespace csober {

/// A location in a mixed continuous/binary input space. Binary entries are
/// stored as {0.0, 1.0}. pool_index identifies a member of a finite
/// candidate list when the point was drawn from one.
struct Point {
    Eigen::VectorXd continuous;
    Eigen::VectorXd binary;
    int pool_index = -1;

    Eigen::Index dims() const { return continuous.size() + binary.size(); }
};

inline Point make_continuous(Eigen::VectorXd x) {
    return Point{std::move(x), Eigen::VectorXd(), -1};
}

inline Point make_binary(Eigen::VectorXd bits, int pool_index = -1) {
    return Point{Eigen::VectorXd(), std::move(bits), pool_index};
}

inline bool same_point(const Point& a, const Point& b) {
    if (a.pool_index >= 0 && b.pool_index >= 0) return a.pool_index == b.pool_index;
    return a.continuous.size() == b.continuous.size() && a.binary.size() == b.binary.size() &&
           a.continuous == b.continuous && a.binary == b.binary;
}

/// Concatenated (continuous, binary) coordinates of one point.
inline Eigen::VectorXd coords(const Point& p) {
    Eigen::VectorXd v(p.dims());
    if (p.continuous.size() > 0) v.head(p.continuous.size()) = p.continuous;
    if (p.binary.size() > 0) v.tail(p.binary.size()) = p.binary;
    return v;
}

/// Column-per-point coordinate matrix for a point set.
inline Eigen::MatrixXd coords_matrix(std::span<const Point> pts) {
    if (pts.empty()) return Eigen::MatrixXd(0, 0);
    const Eigen::Index d = pts.front().dims();
    Eigen::MatrixXd m(d, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = coords(pts[i]);
    return m;
}

inline std::uint64_t hash_point(const Point& p, std::uint64_t seed) {
    std::uint64_t h = hash_bytes(p.continuous.data(), sizeof(double) * p.continuous.size(), seed);
    h = hash_bytes(p.binary.data(), sizeof(double) * p.binary.size(), h);
    return h;
}

}  // namespace csober
