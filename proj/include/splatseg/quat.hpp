// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_QUAT_HPP
#define SPLATSEG_QUAT_HPP

#include <array>
#include <cmath>

namespace splatseg {

/// Quaternions are stored (w, x, y, z) and assumed unit length.

/// Writes the 3x3 rotation matrix for q into r (row-major).
inline void quat_to_rot(const std::array<float, 4>& q, double r[9])
{
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    r[0] = 1.0 - 2.0 * (y * y + z * z);
    r[1] = 2.0 * (x * y - w * z);
    r[2] = 2.0 * (x * z + w * y);
    r[3] = 2.0 * (x * y + w * z);
    r[4] = 1.0 - 2.0 * (x * x + z * z);
    r[5] = 2.0 * (y * z - w * x);
    r[6] = 2.0 * (x * z - w * y);
    r[7] = 2.0 * (y * z + w * x);
    r[8] = 1.0 - 2.0 * (x * x + y * y);
}

/// Hamilton product a*b.
inline std::array<float, 4> quat_mul(const std::array<float, 4>& a, const std::array<float, 4>& b)
{
    const double aw = a[0], ax = a[1], ay = a[2], az = a[3];
    const double bw = b[0], bx = b[1], by = b[2], bz = b[3];
    return {
        float(aw * bw - ax * bx - ay * by - az * bz),
        float(aw * bx + ax * bw + ay * bz - az * by),
        float(aw * by - ax * bz + ay * bw + az * bx),
        float(aw * bz + ax * by - ay * bx + az * bw),
    };
}

/// Unit quaternion for a rotation of angle radians about axis (0=x,1=y,2=z).
inline std::array<float, 4> quat_axis_angle(int axis, double angle)
{
    const double h = 0.5 * angle;
    std::array<float, 4> q{float(std::cos(h)), 0.f, 0.f, 0.f};
    q[size_t(axis) + 1] = float(std::sin(h));
    return q;
}

/// World-space 3x3 covariance R * diag(s^2) * R^T, row-major.
inline void gaussian_covariance(const std::array<float, 4>& q, const std::array<float, 3>& s, double cov[9])
{
    double r[9];
    quat_to_rot(q, r);
    const double s2[3] = {double(s[0]) * s[0], double(s[1]) * s[1], double(s[2]) * s[2]};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += r[i * 3 + k] * s2[k] * r[j * 3 + k];
            cov[i * 3 + j] = acc;
        }
}

} // namespace splatseg

#endif // SPLATSEG_QUAT_HPP
