#pragma once

#include <cstdint>

namespace dgan::stats {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // population variance
};

template <typename T>
Moments moments(const T* p, std::int64_t n) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += double(p[i]);
    double mean = s / double(n);
    double v = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double d = double(p[i]) - mean;
        v += d * d;
    }
    return {mean, v / double(n)};
}

// Global (whole-signal) structural similarity:
//   (2 mx my + c1)(2 cov + c2) / ((mx^2 + my^2 + c1)(vx + vy + c2))
// with c1 = (0.01 L)^2, c2 = (0.03 L)^2 for dynamic range L.
template <typename T>
double ssim_global(const T* a, const T* b, std::int64_t n, double dynamic_range) {
    double sx = 0.0, sy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        sx += double(a[i]);
        sy += double(b[i]);
    }
    const double mx = sx / double(n), my = sy / double(n);
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double dx = double(a[i]) - mx, dy = double(b[i]) - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx /= double(n);
    vy /= double(n);
    cov /= double(n);
    const double c1 = 0.0001 * dynamic_range * dynamic_range;
    const double c2 = 0.0009 * dynamic_range * dynamic_range;
    return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
           ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace dgan::stats
