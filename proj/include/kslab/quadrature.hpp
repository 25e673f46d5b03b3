#pragma once

#include <cmath>
#include <vector>

#include "kslab/errors.hpp"

namespace kslab {

struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule with n nodes on [-1, 1]. Newton iteration on the
/// Legendre recurrence; accurate to machine precision for n <= 128.
inline Quadrature gauss_legendre(int n) {
    if (n < 1) throw UsageError("gauss_legendre: node count must be >= 1");
    Quadrature q;
    q.nodes.resize(n);
    q.weights.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        q.nodes[i] = -x;
        q.nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        q.weights[i] = w;
        q.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) q.nodes[n / 2] = 0.0;
    return q;
}

/// Same rule mapped to [0, 1].
inline Quadrature gauss_legendre_01(int n) {
    Quadrature q = gauss_legendre(n);
    for (int i = 0; i < n; ++i) {
        q.nodes[i] = 0.5 * (q.nodes[i] + 1.0);
        q.weights[i] *= 0.5;
    }
    return q;
}

} // namespace kslab
