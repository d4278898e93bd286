#pragma once

// Small dense symmetric eigensolver used by the decomposition baseline.
// Matrices are row-major.

#include <cmath>
#include <cstddef>
#include <vector>

namespace dlif::detail {

/// Cyclic Jacobi for a symmetric n x n matrix. Returns eigenvalues (ascending
/// not guaranteed; see sort below) and eigenvectors as columns of V.
inline void jacobi_eigen_sym(int n, std::vector<double> a, std::vector<double>& evals,
                             std::vector<double>& evecs) {
    evecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) evecs[static_cast<std::size_t>(i) * n + i] = 1.0;

    auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    auto vt = [&](int r, int c) -> double& { return evecs[static_cast<std::size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-30) break;

        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vt(k, p), vkq = vt(k, q);
                    vt(k, p) = c * vkp - s * vkq;
                    vt(k, q) = s * vkp + c * vkq;
                }
            }
    }
    evals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) evals[static_cast<std::size_t>(i)] = at(i, i);
}

}  // namespace dlif::detail
