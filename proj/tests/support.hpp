#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "datekit/linalg.hpp"
#include "datekit/rng.hpp"

namespace datekit::fixtures {

/// Random SPD matrix G G^T + eps I of size p, with entries of G uniform in [-1, 1].
inline Matrix random_spd(Index p, SeededRng& rng, double eps = 0.05) {
    Matrix g(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) g(i, j) = rng.uniform(-1.0, 1.0);
    Matrix a = g * g.transpose();
    a.diagonal().array() += eps;
    return 0.5 * (a + a.transpose());
}

/// Rescales an SPD matrix to unit diagonal.
inline Matrix to_unit_diagonal(const Matrix& a) {
    const Vector d = a.diagonal().cwiseSqrt().cwiseInverse();
    Matrix out = d.asDiagonal() * a * d.asDiagonal();
    out.diagonal().setOnes();
    return 0.5 * (out + out.transpose());
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("datekit_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace datekit::fixtures
