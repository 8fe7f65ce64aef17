#pragma once

#include <fcp/data/dataset.hpp>
#include <fcp/errors.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <random>

namespace fcp::data {

/// Parameters of the synthetic VAR(1) generator.
///
///   x_i = A x_{i-1} + nu_i,             nu_i ~ N(0, feature_noise^2 I)
///   y_i = C x_i + eps_i,                eps_i = exp(hetero * tanh(x_{i,1})) L z_i
///
/// with A = coupling (0.7 I + 0.3 P), C = I + 0.5 P, P the cyclic shift, and
/// L L^T = noise_scale^2 ((1 - rho) I + rho 1 1^T).
struct SynthSpec {
    int d = 2;
    std::size_t length = 2000;
    double coupling = 0.5;
    double feature_noise = 1.0;
    double noise_scale = 1.0;
    double rho = 0.8;
    double hetero = 0.5;
    std::size_t burn_in = 100;
};

inline Matrix cyclic_shift(int d) {
    Matrix p = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i) p(i, (i + 1) % d) = 1.0;
    return p;
}

inline Matrix var_transition(const SynthSpec& s) {
    return s.coupling * (0.7 * Matrix::Identity(s.d, s.d) + 0.3 * cyclic_shift(s.d));
}

inline Matrix observation_matrix(const SynthSpec& s) {
    return Matrix::Identity(s.d, s.d) + 0.5 * cyclic_shift(s.d);
}

inline double spectral_radius(const Matrix& a) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Generates the series; the true eps_i is kept in `noise`.
inline SeriesDataset synth_var(std::uint64_t seed, const SynthSpec& s) {
    if (s.d < 1) throw UsageError("synth: d must be >= 1");
    if (s.length < 1) throw UsageError("synth: T must be >= 1");
    if (s.noise_scale < 0.0 || s.feature_noise < 0.0) throw UsageError("synth: noise scales must be >= 0");
    if (s.d > 1 && !(s.rho > -1.0 / (s.d - 1) && s.rho < 1.0))
        throw UsageError("synth: correlation outside the positive-definite range");
    const Matrix a = var_transition(s);
    const double rho = spectral_radius(a);
    // a unit root computed as 1 - 1e-16 is still a unit root
    if (!(rho < 1.0 - 1e-12)) throw UnstableSystem(rho);
    const Matrix c = observation_matrix(s);

    Matrix chol = Matrix::Zero(s.d, s.d);
    if (s.noise_scale > 0.0) {
        Matrix cov = (1.0 - s.rho) * Matrix::Identity(s.d, s.d) + s.rho * Matrix::Ones(s.d, s.d);
        cov *= s.noise_scale * s.noise_scale;
        chol = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&] {
        Vector z(s.d);
        for (int j = 0; j < s.d; ++j) z[j] = normal(rng);
        return z;
    };

    const auto t = static_cast<Eigen::Index>(s.length);
    SeriesDataset ds;
    ds.timestamps.resize(s.length);
    ds.x.resize(t, s.d);
    ds.y.resize(t, s.d);
    Matrix noise(t, s.d);
    Vector x = Vector::Zero(s.d);
    for (std::size_t i = 0; i < s.burn_in + s.length; ++i) {
        x = a * x + s.feature_noise * draw();
        const Vector z = draw();
        if (i < s.burn_in) continue;
        const auto r = static_cast<Eigen::Index>(i - s.burn_in);
        const Vector eps = std::exp(s.hetero * std::tanh(x[0])) * (chol * z);
        ds.timestamps[static_cast<std::size_t>(r)] = static_cast<double>(r);
        ds.x.row(r) = x.transpose();
        ds.y.row(r) = (c * x + eps).transpose();
        noise.row(r) = eps.transpose();
    }
    ds.noise = std::move(noise);
    return ds;
}

}  // namespace fcp::data
