#pragma once

// Ground-truth generation for the linear model with correlated noise, step
// faults and unknown disturbances.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "umvf/model.hpp"

namespace umvf {

/// Counter-based generator: draw i is SplitMix64's finalizer applied to
/// seed + i * golden_gamma, so any draw can be reproduced from (seed, i)
/// alone. Meets UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return at(seed_, ++counter_); }

  static result_type at(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + index * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

struct NoisePair {
  Vector w;  // process, n
  Vector v;  // measurement, m
};

/// v = R_half v~,  w = X v~ + Qx_half w~  with v~ drawn before w~.
inline NoisePair sample_noise_pair(const NoiseFactors& f, CounterRng& rng) {
  const Eigen::Index m = f.R_half.L.rows(), n = f.Qx_half.rows();
  Vector vt(m), wt(n);
  for (Eigen::Index i = 0; i < m; ++i) vt(i) = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) wt(i) = rng.normal();
  NoisePair out;
  out.v = f.R_half.L * vt;
  out.w = f.X * vt + f.Qx_half * wt;
  return out;
}

/// amplitude * u_s(k - onset)
struct StepTerm {
  double amplitude = 0.0;
  long onset = 0;
};

/// One list of step terms per fault channel.
struct FaultSignalSpec {
  std::vector<std::vector<StepTerm>> channels;
};

inline Vector fault_signal_at(const FaultSignalSpec& spec, long k) {
  Vector f = Vector::Zero(static_cast<Eigen::Index>(spec.channels.size()));
  for (std::size_t c = 0; c < spec.channels.size(); ++c) {
    for (const StepTerm& t : spec.channels[c]) {
      if (k >= t.onset) f(static_cast<Eigen::Index>(c)) += t.amplitude;
    }
  }
  return f;
}

struct DisturbanceSpec {
  enum class Mode { none, sequence, parametric };
  Mode mode = Mode::none;

  std::vector<Vector> sequence;  // d_k for explicit mode

  // Parametric mode: d_k = a_scale * A[row,:] x_k + b_scale * B[row,:] u_k,
  // injected through G = e_row.
  Eigen::Index row = 0;
  double a_scale = 0.0;
  double b_scale = 0.0;
};

struct InputSpec {
  Vector constant;               // used when `sequence` is empty
  std::vector<Vector> sequence;

  Vector at(long k, Eigen::Index r) const {
    if (!sequence.empty()) {
      if (static_cast<std::size_t>(k) >= sequence.size()) {
        throw Error(ErrorKind::LengthMismatch, "input sequence shorter than horizon", k);
      }
      return sequence[static_cast<std::size_t>(k)];
    }
    return constant.size() == 0 ? Vector::Zero(r) : constant;
  }
};

struct TruthSpec {
  Vector x0;
  InputSpec input;
  FaultSignalSpec faults;
  DisturbanceSpec disturbance;
};

struct TruthRecord {
  long k = 0;
  Vector x_true;
  Vector y;
  Vector u;
  Vector f_true;
  Vector d_true;
  Vector w;
  Vector v;
};

inline Vector disturbance_at(const DisturbanceSpec& spec, const MatrixBundle& b, const Vector& x, const Vector& u,
                             long k) {
  const Eigen::Index q = b.G.cols();
  switch (spec.mode) {
    case DisturbanceSpec::Mode::none:
      return Vector::Zero(q);
    case DisturbanceSpec::Mode::sequence:
      if (static_cast<std::size_t>(k) >= spec.sequence.size()) {
        throw Error(ErrorKind::LengthMismatch, "disturbance sequence shorter than horizon", k);
      }
      check_shape(spec.sequence[static_cast<std::size_t>(k)], q, 1, "d_k");
      return spec.sequence[static_cast<std::size_t>(k)];
    case DisturbanceSpec::Mode::parametric: {
      const double d = spec.a_scale * b.A.row(spec.row).dot(x) + spec.b_scale * b.B.row(spec.row).dot(u);
      return Vector::Constant(1, d);
    }
  }
  return Vector::Zero(q);
}

inline void check_parametric(const DisturbanceSpec& spec, const MatrixBundle& b) {
  if (spec.mode != DisturbanceSpec::Mode::parametric) return;
  const Eigen::Index n = b.A.rows();
  if (b.G.cols() != 1 || spec.row < 0 || spec.row >= n) {
    throw Error(ErrorKind::Config, "parametric disturbance needs q = 1 and a valid row");
  }
  Vector e = Vector::Zero(n);
  e(spec.row) = 1.0;
  if (max_abs(b.G.col(0) - e) != 0.0) {
    throw Error(ErrorKind::Config, "parametric disturbance needs G = e_" + std::to_string(spec.row + 1));
  }
}

/// Simulates `horizon` steps. d_k in parametric mode is evaluated from the
/// pre-update (x_k, u_k). Deterministic in (model, spec, seed).
inline std::vector<TruthRecord> simulate(const SystemModel& model, const TruthSpec& spec, long horizon,
                                         std::uint64_t seed) {
  if (horizon < 1) throw Error(ErrorKind::Config, "horizon must be >= 1");
  const SystemDims& d = model.dims();
  check_shape(spec.x0, d.n, 1, "x0");
  if (static_cast<Eigen::Index>(spec.faults.channels.size()) != d.p) {
    throw Error(ErrorKind::DimensionMismatch, "fault spec has " + std::to_string(spec.faults.channels.size()) +
                                                  " channels, model has p=" + std::to_string(d.p));
  }

  CounterRng rng(seed);
  std::vector<TruthRecord> out;
  out.reserve(static_cast<std::size_t>(horizon));
  Vector x = spec.x0;
  for (long k = 0; k < horizon; ++k) {
    const MatrixBundle b = matrices_at(model, k);
    if (k == 0) check_parametric(spec.disturbance, b);
    const NoiseFactors nf = factor_noise(b.Q, b.R, b.S);

    TruthRecord rec;
    rec.k = k;
    rec.x_true = x;
    rec.u = spec.input.at(k, d.r);
    check_shape(rec.u, d.r, 1, "u_k");
    rec.f_true = fault_signal_at(spec.faults, k);
    rec.d_true = disturbance_at(spec.disturbance, b, x, rec.u, k);
    const NoisePair np = sample_noise_pair(nf, rng);
    rec.w = np.w;
    rec.v = np.v;
    rec.y = b.C * x + b.Fy * rec.f_true + rec.v;

    x = b.A * x + b.B * rec.u + b.Fx * rec.f_true + b.G * rec.d_true + rec.w;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace umvf
