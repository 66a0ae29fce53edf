#pragma once

// Per-lane space-time velocity contour maps from fixed-sensor and probe
// samples, using source-weighted adaptive smoothing with separate free-flow and
// congested wave-aligned kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "trajfuse/core.hpp"
#include "trajfuse/ingest.hpp"

namespace trajfuse {

class OutOfHull : public Error {
public:
  using Error::Error;
};

enum class SampleSource : std::size_t { fixed = 0, probe = 1 };
inline constexpr std::size_t kSourceCount = 2;

/// How the congestion weight is formed in the multi-source blend.
enum class OmegaMode {
  per_source,  ///< each source uses its own free/congested components
  pooled,      ///< one weight from the alpha-pooled components
};

struct AsmParams {
  double sigma = 6.0;      ///< spatial smoothing width [m]
  double tau = 2.0;        ///< temporal smoothing width [s]
  double v_free = 24.0;    ///< free-flow wave speed [m/s]
  double v_cong = -5.0;    ///< congested wave speed [m/s], negative
  double v_thresh = 15.0;  ///< free/congested threshold [m/s]
  double delta_v = 3.6;    ///< transition width [m/s]
  std::array<double, kSourceCount> source_weights{1.0, 1.0};
  OmegaMode omega_mode = OmegaMode::per_source;
  /// Kernel support in units of sigma/tau; 0 disables truncation.
  double support = 5.0;
  /// Overrides the adaptive congestion weight when set.
  std::optional<double> fixed_omega;

  [[nodiscard]] double alpha(SampleSource s) const { return source_weights[static_cast<std::size_t>(s)]; }

  void validate() const {
    if (!(sigma > 0.0) || !(tau > 0.0) || !(delta_v > 0.0)) {
      throw ValidationError("asm: sigma, tau and delta_v must be positive");
    }
    if (!(v_cong < 0.0 && v_free > 0.0)) throw ValidationError("asm: need v_cong < 0 < v_free");
    for (double a : source_weights) {
      if (!(a > 0.0)) throw ValidationError("asm: source weights must be positive");
    }
    if (support < 0.0) throw ValidationError("asm: support must be non-negative");
  }
};

struct DetectionSample {
  double x = 0.0;
  double t = 0.0;
  double v = 0.0;
  SampleSource source = SampleSource::fixed;
  LaneId lane = 0;
};

/// Exponent of the isotropic kernel, |dx|/sigma + |dt|/tau.
inline double kernel_exponent(double dx, double dt, const AsmParams& params) {
  return std::abs(dx) / params.sigma + std::abs(dt) / params.tau;
}

inline double kernel_weight(double dx, double dt, const AsmParams& params) {
  return std::exp(-kernel_exponent(dx, dt, params));
}

/// Kernel exponent of sample s seen from (x, t) with principal axis skewed
/// along characteristic speed c.
inline double skewed_exponent(double x, double t, const DetectionSample& s, double c, const AsmParams& params) {
  const double dx = x - s.x;
  return kernel_exponent(dx, t - s.t - dx / c, params);
}

/// Weighted mean of sample speeds under the kernel skewed along wave_speed.
inline double component_velocity(double x, double t, std::span<const DetectionSample> samples, double wave_speed,
                                  const AsmParams& params) {
  if (samples.empty()) throw InsufficientSamples("component velocity needs at least one sample");
  double e_min = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) e_min = std::min(e_min, skewed_exponent(x, t, s, wave_speed, params));
  double num = 0.0;
  double den = 0.0;
  for (const auto& s : samples) {
    const double w = std::exp(-(skewed_exponent(x, t, s, wave_speed, params) - e_min));
    num += w * s.v;
    den += w;
  }
  return num / den;
}

/// Adaptive s-shaped congestion weight.
inline double congestion_weight(double v_free_comp, double v_cong_comp, const AsmParams& params) {
  return 0.5 * (1.0 + std::tanh((params.v_thresh - std::min(v_free_comp, v_cong_comp)) / params.delta_v));
}

/// Samples of one lane indexed by time per source, for repeated point queries.
class SampleIndex {
public:
  SampleIndex() = default;
  explicit SampleIndex(std::span<const DetectionSample> samples) {
    for (const auto& s : samples) by_source_[static_cast<std::size_t>(s.source)].push_back(s);
    for (auto& v : by_source_) {
      std::sort(v.begin(), v.end(), [](const DetectionSample& a, const DetectionSample& b) { return a.t < b.t; });
    }
  }

  [[nodiscard]] std::span<const DetectionSample> source(SampleSource s) const {
    return by_source_[static_cast<std::size_t>(s)];
  }
  [[nodiscard]] bool empty() const {
    return std::all_of(by_source_.begin(), by_source_.end(), [](const auto& v) { return v.empty(); });
  }
  [[nodiscard]] std::pair<double, double> speed_range() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& v : by_source_) {
      for (const auto& s : v) {
        lo = std::min(lo, s.v);
        hi = std::max(hi, s.v);
      }
    }
    return {lo, hi};
  }

private:
  std::array<std::vector<DetectionSample>, kSourceCount> by_source_;
};

namespace detail {

struct KernelSums {
  double free_w = 0.0, free_wv = 0.0, cong_w = 0.0, cong_wv = 0.0;
};

/// Accumulates both kernels over the samples of one source. Exponents are taken
/// relative to `shift` so that distant queries do not underflow.
inline KernelSums accumulate(double x, double t, std::span<const DetectionSample> samples, const AsmParams& p,
                             bool truncate, double shift) {
  KernelSums sums;
  auto first = samples.begin();
  auto last = samples.end();
  const double e_cut = p.support;
  if (truncate) {
    // Any sample inside the support lies within this time band.
    const double reach = e_cut * p.tau + e_cut * p.sigma / std::min(std::abs(p.v_cong), std::abs(p.v_free));
    first = std::lower_bound(samples.begin(), samples.end(), t - reach,
                             [](const DetectionSample& s, double v) { return s.t < v; });
    last = std::upper_bound(first, samples.end(), t + reach,
                            [](double v, const DetectionSample& s) { return v < s.t; });
  }
  for (auto it = first; it != last; ++it) {
    const auto& s = *it;
    const double dx = x - s.x;
    if (truncate && std::abs(dx) > e_cut * p.sigma) continue;
    if (!truncate || std::abs(t - s.t - dx / p.v_free) <= e_cut * p.tau) {
      const double w = std::exp(-(skewed_exponent(x, t, s, p.v_free, p) - shift));
      sums.free_w += w;
      sums.free_wv += w * s.v;
    }
    if (!truncate || std::abs(t - s.t - dx / p.v_cong) <= e_cut * p.tau) {
      const double w = std::exp(-(skewed_exponent(x, t, s, p.v_cong, p) - shift));
      sums.cong_w += w;
      sums.cong_wv += w * s.v;
    }
  }
  return sums;
}

inline double min_exponent(double x, double t, const SampleIndex& index, const AsmParams& p) {
  double e = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < kSourceCount; ++s) {
    for (const auto& d : index.source(static_cast<SampleSource>(s))) {
      e = std::min({e, skewed_exponent(x, t, d, p.v_free, p), skewed_exponent(x, t, d, p.v_cong, p)});
    }
  }
  return e;
}

inline double omega_for(const KernelSums& k, const AsmParams& p) {
  if (p.fixed_omega) return *p.fixed_omega;
  const bool has_free = k.free_w > 0.0;
  const bool has_cong = k.cong_w > 0.0;
  if (!has_free && !has_cong) return 0.5;
  const double vf = has_free ? k.free_wv / k.free_w : std::numeric_limits<double>::infinity();
  const double vc = has_cong ? k.cong_wv / k.cong_w : std::numeric_limits<double>::infinity();
  return congestion_weight(vf, vc, p);
}

inline std::optional<double> blend(double x, double t, const SampleIndex& index, const AsmParams& p, bool truncate,
                                   double shift) {
  std::array<KernelSums, kSourceCount> sums;
  for (std::size_t s = 0; s < kSourceCount; ++s) {
    sums[s] = accumulate(x, t, index.source(static_cast<SampleSource>(s)), p, truncate, shift);
  }
  std::optional<double> pooled_omega;
  if (p.omega_mode == OmegaMode::pooled) {
    KernelSums pooled;
    for (std::size_t s = 0; s < kSourceCount; ++s) {
      const double a = p.source_weights[s];
      pooled.free_w += a * sums[s].free_w;
      pooled.free_wv += a * sums[s].free_wv;
      pooled.cong_w += a * sums[s].cong_w;
      pooled.cong_wv += a * sums[s].cong_wv;
    }
    pooled_omega = omega_for(pooled, p);
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t s = 0; s < kSourceCount; ++s) {
    const auto& k = sums[s];
    if (k.free_w <= 0.0 && k.cong_w <= 0.0) continue;  // source contributes no terms here
    const double w = pooled_omega ? *pooled_omega : omega_for(k, p);
    const double a = p.source_weights[s];
    num += a * (w * k.cong_wv + (1.0 - w) * k.free_wv);
    den += a * (w * k.cong_w + (1.0 - w) * k.free_w);
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

}  // namespace detail

/// Source-weighted blend of congested and free kernels at (x, t). Falls back
/// to the untruncated sum when no sample lies inside the truncated support.
inline double estimate_velocity(double x, double t, const SampleIndex& index, const AsmParams& params) {
  if (index.empty()) throw InsufficientSamples("velocity estimate needs at least one sample");
  if (params.support > 0.0) {
    if (auto v = detail::blend(x, t, index, params, true, 0.0)) return *v;
  }
  const double shift = detail::min_exponent(x, t, index, params);
  auto v = detail::blend(x, t, index, params, false, shift);
  if (!v) throw InsufficientSamples("velocity estimate has zero total weight");
  return *v;
}

inline double estimate_velocity(double x, double t, std::span<const DetectionSample> samples, const AsmParams& params) {
  return estimate_velocity(x, t, SampleIndex(samples), params);
}

struct GridSpec {
  double dx = 10.0;
  double dt = 2.0;

  void validate() const {
    if (!(dx > 0.0) || !(dt > 0.0)) throw ValidationError("grid: dx and dt must be positive");
  }
};

struct FieldWindow {
  double x_lo = 0.0;
  double x_hi = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
};

/// Gridded velocity estimate of one lane with bilinear read-back.
class VelocityField {
public:
  LaneId lane = 0;
  double x0 = 0.0, dx = 1.0;
  double t0 = 0.0, dt = 1.0;
  std::size_t nx = 0, nt = 0;
  std::vector<double> values;  ///< row-major, index ix * nt + it

  [[nodiscard]] double x_at(std::size_t ix) const { return x0 + static_cast<double>(ix) * dx; }
  [[nodiscard]] double t_at(std::size_t it) const { return t0 + static_cast<double>(it) * dt; }
  [[nodiscard]] double x_max() const { return x_at(nx - 1); }
  [[nodiscard]] double t_max() const { return t_at(nt - 1); }
  [[nodiscard]] double node(std::size_t ix, std::size_t it) const { return values[ix * nt + it]; }
  [[nodiscard]] double& node(std::size_t ix, std::size_t it) { return values[ix * nt + it]; }

  [[nodiscard]] bool inside(double x, double t) const {
    constexpr double eps = 1e-9;
    return nx > 0 && nt > 0 && x >= x0 - eps && x <= x_max() + eps && t >= t0 - eps && t <= t_max() + eps;
  }

  /// Clamps a point onto the grid hull.
  [[nodiscard]] std::pair<double, double> clamp(double x, double t) const {
    return {std::clamp(x, x0, x_max()), std::clamp(t, t0, t_max())};
  }
};

inline double query_field(const VelocityField& field, double x, double t) {
  if (!field.inside(x, t)) {
    throw OutOfHull("field query (" + std::to_string(x) + " m, " + std::to_string(t) + " s) outside lane " +
                    std::to_string(field.lane) + " grid");
  }
  auto locate = [](double u, double origin, double step, std::size_t n, std::size_t& i, double& f) {
    const double r = std::clamp((u - origin) / step, 0.0, static_cast<double>(n - 1));
    i = std::min(static_cast<std::size_t>(r), n >= 2 ? n - 2 : 0);
    f = n >= 2 ? r - static_cast<double>(i) : 0.0;
  };
  std::size_t ix = 0, it = 0;
  double fx = 0.0, ft = 0.0;
  locate(x, field.x0, field.dx, field.nx, ix, fx);
  locate(t, field.t0, field.dt, field.nt, it, ft);
  const std::size_t ix1 = field.nx >= 2 ? ix + 1 : ix;
  const std::size_t it1 = field.nt >= 2 ? it + 1 : it;
  const double v00 = field.node(ix, it), v01 = field.node(ix, it1);
  const double v10 = field.node(ix1, it), v11 = field.node(ix1, it1);
  return (1 - fx) * ((1 - ft) * v00 + ft * v01) + fx * ((1 - ft) * v10 + ft * v11);
}

/// Field value at the nearest hull point; used where fused trajectories wander
/// slightly beyond the sensor stations.
inline double query_field_clamped(const VelocityField& field, double x, double t) {
  auto [cx, ct] = field.clamp(x, t);
  return query_field(field, cx, ct);
}

inline VelocityField build_velocity_field(LaneId lane, const FieldWindow& window, const GridSpec& grid,
                                          std::span<const DetectionSample> samples, const AsmParams& params) {
  params.validate();
  grid.validate();
  std::vector<DetectionSample> own;
  for (const auto& s : samples) {
    if (s.lane == lane) own.push_back(s);
  }
  if (own.empty()) throw InsufficientSamples("no samples for lane " + std::to_string(lane));
  const SampleIndex index(own);

  VelocityField f;
  f.lane = lane;
  f.x0 = window.x_lo;
  f.dx = grid.dx;
  f.t0 = window.t_lo;
  f.dt = grid.dt;
  f.nx = static_cast<std::size_t>(std::ceil((window.x_hi - window.x_lo) / grid.dx - 1e-9)) + 1;
  f.nt = static_cast<std::size_t>(std::ceil((window.t_hi - window.t_lo) / grid.dt - 1e-9)) + 1;
  f.values.resize(f.nx * f.nt);
  for (std::size_t ix = 0; ix < f.nx; ++ix) {
    for (std::size_t it = 0; it < f.nt; ++it) f.node(ix, it) = estimate_velocity(f.x_at(ix), f.t_at(it), index, params);
  }
  return f;
}

/// Fixed-sensor events and probe trajectory samples (inside the segment) of
/// one lane, with probe speeds from the central-difference profile.
inline std::vector<DetectionSample> collect_samples(const DetectionLog& log, const TrajectorySet& probes, LaneId lane) {
  std::vector<DetectionSample> out;
  const auto& g = probes.geometry;
  for (const auto& ev : log.events()) {
    if (ev.lane != lane) continue;
    out.push_back({ev.station == Station::upstream ? g.x_up : g.x_down, ev.arrival_time, ev.speed,
                   SampleSource::fixed, lane});
  }
  for (const auto& [id, traj] : probes.trajectories) {
    if (traj.size() < 3) continue;
    const auto prof = velocity_profile(traj);
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const auto& p = traj.points[k];
      if (p.lane != lane || p.position < g.x_up || p.position > g.x_down) continue;
      out.push_back({p.position, p.time, std::max(0.0, prof[k].speed), SampleSource::probe, lane});
    }
  }
  return out;
}

/// Time window spanned by the samples, widened to whole multiples of dt.
inline FieldWindow sample_window(std::span<const DetectionSample> samples, const SegmentGeometry& geometry,
                                 double dt) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : samples) {
    lo = std::min(lo, s.t);
    hi = std::max(hi, s.t);
  }
  if (!std::isfinite(lo)) throw InsufficientSamples("no samples to bound the field window");
  return {geometry.x_up, geometry.x_down, std::floor(lo / dt) * dt, std::ceil(hi / dt) * dt};
}

/// `lane,x_m,t_s,v_mps`, one row per node.
inline void write_field_csv(std::ostream& out, std::span<const VelocityField> fields, bool header = true) {
  if (header) out << "lane,x_m,t_s,v_mps\n";
  char buf[128];
  for (const auto& f : fields) {
    for (std::size_t ix = 0; ix < f.nx; ++ix) {
      for (std::size_t it = 0; it < f.nt; ++it) {
        std::snprintf(buf, sizeof buf, "%d,%.3f,%.3f,%.6f\n", f.lane, f.x_at(ix), f.t_at(it), f.node(ix, it));
        out << buf;
      }
    }
  }
}

}  // namespace trajfuse
