#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "roughcal/core.hpp"
#include "roughcal/terrain.hpp"

namespace roughcal::vehicle {

/// Longitudinal half-car: front/rear unsprung masses on tire springs, a
/// pitching sprung body, suspension springs and dampers between them.
struct HalfCarParams {
  double m1 = 1.5, m2 = 1.5, m3 = 17.0;  // kg
  double I3 = 0.4;                       // kg m^2
  double K1 = 2e6, K2 = 2e6;             // N/m
  double C1 = 0.0, C2 = 0.0;             // N s/m
  double kt1 = 1e5, kt2 = 1e5;           // N/m
  double ct1 = 600.0, ct2 = 600.0;       // N s/m, tire damping
  double b1 = 0.131, b2 = 0.131;         // m, CG to axle

  void validate() const {
    auto pos = [](double x) { return std::isfinite(x) && x > 0; };
    auto nonneg = [](double x) { return std::isfinite(x) && x >= 0; };
    require(pos(m1) && pos(m2) && pos(m3) && pos(I3), ErrorKind::InvalidArgument,
            "masses and pitch inertia must be positive");
    require(pos(kt1) && pos(kt2), ErrorKind::InvalidArgument, "tire stiffness must be positive");
    require(nonneg(ct1) && nonneg(ct2), ErrorKind::InvalidArgument, "tire damping must be non-negative");
    require(nonneg(K1) && nonneg(K2) && nonneg(C1) && nonneg(C2), ErrorKind::InvalidArgument,
            "suspension stiffness and damping must be non-negative");
    require(pos(b1) && pos(b2), ErrorKind::InvalidArgument, "axle distances must be positive");
  }
  double wheelbase() const { return b1 + b2; }
  bool operator==(const HalfCarParams&) const = default;

  /// Stable text rendering used for provenance digests.
  std::string canonical() const {
    std::string out;
    auto put = [&](const char* k, double v) { out += std::string(k) + "=" + format_double(v) + ";"; };
    put("m1", m1); put("m2", m2); put("m3", m3); put("I3", I3);
    put("K1", K1); put("K2", K2); put("C1", C1); put("C2", C2);
    put("kt1", kt1); put("kt2", kt2); put("ct1", ct1); put("ct2", ct2);
    put("b1", b1); put("b2", b2);
    return out;
  }
};

/// Rigid-axle robot: no suspension damping, suspension springs replaced by a
/// stiff but finite value so explicit integration stays feasible. The tires
/// carry a small viscous term; set ct1 = ct2 = 0 for the purely elastic model.
inline HalfCarParams rigid_axle_defaults() { return HalfCarParams{}; }

/// y1, y2, y3, phi3 followed by their rates.
struct VehicleState {
  std::array<double, 8> q{};

  double& y1() { return q[0]; }
  double& y2() { return q[1]; }
  double& y3() { return q[2]; }
  double& phi() { return q[3]; }
  double y1() const { return q[0]; }
  double y2() const { return q[1]; }
  double y3() const { return q[2]; }
  double phi() const { return q[3]; }

  static VehicleState at_rest(double height) {
    VehicleState s;
    s.q[0] = s.q[1] = s.q[2] = height;
    return s;
  }
  bool operator==(const VehicleState&) const = default;
};

/// Time derivative of the state for road inputs u1 (front) and u2 (rear)
/// with road input rates du1, du2 (only the tire dampers see them).
/// Suspension deflections are s1 = y3 + b1 phi - y1 and s2 = y3 - b2 phi - y2;
/// the front force acts at +b1, the rear at -b2 about the body CG.
inline VehicleState derivatives(const VehicleState& s, const HalfCarParams& p, double u1, double u2,
                                double du1 = 0.0, double du2 = 0.0) {
  const auto& q = s.q;
  const double s1 = q[2] + p.b1 * q[3] - q[0];
  const double s2 = q[2] - p.b2 * q[3] - q[1];
  const double ds1 = q[6] + p.b1 * q[7] - q[4];
  const double ds2 = q[6] - p.b2 * q[7] - q[5];
  const double f1 = p.K1 * s1 + p.C1 * ds1;
  const double f2 = p.K2 * s2 + p.C2 * ds2;

  VehicleState d;
  d.q[0] = q[4];
  d.q[1] = q[5];
  d.q[2] = q[6];
  d.q[3] = q[7];
  d.q[4] = (f1 - p.kt1 * (q[0] - u1) - p.ct1 * (q[4] - du1)) / p.m1;
  d.q[5] = (f2 - p.kt2 * (q[1] - u2) - p.ct2 * (q[5] - du2)) / p.m2;
  d.q[6] = -(f1 + f2) / p.m3;
  d.q[7] = (-p.b1 * f1 + p.b2 * f2) / p.I3;
  return d;
}

/// Kinetic plus spring potential energy for frozen road inputs.
inline double mechanical_energy(const VehicleState& s, const HalfCarParams& p, double u1, double u2) {
  const auto& q = s.q;
  const double s1 = q[2] + p.b1 * q[3] - q[0];
  const double s2 = q[2] - p.b2 * q[3] - q[1];
  const double kinetic = 0.5 * (p.m1 * q[4] * q[4] + p.m2 * q[5] * q[5] + p.m3 * q[6] * q[6] +
                                p.I3 * q[7] * q[7]);
  const double potential = 0.5 * (p.K1 * s1 * s1 + p.K2 * s2 * s2 + p.kt1 * (q[0] - u1) * (q[0] - u1) +
                                  p.kt2 * (q[1] - u2) * (q[1] - u2));
  return kinetic + potential;
}

/// Largest modal rate of the linear system: undamped natural frequencies from
/// the generalized eigenproblem K v = w^2 M v, and damping rates of M^-1 C.
inline double max_modal_rate(const HalfCarParams& p) {
  Eigen::Matrix4d mass = Eigen::Vector4d(p.m1, p.m2, p.m3, p.I3).asDiagonal();
  Eigen::Vector4d a1(-1, 0, 1, p.b1), a2(0, -1, 1, -p.b2);
  Eigen::Matrix4d stiff = p.K1 * a1 * a1.transpose() + p.K2 * a2 * a2.transpose();
  stiff(0, 0) += p.kt1;
  stiff(1, 1) += p.kt2;
  Eigen::Matrix4d damp = p.C1 * a1 * a1.transpose() + p.C2 * a2 * a2.transpose();
  damp(0, 0) += p.ct1;
  damp(1, 1) += p.ct2;

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix4d> ks(stiff, mass);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix4d> cs(damp, mass);
  const double omega = std::sqrt(std::max(0.0, ks.eigenvalues().maxCoeff()));
  const double gamma = std::max(0.0, cs.eigenvalues().maxCoeff());
  return std::max(omega, gamma);
}

/// Largest internal step accepted by the integrator, 2 / (fastest modal rate).
inline double stability_bound(const HalfCarParams& p) { return 2.0 / max_modal_rate(p); }

inline constexpr double kDefaultDt = 2e-5;
inline constexpr double kDivergenceLimit = 1e3;

struct NoiseSpec {
  bool enabled = false;
  double sigma = 1.0;  // m/s^2
  std::uint64_t seed = 7;

  void validate() const {
    require(std::isfinite(sigma) && sigma >= 0, ErrorKind::InvalidArgument, "noise sigma must be >= 0");
  }
  bool operator==(const NoiseSpec&) const = default;
};

struct ImuSeries {
  double sample_rate_hz = 120.0;
  std::vector<double> a_front;      // m/s^2
  std::vector<double> v_commanded;  // m/s, per sample
  std::vector<double> positions_m;  // front axle position per sample

  std::size_t size() const { return a_front.size(); }
  double time(std::size_t k) const { return static_cast<double>(k) / sample_rate_hz; }
};

/// Stateful fixed-step RK4 integration of the half car over a profile. The
/// front wheel starts at x = 0; the rear wheel trails by the wheelbase and
/// sees the first profile height until it enters the road. The requested
/// internal step is shortened so an integer number of steps spans each IMU
/// period; samples are the front-axle acceleration at the sample instants.
class HalfCarSimulator {
 public:
  HalfCarSimulator(const terrain::RoadProfile& profile, const HalfCarParams& params,
                   double sample_rate_hz, double dt_internal = kDefaultDt)
      : profile_(&profile), params_(params), sample_rate_(sample_rate_hz) {
    params_.validate();
    require(std::isfinite(sample_rate_hz) && sample_rate_hz > 0, ErrorKind::InvalidArgument,
            "sample rate must be positive");
    require(std::isfinite(dt_internal) && dt_internal > 0, ErrorKind::InvalidArgument,
            "internal step must be positive");
    const double bound = stability_bound(params_);
    if (dt_internal > bound)
      throw Error(ErrorKind::StepTooLarge, "dt_internal " + format_double(dt_internal) +
                                               " s exceeds the stability bound; use dt <= " +
                                               format_double(bound) + " s");
    require(profile.length() > params_.wheelbase(), ErrorKind::InvalidArgument,
            "profile shorter than the wheelbase");
    const double period = 1.0 / sample_rate_hz;
    steps_per_sample_ = static_cast<std::int64_t>(std::ceil(period / dt_internal - 1e-9));
    steps_per_sample_ = std::max<std::int64_t>(steps_per_sample_, 1);
    dt_ = period / static_cast<double>(steps_per_sample_);
    state_ = VehicleState::at_rest(profile.heights_m.front());
  }

  double time() const { return static_cast<double>(samples_) / sample_rate_; }
  double position() const { return x_; }
  double step_size() const { return dt_; }
  std::size_t samples_taken() const { return samples_; }
  const VehicleState& state() const { return state_; }
  const HalfCarParams& params() const { return params_; }

  /// Front-axle acceleration at the current state and speed.
  double front_acceleration() const {
    const auto f = road(x_, last_v_);
    const auto r = road(x_ - params_.wheelbase(), last_v_);
    return derivatives(state_, params_, f.height, r.height, f.rate, r.rate).q[4];
  }

  /// True when advancing one IMU period at speed v keeps the front wheel on the profile.
  bool can_advance(double v) const {
    return x_ + v * dt_ * static_cast<double>(steps_per_sample_) <= profile_->length();
  }

  /// Integrates to the next sample instant at constant speed v and returns
  /// the front-axle acceleration there.
  double advance(double v) {
    require(std::isfinite(v) && v > 0 && v <= 10.0, ErrorKind::InvalidArgument,
            "velocity must lie in (0, 10] m/s");
    const double x0 = x_;
    for (std::int64_t j = 1; j <= steps_per_sample_; ++j) {
      rk4_step(x0 + v * dt_ * static_cast<double>(j - 1), v);
      x_ = x0 + v * dt_ * static_cast<double>(j);
    }
    last_v_ = v;
    ++samples_;
    return front_acceleration();
  }

 private:
  struct RoadInput {
    double height;
    double rate;  // d(height)/dt at speed v
  };

  // Road input on the grid cell containing `cell_x`, evaluated at x. Fixing
  // the cell lets each RK4 stage see one linear piece of the profile.
  RoadInput road_on_cell(double x, double cell_x, double v) const {
    const auto& h = profile_->heights_m;
    if (cell_x <= 0.0) return {h.front(), 0.0};
    const double sp = profile_->spacing_m;
    auto k = static_cast<std::size_t>(cell_x / sp);
    if (k >= h.size() - 1) return {h.back(), 0.0};
    const double dh = h[k + 1] - h[k];
    return {h[k] + (x / sp - static_cast<double>(k)) * dh, v * dh / sp};
  }
  RoadInput road(double x, double v) const { return road_on_cell(x, x, v); }

  void rk4_segment(double xa, double xb, double v) {
    const double h = (xb - xa) / v;
    const double wb = params_.wheelbase();
    const double xm = 0.5 * (xa + xb);
    const auto fa = road_on_cell(xa, xm, v), ra = road_on_cell(xa - wb, xm - wb, v);
    const auto fm = road_on_cell(xm, xm, v), rm = road_on_cell(xm - wb, xm - wb, v);
    const auto fb = road_on_cell(xb, xm, v), rb = road_on_cell(xb - wb, xm - wb, v);

    VehicleState tmp;
    const auto k1 = derivatives(state_, params_, fa.height, ra.height, fa.rate, ra.rate);
    for (int i = 0; i < 8; ++i) tmp.q[i] = state_.q[i] + 0.5 * h * k1.q[i];
    const auto k2 = derivatives(tmp, params_, fm.height, rm.height, fm.rate, rm.rate);
    for (int i = 0; i < 8; ++i) tmp.q[i] = state_.q[i] + 0.5 * h * k2.q[i];
    const auto k3 = derivatives(tmp, params_, fm.height, rm.height, fm.rate, rm.rate);
    for (int i = 0; i < 8; ++i) tmp.q[i] = state_.q[i] + h * k3.q[i];
    const auto k4 = derivatives(tmp, params_, fb.height, rb.height, fb.rate, rb.rate);
    for (int i = 0; i < 8; ++i)
      state_.q[i] += h / 6.0 * (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]);
  }

  /// One internal step; it is split at profile grid nodes crossed by either
  /// wheel so the piecewise-linear input never kinks inside an RK4 stage.
  void rk4_step(double x, double v) {
    const double xe = x + dt_ * v;
    const double sp = profile_->spacing_m;
    const double wb = params_.wheelbase();
    double breaks[2];
    int nb = 0;
    const double front_node = (std::floor(x / sp) + 1.0) * sp;
    if (front_node < xe) breaks[nb++] = front_node;
    const double xr = x - wb;
    const double rear_node = xr < 0.0 ? wb : (std::floor(xr / sp) + 1.0) * sp + wb;
    if (rear_node > x && rear_node < xe) breaks[nb++] = rear_node;
    if (nb == 2 && breaks[1] < breaks[0]) std::swap(breaks[0], breaks[1]);

    double xa = x;
    for (int i = 0; i < nb; ++i) {
      if (breaks[i] > xa) {
        rk4_segment(xa, breaks[i], v);
        xa = breaks[i];
      }
    }
    rk4_segment(xa, xe, v);

    ++step_;
    for (double c : state_.q) {
      if (!(std::abs(c) <= kDivergenceLimit))
        throw Error(ErrorKind::IntegrationDiverged,
                    "integration diverged at step " + std::to_string(step_) + " (t = " +
                        format_double(static_cast<double>(step_) * dt_) + " s)");
    }
  }

  const terrain::RoadProfile* profile_;
  HalfCarParams params_;
  double sample_rate_;
  double dt_ = kDefaultDt;
  std::int64_t steps_per_sample_ = 1;
  VehicleState state_{};
  double x_ = 0.0;
  double last_v_ = 0.0;
  std::int64_t step_ = 0;
  std::size_t samples_ = 0;
};

/// Commanded speed as a function of time since start.
using VelocityCommand = std::function<double(double t_s)>;

inline VelocityCommand constant_velocity(double v) {
  return [v](double) { return v; };
}

/// Draws the measurement noise sequence for `count` samples.
inline std::vector<double> noise_draws(const NoiseSpec& noise, std::size_t count) {
  Rng rng(noise.seed);
  std::vector<double> out(count);
  for (auto& e : out) e = noise.sigma * standard_normal(rng);
  return out;
}

/// Runs the half car over the whole profile; the command is read once per IMU
/// period and held constant across it.
inline ImuSeries simulate(const terrain::RoadProfile& profile, const VelocityCommand& v,
                          const HalfCarParams& params, double sample_rate_hz, const NoiseSpec& noise,
                          double dt_internal = kDefaultDt) {
  noise.validate();
  HalfCarSimulator sim(profile, params, sample_rate_hz, dt_internal);
  ImuSeries out;
  out.sample_rate_hz = sample_rate_hz;

  double vk = v(0.0);
  require(std::isfinite(vk) && vk > 0 && vk <= 10.0, ErrorKind::InvalidArgument,
          "velocity must lie in (0, 10] m/s");
  out.a_front.push_back(sim.front_acceleration());
  out.v_commanded.push_back(vk);
  out.positions_m.push_back(sim.position());
  while (true) {
    vk = v(sim.time());
    if (!sim.can_advance(vk)) break;
    out.a_front.push_back(sim.advance(vk));
    out.v_commanded.push_back(vk);
    out.positions_m.push_back(sim.position());
  }

  if (noise.enabled) {
    const auto eps = noise_draws(noise, out.size());
    for (std::size_t k = 0; k < out.size(); ++k) out.a_front[k] += eps[k];
  }
  return out;
}

inline ImuSeries simulate(const terrain::RoadProfile& profile, double v, const HalfCarParams& params,
                          double sample_rate_hz, const NoiseSpec& noise, double dt_internal = kDefaultDt) {
  return simulate(profile, constant_velocity(v), params, sample_rate_hz, noise, dt_internal);
}

}  // namespace roughcal::vehicle
