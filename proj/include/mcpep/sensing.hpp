#pragma once

#include "mcpep/kinematics.hpp"

namespace mcpep {

struct SensorFrame {
  double t = 0.0;
  VecX q;
  VecX dq;
  VecX tau_j;
  /// Reading of the base F/T sensor: wrench the mount exerts on link 0,
  /// in the sensor frame about the sensor origin.
  BaseWrench ft_raw;
};

/// Momentum observer
///   tau_hat = K_o (p - p(0) - integral(tau_j + n(q, dq) + tau_hat))
/// integrated with the trapezoidal rule.
struct ObserverState {
  VecX gains;
  VecX integral;
  VecX tau_ext_hat;
  /// tau_j + n(q, dq) at the previous frame.
  VecX known_prev;
  bool started = false;

  static ObserverState create(std::size_t dof, double gain = 100.0);
  static ObserverState create(const VecX& gains);
};

ObserverState observer_step(const ObserverState& state, const ChainModel& chain,
                            const SensorFrame& frame, double dt);

/// Sensor reading re-expressed in the base frame about the base origin.
BaseWrench sensor_to_base(const ChainModel& chain, const BaseWrench& ft_sensor);
BaseWrench base_to_sensor(const ChainModel& chain, const BaseWrench& ft_base);

/// Contact-induced base wrench, sum_i [F_i; r_i x F_i]. The nominal
/// contact-free acceleration is M^-1 (tau_j + tau_ext_hat - C dq - g); the
/// mount wrench RNEA predicts for it minus the measured one is what the
/// contacts account for.
BaseWrench estimate_base_wrench(const ChainModel& chain, const SensorFrame& frame,
                                const VecX& tau_ext_hat);

/// Contact-induced base wrench when the joint acceleration is known (zero for
/// a static arm): RNEA mount wrench at (q, dq, ddq) minus the measured one.
BaseWrench base_wrench_at_acceleration(const ChainModel& chain, const SensorFrame& frame,
                                       const VecX& ddq);

/// First-order low pass y' = K (u - y) with the observer's trapezoidal
/// discretization, so a wrench passed through it lags exactly like tau_hat.
struct WrenchFilter {
  double gain = 100.0;
  BaseWrench output;
  BaseWrench input_prev;
  bool started = false;

  const BaseWrench& step(const BaseWrench& input, double dt);
};

/// Frame stream to W_hat. The base half is the acceleration-based wrench
/// passed through a WrenchFilter of the observer's gain; ddq comes from a
/// backward difference of dq.
class MeasurementPipeline {
 public:
  MeasurementPipeline(const ChainModel& chain, double observer_gain, double dt);
  VecX update(const SensorFrame& frame);
  const ObserverState& observer() const { return observer_; }

 private:
  const ChainModel* chain_;
  ObserverState observer_;
  WrenchFilter base_filter_;
  VecX dq_prev_;
  double dt_;
};

/// W_hat = [tau_ext_hat; force; moment], length n + 6.
VecX stack_measurement(const VecX& tau_ext_hat, const BaseWrench& base);
VecX measurement_torques(const VecX& w_hat, std::size_t dof);
BaseWrench measurement_base(const VecX& w_hat, std::size_t dof);

}  // namespace mcpep
