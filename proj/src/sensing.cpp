#include "mcpep/sensing.hpp"

namespace mcpep {

ObserverState ObserverState::create(std::size_t dof, double gain) {
  return create(VecX::Constant(static_cast<Eigen::Index>(dof), gain));
}

ObserverState ObserverState::create(const VecX& gains) {
  if ((gains.array() <= 0.0).any()) throw InputError("observer gains must be positive");
  ObserverState s;
  s.gains = gains;
  s.integral = VecX::Zero(gains.size());
  s.tau_ext_hat = VecX::Zero(gains.size());
  s.known_prev = VecX::Zero(gains.size());
  return s;
}

ObserverState observer_step(const ObserverState& state, const ChainModel& chain,
                            const SensorFrame& frame, double dt) {
  if (!(dt > 0.0)) throw InputError("observer step needs dt > 0");
  const auto n = static_cast<Eigen::Index>(chain.dof());
  if (state.gains.size() != n || frame.q.size() != n || frame.dq.size() != n ||
      frame.tau_j.size() != n) {
    throw InputError("observer dimensions do not match the chain");
  }

  ObserverState next = state;
  const VecX momentum = mass_matrix(chain, frame.q) * frame.dq;
  const VecX known = frame.tau_j + bias_vector(chain, frame.q, frame.dq);

  if (!state.started) {
    // Absorb p(0) so the estimate starts at zero.
    next.integral = momentum;
    next.tau_ext_hat.setZero();
    next.known_prev = known;
    next.started = true;
    return next;
  }

  // integral_k = integral_{k-1} + dt/2 (known_{k-1} + known_k + hat_{k-1} + hat_k)
  // hat_k = K (p_k - integral_k), solved per joint for hat_k.
  const VecX partial =
      state.integral + 0.5 * dt * (state.known_prev + known + state.tau_ext_hat);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = state.gains[i];
    next.tau_ext_hat[i] = k * (momentum[i] - partial[i]) / (1.0 + 0.5 * k * dt);
  }
  next.integral = partial + 0.5 * dt * next.tau_ext_hat;
  next.known_prev = known;
  return next;
}

BaseWrench sensor_to_base(const ChainModel& chain, const BaseWrench& ft_sensor) {
  const Pose& s = chain.sensor_offset();
  BaseWrench out;
  out.force = s.rotation * ft_sensor.force;
  out.moment = s.rotation * ft_sensor.moment + s.origin.cross(out.force);
  return out;
}

BaseWrench base_to_sensor(const ChainModel& chain, const BaseWrench& ft_base) {
  const Pose& s = chain.sensor_offset();
  BaseWrench out;
  out.force = s.rotation.transpose() * ft_base.force;
  out.moment = s.rotation.transpose() * (ft_base.moment - s.origin.cross(ft_base.force));
  return out;
}

BaseWrench estimate_base_wrench(const ChainModel& chain, const SensorFrame& frame,
                                const VecX& tau_ext_hat) {
  const auto n = static_cast<Eigen::Index>(chain.dof());
  if (frame.q.size() != n || frame.dq.size() != n || frame.tau_j.size() != n ||
      tau_ext_hat.size() != n) {
    throw InputError("base wrench estimate: dimensions do not match the chain");
  }
  JointState state{frame.q, frame.dq, VecX::Zero(n)};
  const VecX drift = rnea(chain, state).torques;  // C dq + g
  const MatX m = mass_matrix(chain, frame.q);
  Eigen::LLT<MatX> llt(m);
  if (llt.info() != Eigen::Success) throw Error("mass matrix is not positive definite");
  state.ddq = llt.solve(frame.tau_j + tau_ext_hat - drift);
  const BaseWrench nominal = rnea(chain, state).base;
  return nominal - sensor_to_base(chain, frame.ft_raw);
}

BaseWrench base_wrench_at_acceleration(const ChainModel& chain, const SensorFrame& frame,
                                       const VecX& ddq) {
  const auto n = static_cast<Eigen::Index>(chain.dof());
  if (frame.q.size() != n || frame.dq.size() != n || ddq.size() != n) {
    throw InputError("base wrench estimate: dimensions do not match the chain");
  }
  const BaseWrench nominal = rnea(chain, JointState{frame.q, frame.dq, ddq}).base;
  return nominal - sensor_to_base(chain, frame.ft_raw);
}

const BaseWrench& WrenchFilter::step(const BaseWrench& input, double dt) {
  if (!started) {
    output = BaseWrench{};
    input_prev = input;
    started = true;
    return output;
  }
  const double a = 0.5 * gain * dt;
  output.force = ((1.0 - a) * output.force + a * (input_prev.force + input.force)) / (1.0 + a);
  output.moment = ((1.0 - a) * output.moment + a * (input_prev.moment + input.moment)) / (1.0 + a);
  input_prev = input;
  return output;
}

MeasurementPipeline::MeasurementPipeline(const ChainModel& chain, double observer_gain, double dt)
    : chain_(&chain), observer_(ObserverState::create(chain.dof(), observer_gain)), dt_(dt) {
  if (!(dt > 0.0)) throw InputError("measurement pipeline needs dt > 0");
  base_filter_.gain = observer_gain;
}

VecX MeasurementPipeline::update(const SensorFrame& frame) {
  observer_ = observer_step(observer_, *chain_, frame, dt_);
  const VecX ddq = dq_prev_.size() == frame.dq.size() ? VecX((frame.dq - dq_prev_) / dt_)
                                                        : VecX::Zero(frame.dq.size());
  dq_prev_ = frame.dq;
  const BaseWrench& base = base_filter_.step(base_wrench_at_acceleration(*chain_, frame, ddq), dt_);
  return stack_measurement(observer_.tau_ext_hat, base);
}

VecX stack_measurement(const VecX& tau_ext_hat, const BaseWrench& base) {
  VecX w(tau_ext_hat.size() + 6);
  w.head(tau_ext_hat.size()) = tau_ext_hat;
  w.segment<3>(tau_ext_hat.size()) = base.force;
  w.tail<3>() = base.moment;
  return w;
}

VecX measurement_torques(const VecX& w_hat, std::size_t dof) {
  return w_hat.head(static_cast<Eigen::Index>(dof));
}

BaseWrench measurement_base(const VecX& w_hat, std::size_t dof) {
  const auto n = static_cast<Eigen::Index>(dof);
  return {w_hat.segment<3>(n), w_hat.segment<3>(n + 3)};
}

}  // namespace mcpep
