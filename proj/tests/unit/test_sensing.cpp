#include "mcpep/sensing.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace mcpep;
using namespace mcpep::testing;

namespace {

// Static frame with a joint-space external torque: tau_j = g(q) - tau_ext.
SensorFrame static_frame(const ChainModel& chain, const VecX& q, const VecX& tau_ext, double t) {
  SensorFrame f;
  f.t = t;
  f.q = q;
  f.dq = VecX::Zero(q.size());
  f.tau_j = gravity_torques(chain, q) - tau_ext;
  f.ft_raw = base_to_sensor(chain, rnea(chain, JointState::at_rest(q)).base);
  return f;
}

// Runs the observer on a static arm with tau_ext(t) and returns the estimates.
template <typename F>
std::vector<VecX> observe(const ChainModel& chain, const VecX& q, double dt, int steps, F tau_ext) {
  ObserverState s = ObserverState::create(chain.dof(), 100.0);
  std::vector<VecX> out;
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    s = observer_step(s, chain, static_frame(chain, q, tau_ext(t), t), dt);
    out.push_back(s.tau_ext_hat);
  }
  return out;
}

}  // namespace

TEST(Observer, UnexcitedStaysZero) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(1);
  const VecX q = random_q(chain, rng);
  const auto hats = observe(chain, q, 1e-3, 500, [](double) { return VecX::Zero(7); });
  for (const auto& h : hats) ASSERT_LT(h.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Observer, UnexcitedUnderMotionStaysSmall) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(2);
  const VecX q0 = random_q(chain, rng) * 0.5;
  const VecX a = random_vec(7, rng, 0.3);
  ObserverState s = ObserverState::create(7, 100.0);
  const double dt = 1e-3;
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double t = k * dt;
    const JointState js{q0 + a * std::sin(2 * t), 2 * a * std::cos(2 * t), -4 * a * std::sin(2 * t)};
    SensorFrame f;
    f.t = t;
    f.q = js.q;
    f.dq = js.dq;
    f.tau_j = rnea(chain, js).torques;
    s = observer_step(s, chain, f, dt);
    worst = std::max(worst, s.tau_ext_hat.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Observer, StepResponseReaches99PercentOnSchedule) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(3);
  const VecX q = random_q(chain, rng);
  const VecX step = random_vec(7, rng, 5.0);
  const double dt = 1e-3;
  const double onset = 0.01;
  const auto hats = observe(chain, q, dt, 200, [&](double t) { return t + 1e-12 >= onset ? step : VecX::Zero(7); });
  for (Eigen::Index j = 0; j < 7; ++j) {
    double crossing = -1.0;
    for (std::size_t k = 1; k < hats.size(); ++k) {
      const double y0 = hats[k - 1][j] / step[j];
      const double y1 = hats[k][j] / step[j];
      if (y0 < 0.99 && y1 >= 0.99) {
        crossing = (static_cast<double>(k) - 1 + (0.99 - y0) / (y1 - y0)) * dt - onset;
        break;
      }
    }
    EXPECT_NEAR(crossing, 4.61 / 100.0, 0.02 * 4.61 / 100.0) << "joint " << j;
  }
}

TEST(Observer, SinusoidPassband) {
  const ChainModel chain = seven_dof_arm();
  const VecX q = VecX::Constant(7, 0.2);
  const double k_o = 100.0;
  const double omega = k_o / 10.0;
  const double dt = 1e-3;
  const VecX amp = VecX::LinSpaced(7, 1.0, 4.0);
  const auto hats = observe(chain, q, dt, 4000, [&](double t) { return VecX(amp * std::sin(omega * t)); });
  // Least-squares fit of sin/cos over the last two seconds.
  for (Eigen::Index j = 0; j < 7; ++j) {
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d atb = Eigen::Vector2d::Zero();
    for (std::size_t k = 2000; k < hats.size(); ++k) {
      const double t = static_cast<double>(k) * dt;
      const Eigen::Vector2d row(std::sin(omega * t), std::cos(omega * t));
      ata += row * row.transpose();
      atb += row * hats[k][j];
    }
    const double gain = ata.ldlt().solve(atb).norm() / amp[j];
    EXPECT_GE(gain, 0.995);
    EXPECT_NEAR(gain, 1.0 / std::sqrt(1.0 + 0.01), 1e-4);
  }
}

TEST(Observer, DcFidelityAfterSevenTimeConstants) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(4);
  const VecX q = random_q(chain, rng);
  const VecX tau = random_vec(7, rng, 10.0);
  const auto hats = observe(chain, q, 1e-3, 80, [&](double) { return tau; });
  EXPECT_LT((hats[71] - tau).cwiseAbs().maxCoeff(), 0.01 * tau.cwiseAbs().maxCoeff());
}

TEST(Observer, RejectsBadInput) {
  const ChainModel chain = seven_dof_arm();
  const ObserverState s = ObserverState::create(7);
  const SensorFrame f = static_frame(chain, VecX::Zero(7), VecX::Zero(7), 0.0);
  EXPECT_THROW(observer_step(s, chain, f, 0.0), InputError);
  EXPECT_THROW(observer_step(s, chain, f, -1e-3), InputError);
  EXPECT_THROW(observer_step(ObserverState::create(3), chain, f, 1e-3), InputError);
  EXPECT_THROW(ObserverState::create(7, 0.0), InputError);
}

TEST(BaseWrench, NoContactIsZero) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(5);
  const VecX q = random_q(chain, rng);
  const SensorFrame f = static_frame(chain, q, VecX::Zero(7), 0.0);
  const BaseWrench w = estimate_base_wrench(chain, f, VecX::Zero(7));
  EXPECT_LT(w.force.norm() + w.moment.norm(), 1e-8);
}

TEST(BaseWrench, SingleAndDualStaticContacts) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const VecX q = random_q(chain, rng);
    const auto frames = forward_kinematics(chain, q);
    std::vector<ExternalForce> ext;
    for (int c = 0; c < 2; ++c) {
      const int link = static_cast<int>(rng() % 7);
      ext.push_back({link, frames[static_cast<std::size_t>(link)].apply(random_vec(3, rng, 0.1)),
                     Vec3(random_vec(3, rng, 20.0))});
    }
    BaseWrench sum;
    VecX tau_ext = VecX::Zero(7);
    for (std::size_t n = 1; n <= ext.size(); ++n) {
      const auto& e = ext[n - 1];
      sum = sum + BaseWrench{e.force, e.point.cross(e.force)};
      tau_ext += point_jacobian(chain, q, e.link, e.point).transpose() * e.force;
      const auto id = rnea(chain, JointState::at_rest(q), std::span(ext.data(), n));
      SensorFrame f;
      f.q = q;
      f.dq = VecX::Zero(7);
      f.tau_j = id.torques;
      f.ft_raw = base_to_sensor(chain, id.base);
      const BaseWrench w = estimate_base_wrench(chain, f, tau_ext);
      EXPECT_LT((w.force - sum.force).norm(), 1e-8);
      EXPECT_LT((w.moment - sum.moment).norm(), 1e-8);
    }
  }
}

TEST(BaseWrench, KnownAccelerationUnderMotion) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(7);
  const JointState s{random_q(chain, rng), random_vec(7, rng, 1.0), random_vec(7, rng, 3.0)};
  const auto frames = forward_kinematics(chain, s.q);
  const ExternalForce e{4, frames[4].apply(Vec3(0.02, 0.05, 0.0)), Vec3(3.0, -7.0, 12.0)};
  const auto id = rnea(chain, s, std::span(&e, 1));
  SensorFrame f;
  f.q = s.q;
  f.dq = s.dq;
  f.tau_j = id.torques;
  f.ft_raw = base_to_sensor(chain, id.base);
  const BaseWrench w = base_wrench_at_acceleration(chain, f, s.ddq);
  EXPECT_LT((w.force - e.force).norm(), 1e-9);
  EXPECT_LT((w.moment - e.point.cross(e.force)).norm(), 1e-9);
}

TEST(BaseWrench, SensorOffsetRoundTrip) {
  std::vector<Joint> joints(1);
  Pose offset{rpy_to_rotation(Vec3(0.1, -0.4, 2.0)), Vec3(0.02, -0.01, -0.08)};
  const ChainModel chain(joints, {point_mass(1.0, Vec3(0.1, 0, 0))}, Vec3(0, 0, -9.81), offset);
  const BaseWrench w{Vec3(1, 2, 3), Vec3(-4, 5, 0.5)};
  const BaseWrench back = sensor_to_base(chain, base_to_sensor(chain, w));
  EXPECT_LT((back.force - w.force).norm() + (back.moment - w.moment).norm(), 1e-14);
  // The sensor frame sees the moment about its own origin.
  const BaseWrench s = base_to_sensor(chain, BaseWrench{Vec3(0, 0, 10), Vec3::Zero()});
  const Vec3 expected_moment = offset.rotation.transpose() * (-offset.origin.cross(Vec3(0, 0, 10)));
  EXPECT_LT((s.moment - expected_moment).norm(), 1e-14);
}

TEST(StackMeasurement, LayoutAndRoundTrip) {
  EXPECT_EQ(stack_measurement(VecX::Zero(7), {}), VecX::Zero(13));
  VecX e1 = VecX::Zero(7);
  e1[0] = 1.0;
  const VecX w = stack_measurement(e1, {});
  EXPECT_EQ(w.size(), 13);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w.sum(), 1.0);
  Rng rng(8);
  const VecX tau = random_vec(7, rng);
  const BaseWrench b{random_vec(3, rng), random_vec(3, rng)};
  const VecX s = stack_measurement(tau, b);
  EXPECT_EQ(measurement_torques(s, 7), tau);
  EXPECT_EQ(measurement_base(s, 7).force, b.force);
  EXPECT_EQ(measurement_base(s, 7).moment, b.moment);
}

TEST(WrenchFilter, MatchesObserverLag) {
  // A contact switched on while the arm rests: every channel of W_hat follows
  // the same first-order response, so W_hat stays parallel to the true value.
  const ChainModel chain = seven_dof_arm();
  Rng rng(9);
  const VecX q = random_q(chain, rng);
  const auto frames = forward_kinematics(chain, q);
  const ExternalForce e{5, frames[5].apply(Vec3(0.03, 0.0, 0.0)), Vec3(2.0, 9.0, -15.0)};
  const auto id = rnea(chain, JointState::at_rest(q), std::span(&e, 1));
  const VecX truth = stack_measurement(point_jacobian(chain, q, 5, e.point).transpose() * e.force,
                                       BaseWrench{e.force, e.point.cross(e.force)});
  MeasurementPipeline pipeline(chain, 100.0, 1e-3);
  for (int k = 0; k < 120; ++k) {
    SensorFrame f = static_frame(chain, q, VecX::Zero(7), k * 1e-3);
    if (k >= 10) {
      f.tau_j = id.torques;
      f.ft_raw = base_to_sensor(chain, id.base);
    }
    const VecX w = pipeline.update(f);
    const double lambda = w.dot(truth) / truth.squaredNorm();
    EXPECT_LT((w - lambda * truth).norm(), 1e-9 * truth.norm()) << "frame " << k;
    if (k == 119) EXPECT_GT(lambda, 0.99);
  }
}

TEST(WrenchFilter, FirstOrderStep) {
  WrenchFilter filter;
  filter.gain = 50.0;
  const BaseWrench unit{Vec3(1, 0, 0), Vec3(0, 0, 2)};
  filter.step(BaseWrench{}, 1e-3);
  double y = 0.0;
  for (int k = 1; k <= 200; ++k) y = filter.step(unit, 1e-3).force.x();
  EXPECT_NEAR(y, 1.0 - std::exp(-50.0 * 0.2), 2e-3);
  EXPECT_NEAR(filter.output.moment.z(), 2.0 * y, 1e-12);
}
