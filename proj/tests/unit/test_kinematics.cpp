#include "mcpep/chain_io.hpp"
#include "mcpep/kinematics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mcpep;
using namespace mcpep::testing;

namespace {

// Homogeneous-transform product, independent of the library's Pose algebra.
std::vector<Eigen::Matrix4d> transform_product(const ChainModel& chain, const VecX& q) {
  std::vector<Eigen::Matrix4d> out;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joint(i);
    Eigen::Matrix4d fixed = Eigen::Matrix4d::Identity();
    fixed.topLeftCorner<3, 3>() = j.origin.rotation;
    fixed.topRightCorner<3, 1>() = j.origin.origin;
    Eigen::Matrix4d rot = Eigen::Matrix4d::Identity();
    rot.topLeftCorner<3, 3>() = Eigen::AngleAxisd(q[static_cast<Eigen::Index>(i)], j.axis).toRotationMatrix();
    t = t * fixed * rot;
    out.push_back(t);
  }
  return out;
}

Vec3 point_at(const ChainModel& chain, const VecX& q, int link, const Vec3& local) {
  return forward_kinematics(chain, q)[static_cast<std::size_t>(link)].apply(local);
}

}  // namespace

TEST(ForwardKinematics, PlanarStraightAndQuarterTurn) {
  const ChainModel chain = planar_chain(2);
  const Vec3 tip(1.0, 0.0, 0.0);
  auto frames = forward_kinematics(chain, VecX::Zero(2));
  EXPECT_NEAR((frames[1].apply(tip) - Vec3(2, 0, 0)).norm(), 0.0, 1e-12);
  frames = forward_kinematics(chain, Eigen::Vector2d(std::numbers::pi / 2, 0.0));
  EXPECT_NEAR((frames[1].apply(tip) - Vec3(0, 2, 0)).norm(), 0.0, 1e-12);
}

TEST(ForwardKinematics, MatchesTransformProduct) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const VecX q = random_q(chain, rng);
    const auto frames = forward_kinematics(chain, q);
    const auto oracle = transform_product(chain, q);
    for (std::size_t i = 0; i < chain.dof(); ++i) {
      EXPECT_LT((frames[i].origin - oracle[i].topRightCorner<3, 1>()).norm(), 1e-12);
      EXPECT_LT((frames[i].rotation - oracle[i].topLeftCorner<3, 3>()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ForwardKinematics, RejectsWrongDimension) {
  EXPECT_THROW(forward_kinematics(seven_dof_arm(), VecX::Zero(3)), InputError);
}

TEST(PointJacobian, PlanarTip) {
  const ChainModel chain = planar_chain(2);
  const MatX j = point_jacobian(chain, VecX::Zero(2), 1, Vec3(2, 0, 0));
  EXPECT_NEAR((j.col(0) - Vec3(0, 2, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((j.col(1) - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);
}

TEST(PointJacobian, DistalColumnsZero) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(3);
  const VecX q = random_q(chain, rng);
  const Vec3 p = forward_kinematics(chain, q)[0].apply(Vec3(0.05, 0.0, -0.1));
  const MatX j = point_jacobian(chain, q, 0, p);
  EXPECT_EQ(j.rightCols(6).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(j.col(0).norm(), 0.0);
}

TEST(PointJacobian, MatchesFiniteDifferenceVelocity) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(11);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const VecX q = random_q(chain, rng);
    const VecX dq = random_vec(7, rng);
    const int link = static_cast<int>(rng() % 7);
    const Vec3 local = random_vec(3, rng, 0.1);
    const Vec3 p = point_at(chain, q, link, local);
    const MatX j = point_jacobian(chain, q, link, p);
    const Vec3 fd = (point_at(chain, q + h * dq, link, local) - point_at(chain, q - h * dq, link, local)) / (2 * h);
    EXPECT_LT((j * dq - fd).norm(), 1e-6);
  }
}

TEST(PointJacobian, RejectsBadLink) {
  EXPECT_THROW(point_jacobian(seven_dof_arm(), VecX::Zero(7), 7, Vec3::Zero()), InputError);
  EXPECT_THROW(point_jacobian(seven_dof_arm(), VecX::Zero(7), -1, Vec3::Zero()), InputError);
}

TEST(Rnea, MasslessChainIsZero) {
  const ChainModel chain = planar_chain(3, 0.0);
  Rng rng(1);
  const JointState s{random_vec(3, rng), random_vec(3, rng), random_vec(3, rng)};
  const auto r = rnea(chain, s);
  EXPECT_EQ(r.torques.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.base.force.norm(), 0.0);
  EXPECT_EQ(r.base.moment.norm(), 0.0);
}

TEST(Rnea, StaticsOracle) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const VecX q = random_q(chain, rng);
    const auto frames = forward_kinematics(chain, q);
    const auto r = rnea(chain, JointState::at_rest(q));
    for (std::size_t i = 0; i < chain.dof(); ++i) {
      const Vec3 axis = frames[i].rotation * chain.joint(i).axis;
      double tau = 0.0;
      for (std::size_t j = i; j < chain.dof(); ++j) {
        const auto& in = chain.link(j).inertia;
        const Vec3 c = frames[j].apply(in.com);
        tau += axis.dot((c - frames[i].origin).cross(-in.mass * chain.gravity()));
      }
      EXPECT_NEAR(r.torques[static_cast<Eigen::Index>(i)], tau, 1e-9);
    }
    EXPECT_LT((r.base.force + chain.total_mass() * chain.gravity()).norm(), 1e-9);
    EXPECT_LT((r.torques - gravity_torques(chain, q)).norm(), 1e-10);
  }
}

TEST(Rnea, EquationOfMotionCrossCheck) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const JointState s{random_q(chain, rng), random_vec(7, rng, 2.0), random_vec(7, rng, 5.0)};
    const VecX lhs = rnea(chain, s).torques;
    const VecX rhs = mass_matrix(chain, s.q) * s.ddq + coriolis_torques(chain, s.q, s.dq) + gravity_torques(chain, s.q);
    ASSERT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Rnea, ExternalForceShiftsBaseByContactWrench) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const VecX q = random_q(chain, rng);
    const int link = static_cast<int>(rng() % 7);
    const Vec3 r = point_at(chain, q, link, random_vec(3, rng, 0.1));
    const Vec3 f = random_vec(3, rng, 20.0);
    const ExternalForce ext{link, r, f};
    const auto nominal = rnea(chain, JointState::at_rest(q));
    const auto pushed = rnea(chain, JointState::at_rest(q), std::span(&ext, 1));
    const BaseWrench delta = nominal.base - pushed.base;
    EXPECT_LT((delta.force - f).norm(), 1e-9);
    EXPECT_LT((delta.moment - r.cross(f)).norm(), 1e-9);
    const MatX j = point_jacobian(chain, q, link, r);
    EXPECT_LT((nominal.torques - pushed.torques - j.transpose() * f).norm(), 1e-9);
  }
}

TEST(MassMatrix, PendulumPointMass) {
  std::vector<Joint> joints(1);
  std::vector<Link> links{point_mass(2.0, Vec3(0.7, 0.0, 0.0))};
  const ChainModel chain(joints, links);
  const MatX m = mass_matrix(chain, VecX::Constant(1, 0.3));
  EXPECT_NEAR(m(0, 0), 2.0 * 0.49, 1e-10);
}

TEST(MassMatrix, SymmetricAndMatchesRneaProbe) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const VecX q = random_q(chain, rng);
    const MatX m = mass_matrix(chain, q);
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    for (Eigen::Index j = 0; j < 7; ++j) {
      JointState s = JointState::at_rest(q);
      s.ddq[j] = 1.0;
      const VecX col = rnea(chain, s, {}, Gravity::kOff).torques;
      EXPECT_LT((m.col(j) - col).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(MassMatrix, PositiveDefinite) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::SelfAdjointEigenSolver<MatX> es(mass_matrix(chain, random_q(chain, rng)));
    ASSERT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(BiasVector, ZeroVelocityIsNegativeGravity) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(19);
  const VecX q = random_q(chain, rng);
  EXPECT_LT((bias_vector(chain, q, VecX::Zero(7)) + gravity_torques(chain, q)).norm(), 1e-12);
}

TEST(BiasVector, PendulumHasNoVelocityTerm) {
  std::vector<Joint> joints(1);
  joints[0].axis = Vec3::UnitZ();
  std::vector<Link> links{point_mass(1.5, Vec3(0.4, 0.0, 0.0))};
  const ChainModel chain(joints, links, Vec3(0.0, -9.81, 0.0));
  const VecX q = VecX::Constant(1, 0.8);
  const VecX dq = VecX::Constant(1, 3.0);
  EXPECT_NEAR(bias_vector(chain, q, dq)[0], -gravity_torques(chain, q)[0], 1e-9);
}

TEST(BiasVector, MomentumDerivativeOracle) {
  // Along q(t) = q0 + a sin(w t), dp/dt = tau + n(q, dq) with p = M dq.
  const ChainModel chain = seven_dof_arm();
  Rng rng(23);
  const VecX q0 = random_q(chain, rng) * 0.5;
  const VecX a = random_vec(7, rng, 0.4);
  const double w = 3.0;
  auto state = [&](double t) {
    return JointState{q0 + a * std::sin(w * t), a * w * std::cos(w * t), -a * w * w * std::sin(w * t)};
  };
  auto momentum = [&](double t) {
    const JointState s = state(t);
    return VecX(mass_matrix(chain, s.q) * s.dq);
  };
  const double h = 1e-5;
  for (double t : {0.1, 0.35, 0.8}) {
    const JointState s = state(t);
    const VecX dp = (momentum(t + h) - momentum(t - h)) / (2 * h);
    const VecX tau = rnea(chain, s).torques;
    EXPECT_LT((dp - tau - bias_vector(chain, s.q, s.dq)).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Dynamics, SkewSymmetryOfMdotMinusTwoC) {
  const ChainModel chain = seven_dof_arm();
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const VecX q = random_q(chain, rng);
    const VecX dq = random_vec(7, rng, 2.0);
    const double power = dq.dot(mass_matrix_rate(chain, q, dq) * dq) - 2.0 * dq.dot(coriolis_torques(chain, q, dq));
    EXPECT_NEAR(power, 0.0, 1e-6);
  }
}

TEST(ChainModel, ValidateRejectsBadInput) {
  std::vector<Joint> joints(1);
  joints[0].axis = Vec3(1.0, 1.0, 0.0);
  EXPECT_THROW(ChainModel(joints, {point_mass(1.0, Vec3::Zero())}), ValidationError);
  joints[0].axis = Vec3::UnitZ();
  Link bad = point_mass(1.0, Vec3::Zero());
  bad.inertia.inertia(0, 1) = 1.0;
  EXPECT_THROW(ChainModel(joints, {bad}), ValidationError);
  bad.inertia.inertia = -Mat3::Identity();
  EXPECT_THROW(ChainModel(joints, {bad}), ValidationError);
  EXPECT_THROW(ChainModel({}, {}), ValidationError);
}

TEST(ChainIo, RoundTrip) {
  const ChainModel chain = seven_dof_arm();
  const ChainModel back = parse_chain(chain_to_json(chain));
  ASSERT_EQ(back.dof(), chain.dof());
  Rng rng(31);
  const JointState s{random_q(chain, rng), random_vec(7, rng), random_vec(7, rng)};
  const auto a = rnea(chain, s);
  const auto b = rnea(back, s);
  EXPECT_LT((a.torques - b.torques).norm(), 1e-12);
  EXPECT_LT((a.base.moment - b.base.moment).norm(), 1e-12);
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    ASSERT_TRUE(back.link(i).capsule.has_value());
    EXPECT_EQ(back.link(i).capsule->radius, chain.link(i).capsule->radius);
    EXPECT_EQ(back.joint(i).lower, chain.joint(i).lower);
  }
}

TEST(ChainIo, RejectsUnknownKeysAndBadShapes) {
  EXPECT_THROW(parse_chain(R"({"joints": [], "colour": 1})"), FormatError);
  EXPECT_THROW(parse_chain(R"({"joints": [{"axis": [0, 0, 1], "xyz": [0, 0, 0], "rpy": [0, 0, 0], "mass": 1,
      "com": [0, 0, 0], "inertia": {"ixx": 1, "iyy": 1, "izz": 1, "ixy": 0, "ixz": 0, "iyz": 0}, "spin": 2}]})"),
               FormatError);
  EXPECT_THROW(parse_chain(R"({"joints": [{"axis": [0, 1]}]})"), InputError);
  EXPECT_THROW(parse_chain("{not json"), FormatError);
}

TEST(ChainIo, SensorOffsetIsParsed) {
  ChainModel chain = parse_chain(R"({
    "sensor_offset": {"xyz": [0, 0, -0.05], "rpy": [0, 0, 1.5707963267948966]},
    "joints": [{"axis": [0, 0, 1], "xyz": [0, 0, 0], "rpy": [0, 0, 0], "mass": 1, "com": [0.1, 0, 0],
                "inertia": {"ixx": 0.01, "iyy": 0.01, "izz": 0.01, "ixy": 0, "ixz": 0, "iyz": 0}}]})");
  EXPECT_NEAR(chain.sensor_offset().origin.z(), -0.05, 1e-15);
  EXPECT_NEAR((chain.sensor_offset().rotation * Vec3::UnitX() - Vec3::UnitY()).norm(), 0.0, 1e-12);
}
