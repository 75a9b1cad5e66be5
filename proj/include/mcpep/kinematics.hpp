#pragma once

#include "mcpep/common.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mcpep {

/// Revolute joint. The joint frame sits at `origin` relative to the parent
/// link frame; the child link frame is the joint frame rotated by q about
/// `axis` (expressed in the joint frame).
struct Joint {
  std::string name;
  Vec3 axis = Vec3::UnitZ();
  Pose origin;
  double lower = -3.14159265358979;
  double upper = 3.14159265358979;
};

/// Mass properties in the link frame; `inertia` is taken about the COM.
struct LinkInertia {
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();
};

/// Segment-swept sphere used to synthesize a link surface mesh.
struct CapsuleGeometry {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
};

struct Link {
  LinkInertia inertia;
  std::optional<CapsuleGeometry> capsule;
};

/// Fixed-base serial chain of revolute joints. Link i is moved by joint i.
class ChainModel {
 public:
  ChainModel() = default;
  ChainModel(std::vector<Joint> joints, std::vector<Link> links,
             Vec3 gravity = Vec3(0.0, 0.0, -9.81), Pose sensor_offset = {});

  std::size_t dof() const { return joints_.size(); }
  const Joint& joint(std::size_t i) const { return joints_.at(i); }
  const Link& link(std::size_t i) const { return links_.at(i); }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<Link>& links() const { return links_; }
  const Vec3& gravity() const { return gravity_; }
  void set_gravity(const Vec3& g) { gravity_ = g; }

  /// Pose of the base force/torque sensor frame in the base frame.
  const Pose& sensor_offset() const { return sensor_offset_; }
  double total_mass() const;

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;

 private:
  std::vector<Joint> joints_;
  std::vector<Link> links_;
  Vec3 gravity_ = Vec3(0.0, 0.0, -9.81);
  Pose sensor_offset_;
};

struct JointState {
  VecX q;
  VecX dq;
  VecX ddq;

  static JointState at_rest(const VecX& q) {
    return {q, VecX::Zero(q.size()), VecX::Zero(q.size())};
  }
};

/// Wrench in the base frame, moment taken about the base origin.
struct BaseWrench {
  Vec3 force = Vec3::Zero();
  Vec3 moment = Vec3::Zero();

  BaseWrench operator+(const BaseWrench& o) const {
    return {force + o.force, moment + o.moment};
  }
  BaseWrench operator-(const BaseWrench& o) const {
    return {force - o.force, moment - o.moment};
  }
};

/// Point force acting on a link, world coordinates.
struct ExternalForce {
  int link = 0;
  Vec3 point = Vec3::Zero();
  Vec3 force = Vec3::Zero();
};

struct InverseDynamicsResult {
  VecX torques;
  /// Wrench the mount exerts on link 0.
  BaseWrench base;
};

enum class Gravity { kOn, kOff };

std::vector<Pose> forward_kinematics(const ChainModel& chain, const VecX& q);

/// World-frame joint axes and origins for already computed link frames.
Vec3 joint_axis_world(const ChainModel& chain, std::span<const Pose> frames, std::size_t i);

/// 3 x n positional Jacobian of a point rigidly attached to `link`.
MatX point_jacobian(const ChainModel& chain, const VecX& q, int link, const Vec3& point_world);
MatX point_jacobian(const ChainModel& chain, std::span<const Pose> frames, int link,
                    const Vec3& point_world);

/// Recursive Newton-Euler. `external` forces act on the robot and reduce
/// both the joint torques and the mount reaction accordingly.
InverseDynamicsResult rnea(const ChainModel& chain, const JointState& state,
                           std::span<const ExternalForce> external = {},
                           Gravity gravity = Gravity::kOn);

/// Joint-space inertia by the composite-rigid-body algorithm.
MatX mass_matrix(const ChainModel& chain, const VecX& q);

VecX gravity_torques(const ChainModel& chain, const VecX& q);

/// C(q, dq) dq.
VecX coriolis_torques(const ChainModel& chain, const VecX& q, const VecX& dq);

/// dM/dt along dq, central difference of mass_matrix with a 1e-6 rad step.
MatX mass_matrix_rate(const ChainModel& chain, const VecX& q, const VecX& dq);

/// n(q, dq) = C^T(q, dq) dq - g(q), as used by the momentum observer.
VecX bias_vector(const ChainModel& chain, const VecX& q, const VecX& dq);

}  // namespace mcpep
