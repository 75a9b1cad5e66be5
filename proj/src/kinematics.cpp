#include "mcpep/kinematics.hpp"

#include <cmath>
#include <sstream>

namespace mcpep {

namespace {

void check_length(const ChainModel& chain, const VecX& v, const char* what) {
  if (static_cast<std::size_t>(v.size()) != chain.dof()) {
    std::ostringstream os;
    os << what << " has length " << v.size() << ", chain has " << chain.dof() << " joints";
    throw InputError(os.str());
  }
}

void check_link(const ChainModel& chain, int link) {
  if (link < 0 || static_cast<std::size_t>(link) >= chain.dof()) {
    throw InputError("link index " + std::to_string(link) + " out of range");
  }
}

}  // namespace

ChainModel::ChainModel(std::vector<Joint> joints, std::vector<Link> links, Vec3 gravity,
                       Pose sensor_offset)
    : joints_(std::move(joints)),
      links_(std::move(links)),
      gravity_(gravity),
      sensor_offset_(sensor_offset) {
  validate();
}

double ChainModel::total_mass() const {
  double m = 0.0;
  for (const auto& l : links_) m += l.inertia.mass;
  return m;
}

void ChainModel::validate() const {
  if (joints_.empty()) throw ValidationError("chain needs at least one joint");
  if (joints_.size() != links_.size()) {
    throw ValidationError("joint and link counts differ");
  }
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const auto& j = joints_[i];
    if (std::abs(j.axis.norm() - 1.0) > 1e-12) {
      throw ValidationError("joint " + std::to_string(i) + " axis is not unit length");
    }
    if (!(j.lower <= j.upper)) {
      throw ValidationError("joint " + std::to_string(i) + " has empty limits");
    }
    const auto& in = links_[i].inertia;
    if (!(in.mass >= 0.0) || !std::isfinite(in.mass)) {
      throw ValidationError("link " + std::to_string(i) + " has invalid mass");
    }
    if ((in.inertia - in.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ValidationError("link " + std::to_string(i) + " inertia is not symmetric");
    }
    if (in.mass > 0.0) {
      Eigen::SelfAdjointEigenSolver<Mat3> es(in.inertia);
      if (es.eigenvalues().minCoeff() <= 0.0) {
        throw ValidationError("link " + std::to_string(i) +
                              " inertia is not positive definite");
      }
    }
    if (links_[i].capsule && !(links_[i].capsule->radius > 0.0)) {
      throw ValidationError("link " + std::to_string(i) + " capsule radius must be positive");
    }
  }
}

std::vector<Pose> forward_kinematics(const ChainModel& chain, const VecX& q) {
  check_length(chain, q, "q");
  std::vector<Pose> frames;
  frames.reserve(chain.dof());
  Pose parent;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joint(i);
    Pose joint_frame = parent.compose(j.origin);
    joint_frame.rotation = joint_frame.rotation * axis_angle(j.axis, q[static_cast<Eigen::Index>(i)]);
    frames.push_back(joint_frame);
    parent = joint_frame;
  }
  return frames;
}

Vec3 joint_axis_world(const ChainModel& chain, std::span<const Pose> frames, std::size_t i) {
  // Rotation about the axis leaves the axis itself fixed.
  return frames[i].rotation * chain.joint(i).axis;
}

MatX point_jacobian(const ChainModel& chain, const VecX& q, int link, const Vec3& point_world) {
  check_link(chain, link);
  const auto frames = forward_kinematics(chain, q);
  return point_jacobian(chain, frames, link, point_world);
}

MatX point_jacobian(const ChainModel& chain, std::span<const Pose> frames, int link,
                    const Vec3& point_world) {
  check_link(chain, link);
  MatX jac = MatX::Zero(3, static_cast<Eigen::Index>(chain.dof()));
  for (int i = 0; i <= link; ++i) {
    const Vec3 axis = joint_axis_world(chain, frames, static_cast<std::size_t>(i));
    jac.col(i) = axis.cross(point_world - frames[static_cast<std::size_t>(i)].origin);
  }
  return jac;
}

InverseDynamicsResult rnea(const ChainModel& chain, const JointState& state,
                           std::span<const ExternalForce> external, Gravity gravity) {
  check_length(chain, state.q, "q");
  check_length(chain, state.dq, "dq");
  check_length(chain, state.ddq, "ddq");
  for (const auto& f : external) check_link(chain, f.link);

  const std::size_t n = chain.dof();
  const auto frames = forward_kinematics(chain, state.q);

  std::vector<Vec3> omega(n), alpha(n), acc_origin(n), acc_com(n), com(n), axis(n);

  // Gravity enters as an upward acceleration of the fixed base.
  Vec3 omega_prev = Vec3::Zero();
  Vec3 alpha_prev = Vec3::Zero();
  Vec3 acc_prev = gravity == Gravity::kOn ? Vec3(-chain.gravity()) : Vec3(Vec3::Zero());
  Vec3 origin_prev = Vec3::Zero();

  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    axis[i] = joint_axis_world(chain, frames, i);
    const Vec3& o = frames[i].origin;
    const Vec3 d = o - origin_prev;
    acc_origin[i] = acc_prev + alpha_prev.cross(d) + omega_prev.cross(omega_prev.cross(d));
    omega[i] = omega_prev + axis[i] * state.dq[ii];
    alpha[i] = alpha_prev + axis[i] * state.ddq[ii] + omega_prev.cross(axis[i] * state.dq[ii]);
    com[i] = frames[i].apply(chain.link(i).inertia.com);
    const Vec3 rc = com[i] - o;
    acc_com[i] = acc_origin[i] + alpha[i].cross(rc) + omega[i].cross(omega[i].cross(rc));

    omega_prev = omega[i];
    alpha_prev = alpha[i];
    acc_prev = acc_origin[i];
    origin_prev = o;
  }

  InverseDynamicsResult out;
  out.torques = VecX::Zero(static_cast<Eigen::Index>(n));
  Vec3 f_child = Vec3::Zero();
  Vec3 n_child = Vec3::Zero();  // about the child joint origin
  for (std::size_t k = n; k-- > 0;) {
    const auto& in = chain.link(k).inertia;
    const Vec3& o = frames[k].origin;
    const Mat3 inertia_world = frames[k].rotation * in.inertia * frames[k].rotation.transpose();

    Vec3 f = in.mass * acc_com[k] + f_child;
    Vec3 m = inertia_world * alpha[k] + omega[k].cross(inertia_world * omega[k]) +
             (com[k] - o).cross(in.mass * acc_com[k]) + n_child;
    if (k + 1 < n) m += (frames[k + 1].origin - o).cross(f_child);
    for (const auto& e : external) {
      if (static_cast<std::size_t>(e.link) != k) continue;
      f -= e.force;
      m -= (e.point - o).cross(e.force);
    }
    out.torques[static_cast<Eigen::Index>(k)] = axis[k].dot(m);
    f_child = f;
    n_child = m;
  }
  out.base.force = f_child;
  out.base.moment = n_child + frames[0].origin.cross(f_child);
  return out;
}

MatX mass_matrix(const ChainModel& chain, const VecX& q) {
  check_length(chain, q, "q");
  const std::size_t n = chain.dof();
  const auto frames = forward_kinematics(chain, q);

  // Composite body of each subtree: mass, COM and rotational inertia about it.
  std::vector<double> mass(n);
  std::vector<Vec3> com(n);
  std::vector<Mat3> inertia(n);
  double m_acc = 0.0;
  Vec3 c_acc = Vec3::Zero();
  Mat3 i_acc = Mat3::Zero();
  for (std::size_t k = n; k-- > 0;) {
    const auto& in = chain.link(k).inertia;
    const Vec3 c_link = frames[k].apply(in.com);
    const Mat3 i_link = frames[k].rotation * in.inertia * frames[k].rotation.transpose();
    const double m_new = m_acc + in.mass;
    Vec3 c_new = Vec3::Zero();
    if (m_new > 0.0) c_new = (m_acc * c_acc + in.mass * c_link) / m_new;
    auto shift = [&](double m, const Vec3& r) {
      return Mat3(m * (r.squaredNorm() * Mat3::Identity() - r * r.transpose()));
    };
    i_acc = i_acc + shift(m_acc, c_acc - c_new) + i_link + shift(in.mass, c_link - c_new);
    m_acc = m_new;
    c_acc = c_new;
    mass[k] = m_acc;
    com[k] = c_acc;
    inertia[k] = i_acc;
  }

  MatX out = MatX::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 zj = joint_axis_world(chain, frames, j);
    const Vec3& oj = frames[j].origin;
    // Wrench that gives subtree j a unit angular acceleration about axis j.
    const Vec3 force = mass[j] * zj.cross(com[j] - oj);
    const Vec3 moment = inertia[j] * zj + (com[j] - oj).cross(force);
    for (std::size_t i = 0; i <= j; ++i) {
      const Vec3 zi = joint_axis_world(chain, frames, i);
      const Vec3 about_i = moment + (oj - frames[i].origin).cross(force);
      const double v = zi.dot(about_i);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return out;
}

VecX gravity_torques(const ChainModel& chain, const VecX& q) {
  return rnea(chain, JointState::at_rest(q)).torques;
}

VecX coriolis_torques(const ChainModel& chain, const VecX& q, const VecX& dq) {
  check_length(chain, dq, "dq");
  JointState s{q, dq, VecX::Zero(q.size())};
  return rnea(chain, s, {}, Gravity::kOff).torques;
}

MatX mass_matrix_rate(const ChainModel& chain, const VecX& q, const VecX& dq) {
  check_length(chain, q, "q");
  check_length(chain, dq, "dq");
  const double speed = dq.norm();
  const auto n = static_cast<Eigen::Index>(chain.dof());
  if (speed == 0.0) return MatX::Zero(n, n);
  constexpr double kStep = 1e-6;
  const VecX dir = dq / speed;
  return (mass_matrix(chain, q + kStep * dir) - mass_matrix(chain, q - kStep * dir)) *
         (speed / (2.0 * kStep));
}

VecX bias_vector(const ChainModel& chain, const VecX& q, const VecX& dq) {
  // C^T dq = (dM/dt - C) dq since dM/dt = C + C^T.
  const VecX c_dq = coriolis_torques(chain, q, dq);
  const VecX mdot_dq = mass_matrix_rate(chain, q, dq) * dq;
  return mdot_dq - c_dq - gravity_torques(chain, q);
}

}  // namespace mcpep
