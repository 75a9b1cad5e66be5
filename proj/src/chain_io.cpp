#include "mcpep/chain_io.hpp"

#include <json.hpp>

#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace mcpep {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw FormatError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

Vec3 read_vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw FormatError(where + " must be a 3-element array");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) throw FormatError(where + " must be numeric");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

double read_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw FormatError(where + " is missing '" + key + "'");
  if (!obj[key].is_number()) throw FormatError(where + "." + key + " must be numeric");
  return obj[key].get<double>();
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw FormatError(where + " is missing '" + key + "'");
  return obj[key];
}

Pose read_pose(const json& obj, const std::string& where) {
  reject_unknown(obj, {"xyz", "rpy"}, where);
  Pose p;
  if (obj.contains("xyz")) p.origin = read_vec3(obj["xyz"], where + ".xyz");
  if (obj.contains("rpy")) p.rotation = rpy_to_rotation(read_vec3(obj["rpy"], where + ".rpy"));
  return p;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 rotation_to_rpy(const Mat3& r) {
  // Inverse of rpy_to_rotation (R = Rz(yaw) Ry(pitch) Rx(roll)).
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

}  // namespace

ChainModel parse_chain(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("chain file is not valid JSON: ") + e.what());
  }
  reject_unknown(root, {"gravity", "sensor_offset", "joints"}, "chain");

  Vec3 gravity(0.0, 0.0, -9.81);
  if (root.contains("gravity")) gravity = read_vec3(root["gravity"], "chain.gravity");
  Pose sensor;
  if (root.contains("sensor_offset")) sensor = read_pose(root["sensor_offset"], "chain.sensor_offset");

  const json& joints_json = require(root, "joints", "chain");
  if (!joints_json.is_array()) throw FormatError("chain.joints must be an array");

  std::vector<Joint> joints;
  std::vector<Link> links;
  for (std::size_t i = 0; i < joints_json.size(); ++i) {
    const json& jj = joints_json[i];
    const std::string where = "joints[" + std::to_string(i) + "]";
    reject_unknown(jj, {"name", "axis", "xyz", "rpy", "limits", "mass", "com", "inertia", "capsule"},
                   where);
    Joint joint;
    joint.name = jj.contains("name") ? jj["name"].get<std::string>() : "joint" + std::to_string(i);
    joint.axis = read_vec3(require(jj, "axis", where), where + ".axis");
    // Tolerate axes typed with a few digits; the model invariant is checked after.
    if (joint.axis.norm() == 0.0) throw ValidationError(where + ".axis is zero");
    joint.axis.normalize();
    if (jj.contains("xyz")) joint.origin.origin = read_vec3(jj["xyz"], where + ".xyz");
    if (jj.contains("rpy")) joint.origin.rotation = rpy_to_rotation(read_vec3(jj["rpy"], where + ".rpy"));
    if (jj.contains("limits")) {
      const json& lim = jj["limits"];
      if (!lim.is_array() || lim.size() != 2) throw FormatError(where + ".limits must be [lower, upper]");
      joint.lower = lim[0].get<double>();
      joint.upper = lim[1].get<double>();
    }

    Link link;
    link.inertia.mass = read_number(jj, "mass", where);
    if (jj.contains("com")) link.inertia.com = read_vec3(jj["com"], where + ".com");
    if (jj.contains("inertia")) {
      const json& in = jj["inertia"];
      const std::string w = where + ".inertia";
      reject_unknown(in, {"ixx", "iyy", "izz", "ixy", "ixz", "iyz"}, w);
      Mat3 m;
      const double ixx = read_number(in, "ixx", w), iyy = read_number(in, "iyy", w),
                   izz = read_number(in, "izz", w);
      const double ixy = in.value("ixy", 0.0), ixz = in.value("ixz", 0.0), iyz = in.value("iyz", 0.0);
      m << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
      link.inertia.inertia = m;
    }
    if (jj.contains("capsule")) {
      const json& c = jj["capsule"];
      const std::string w = where + ".capsule";
      reject_unknown(c, {"a", "b", "radius"}, w);
      link.capsule = CapsuleGeometry{read_vec3(require(c, "a", w), w + ".a"),
                                     read_vec3(require(c, "b", w), w + ".b"),
                                     read_number(c, "radius", w)};
    }
    joints.push_back(std::move(joint));
    links.push_back(std::move(link));
  }
  return ChainModel(std::move(joints), std::move(links), gravity, sensor);
}

ChainModel load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open chain file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_chain(ss.str());
}

std::string chain_to_json(const ChainModel& chain) {
  json root;
  root["gravity"] = vec_json(chain.gravity());
  const Pose& s = chain.sensor_offset();
  if (!s.origin.isZero() || !s.rotation.isIdentity()) {
    root["sensor_offset"] = {{"xyz", vec_json(s.origin)}, {"rpy", vec_json(rotation_to_rpy(s.rotation))}};
  }
  json joints = json::array();
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto& j = chain.joint(i);
    const auto& l = chain.link(i);
    json jj;
    jj["name"] = j.name;
    jj["axis"] = vec_json(j.axis);
    jj["xyz"] = vec_json(j.origin.origin);
    jj["rpy"] = vec_json(rotation_to_rpy(j.origin.rotation));
    jj["limits"] = json::array({j.lower, j.upper});
    jj["mass"] = l.inertia.mass;
    jj["com"] = vec_json(l.inertia.com);
    const Mat3& m = l.inertia.inertia;
    jj["inertia"] = {{"ixx", m(0, 0)}, {"iyy", m(1, 1)}, {"izz", m(2, 2)},
                     {"ixy", m(0, 1)}, {"ixz", m(0, 2)}, {"iyz", m(1, 2)}};
    if (l.capsule) {
      jj["capsule"] = {{"a", vec_json(l.capsule->a)}, {"b", vec_json(l.capsule->b)},
                       {"radius", l.capsule->radius}};
    }
    joints.push_back(std::move(jj));
  }
  root["joints"] = std::move(joints);
  return root.dump(2);
}

namespace {

struct ArmSpec {
  Vec3 xyz;
  double roll;
  double lower, upper;
  double mass;
  Vec3 a, b;
  double radius;
};

ChainModel build_arm(const std::vector<ArmSpec>& specs) {
  std::vector<Joint> joints;
  std::vector<Link> links;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    Joint j;
    j.name = "joint" + std::to_string(i + 1);
    j.axis = Vec3::UnitZ();
    j.origin.origin = s.xyz;
    j.origin.rotation = rpy_to_rotation(Vec3(s.roll, 0.0, 0.0));
    j.lower = s.lower;
    j.upper = s.upper;

    // Solid cylinder of the capsule's radius spanning its segment plus caps.
    Link l;
    const Vec3 axis = (s.b - s.a).normalized();
    const double len = (s.b - s.a).norm() + 2.0 * s.radius;
    const double i_axial = 0.5 * s.mass * s.radius * s.radius;
    const double i_trans = s.mass * (3.0 * s.radius * s.radius + len * len) / 12.0;
    l.inertia.mass = s.mass;
    l.inertia.com = 0.5 * (s.a + s.b);
    l.inertia.inertia = i_trans * Mat3::Identity() + (i_axial - i_trans) * axis * axis.transpose();
    l.capsule = CapsuleGeometry{s.a, s.b, s.radius};
    joints.push_back(j);
    links.push_back(l);
  }
  return ChainModel(std::move(joints), std::move(links));
}

}  // namespace

ChainModel seven_dof_arm() {
  using std::numbers::pi;
  // Joint frames follow the Panda's modified DH layout, including the 8.25 cm
  // elbow and 8.8 cm wrist offsets. Link bodies are single capsules; the elbow,
  // forearm and hand capsules lean away from their roll axes like the real
  // castings do.
  const double up = pi / 2.0;
  return build_arm({
      {{0.0, 0.0, 0.333}, 0.0, -2.8973, 2.8973, 4.97, {0.0, 0.0, -0.19}, {0.0, 0.0, -0.06}, 0.06},
      {{0.0, 0.0, 0.0}, -up, -1.7628, 1.7628, 0.65, {0.0, -0.07, 0.0}, {0.0, -0.18, 0.0}, 0.06},
      {{0.0, -0.316, 0.0}, up, -2.8973, 2.8973, 3.23, {0.0, 0.0, -0.14}, {0.06, 0.0, -0.03}, 0.06},
      {{0.0825, 0.0, 0.0}, up, -3.0718, -0.0698, 3.59, {-0.01, 0.07, 0.0}, {-0.06, 0.15, 0.0}, 0.055},
      {{-0.0825, 0.384, 0.0}, -up, -2.8973, 2.8973, 1.23, {0.0, 0.06, -0.24}, {0.0, 0.0, -0.09}, 0.05},
      {{0.0, 0.0, 0.0}, up, -0.0175, 3.7525, 1.67, {0.03, 0.0, -0.01}, {0.09, 0.0, -0.01}, 0.045},
      {{0.088, 0.0, 0.0}, up, -2.8973, 2.8973, 0.74, {0.0, -0.08, 0.14}, {0.0, 0.08, 0.14}, 0.035},
  });
}

ChainModel coaxial_arm() {
  using std::numbers::pi;
  // Alternating roll (along the arm) and pitch joints with every joint centre
  // on the arm's centreline.
  const double up = pi / 2.0;
  return build_arm({
      {{0.0, 0.0, 0.0}, 0.0, -2.8, 2.8, 4.0, {0.0, 0.0, 0.085}, {0.0, 0.0, 0.285}, 0.065},
      {{0.0, 0.0, 0.36}, up, -1.7, 1.7, 2.5, {0.0, 0.07, 0.0}, {0.0, 0.13, 0.0}, 0.06},
      {{0.0, 0.20, 0.0}, -up, -2.8, 2.8, 2.5, {0.0, 0.0, 0.07}, {0.0, 0.0, 0.15}, 0.06},
      {{0.0, 0.0, 0.22}, up, -2.0, 2.0, 2.0, {0.0, 0.065, 0.0}, {0.0, 0.135, 0.0}, 0.055},
      {{0.0, 0.20, 0.0}, -up, -2.8, 2.8, 1.5, {0.0, 0.0, 0.06}, {0.0, 0.0, 0.15}, 0.05},
      {{0.0, 0.0, 0.21}, up, -2.0, 2.0, 1.0, {0.0, 0.06, 0.0}, {0.0, 0.08, 0.0}, 0.05},
      {{0.0, 0.14, 0.0}, -up, -2.8, 2.8, 0.8, {0.0, 0.0, 0.055}, {0.0, 0.0, 0.16}, 0.045},
  });
}

}  // namespace mcpep
