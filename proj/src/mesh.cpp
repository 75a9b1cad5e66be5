#include "mcpep/mesh.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace mcpep {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

// ---------------------------------------------------------------------------
// OBJ / mask parsing

TriangleMesh parse_obj(std::string_view text) {
  TriangleMesh mesh;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        throw FormatError("obj line " + std::to_string(line_no) + ": bad vertex");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long v = 0;
        auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
        if (ec != std::errc() || v == 0) {
          throw FormatError("obj line " + std::to_string(line_no) + ": bad face index '" + tok + "'");
        }
        // Negative indices are relative to the current vertex count.
        if (v < 0) v = static_cast<long>(mesh.vertices.size()) + v + 1;
        idx.push_back(v - 1);
      }
      if (idx.size() != 3) {
        throw FormatError("obj line " + std::to_string(line_no) + ": face has " +
                          std::to_string(idx.size()) + " vertices, only triangles are supported");
      }
      std::array<std::uint32_t, 3> f{};
      for (int k = 0; k < 3; ++k) {
        if (idx[static_cast<std::size_t>(k)] < 0) {
          throw FormatError("obj line " + std::to_string(line_no) + ": face index out of range");
        }
        f[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(idx[static_cast<std::size_t>(k)]);
      }
      mesh.faces.push_back(f);
    }
  }
  for (const auto& f : mesh.faces) {
    for (auto v : f) {
      if (v >= mesh.vertices.size()) throw FormatError("obj face references missing vertex");
    }
  }
  return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) { return parse_obj(slurp(path)); }

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

std::vector<std::uint32_t> parse_mask(std::string_view text) {
  std::vector<std::uint32_t> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = line.substr(0, line.find('#'));
    std::istringstream ls(line);
    long v = 0;
    if (!(ls >> v)) continue;
    std::string rest;
    if (v < 0 || (ls >> rest)) {
      throw FormatError("mask line " + std::to_string(line_no) + ": expected one face index");
    }
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<std::uint32_t> read_mask(const std::filesystem::path& path) {
  return parse_mask(slurp(path));
}

// ---------------------------------------------------------------------------
// Surfaces

double LinkSurface::total_area() const {
  double a = 0.0;
  for (double x : areas) a += x;
  return a;
}

LinkSurface make_surface(const TriangleMesh& mesh, int link_index, std::span<const std::uint32_t> mask) {
  std::vector<bool> dropped(mesh.faces.size(), false);
  for (auto m : mask) {
    if (m >= mesh.faces.size()) {
      throw InputError("mask references face " + std::to_string(m) + " of " +
                       std::to_string(mesh.faces.size()));
    }
    dropped[m] = true;
  }

  LinkSurface s;
  s.link_index = link_index;
  s.vertices = mesh.vertices;
  for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
    if (dropped[f]) continue;
    s.faces.push_back(mesh.faces[f]);
    s.source_faces.push_back(f);
  }

  std::unordered_map<std::uint64_t, int> edge_use;
  for (const auto& f : s.faces) {
    for (int k = 0; k < 3; ++k) ++edge_use[edge_key(f[static_cast<std::size_t>(k)], f[static_cast<std::size_t>((k + 1) % 3)])];
  }
  std::vector<std::uint64_t> bad;
  for (const auto& [key, count] : edge_use) {
    if (count > 2) bad.push_back(key);
  }
  if (!bad.empty()) {
    std::sort(bad.begin(), bad.end());
    std::ostringstream os;
    os << "mesh for link " << link_index << " has " << bad.size() << " non-manifold edge(s):";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 10); ++i) {
      os << " (" << (bad[i] >> 32) << ',' << (bad[i] & 0xffffffffu) << ')';
    }
    throw ValidationError(os.str());
  }

  Vec3 reference = Vec3::Zero();
  for (const auto& v : s.vertices) reference += v;
  if (!s.vertices.empty()) reference /= static_cast<double>(s.vertices.size());

  double orientation = 0.0;
  for (std::size_t i = 0; i < s.faces.size(); ++i) {
    const auto& f = s.faces[i];
    const Vec3& a = s.vertices[f[0]];
    const Vec3& b = s.vertices[f[1]];
    const Vec3& c = s.vertices[f[2]];
    const Vec3 cr = (b - a).cross(c - a);
    const double area2 = cr.norm();
    if (!(area2 > 0.0)) {
      throw ValidationError("face " + std::to_string(s.source_faces[i]) + " of link " +
                            std::to_string(link_index) + " is degenerate");
    }
    const Vec3 centroid = (a + b + c) / 3.0;
    s.centroids.push_back(centroid);
    s.normals.push_back(cr / area2);
    s.areas.push_back(0.5 * area2);
    orientation += 0.5 * area2 * s.normals.back().dot(centroid - reference);
  }
  if (orientation < 0.0) {
    for (auto& f : s.faces) std::swap(f[1], f[2]);
    for (auto& n : s.normals) n = -n;
  }
  return s;
}

LinkSurface load_surface(const std::filesystem::path& mesh_file, int link_index,
                         const std::filesystem::path& mask_file) {
  const TriangleMesh mesh = read_obj(mesh_file);
  std::vector<std::uint32_t> mask;
  if (!mask_file.empty()) mask = read_mask(mask_file);
  return make_surface(mesh, link_index, mask);
}

SurfaceStats surface_stats(const LinkSurface& surface) {
  SurfaceStats st;
  st.faces = surface.face_count();
  if (st.faces == 0) return st;
  st.min_area = *std::min_element(surface.areas.begin(), surface.areas.end());
  st.max_area = *std::max_element(surface.areas.begin(), surface.areas.end());
  st.total_area = surface.total_area();
  double r = 0.0;
  for (std::size_t i = 0; i < st.faces; ++i) {
    for (auto v : surface.faces[i]) r += (surface.vertices[v] - surface.centroids[i]).norm();
  }
  st.mean_face_radius = r / (3.0 * static_cast<double>(st.faces));
  return st;
}

// ---------------------------------------------------------------------------
// Neighbor tables

NeighborTable::NeighborTable(std::uint32_t face_count, std::uint32_t k, std::vector<NeighborEntry> entries)
    : face_count_(face_count), k_(k), entries_(std::move(entries)) {
  if (entries_.size() != static_cast<std::size_t>(face_count) * k) {
    throw ValidationError("neighbor table size does not match face_count * K");
  }
  for (const auto& e : entries_) {
    if (e.face >= face_count_) throw ValidationError("neighbor table references an invalid face");
  }
}

NeighborTable build_neighbor_table(const LinkSurface& surface, std::uint32_t k) {
  const auto nf = static_cast<std::uint32_t>(surface.face_count());
  if (k == 0 || k > nf) {
    throw InputError("neighbor count K=" + std::to_string(k) + " must be in [1, " + std::to_string(nf) + "]");
  }

  // Faces are adjacent when they share a vertex.
  std::vector<std::vector<std::uint32_t>> vertex_faces(surface.vertices.size());
  for (std::uint32_t f = 0; f < nf; ++f) {
    for (auto v : surface.faces[f]) vertex_faces[v].push_back(f);
  }
  std::vector<std::vector<std::uint32_t>> adjacent(nf);
  for (std::uint32_t f = 0; f < nf; ++f) {
    auto& adj = adjacent[f];
    for (auto v : surface.faces[f]) {
      for (auto g : vertex_faces[v]) {
        if (g != f) adj.push_back(g);
      }
    }
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }

  // Connectivity check.
  {
    std::vector<bool> seen(nf, false);
    std::vector<std::uint32_t> stack{0};
    seen[0] = true;
    std::uint32_t reached = 1;
    while (!stack.empty()) {
      const auto f = stack.back();
      stack.pop_back();
      for (auto g : adjacent[f]) {
        if (!seen[g]) {
          seen[g] = true;
          ++reached;
          stack.push_back(g);
        }
      }
    }
    if (reached != nf) {
      throw ValidationError("surface of link " + std::to_string(surface.link_index) +
                            " is disconnected (" + std::to_string(reached) + " of " +
                            std::to_string(nf) + " faces reachable from face 0)");
    }
  }

  std::vector<NeighborEntry> entries(static_cast<std::size_t>(nf) * k);
  std::vector<double> dist(nf, std::numeric_limits<double>::infinity());
  std::vector<std::uint32_t> touched;
  std::vector<bool> settled(nf, false);
  using Item = std::pair<double, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;

  for (std::uint32_t src = 0; src < nf; ++src) {
    for (auto f : touched) {
      dist[f] = std::numeric_limits<double>::infinity();
      settled[f] = false;
    }
    touched.clear();
    heap = {};
    dist[src] = 0.0;
    touched.push_back(src);
    heap.emplace(0.0, src);
    std::uint32_t count = 0;
    NeighborEntry* row = entries.data() + static_cast<std::size_t>(src) * k;
    while (!heap.empty() && count < k) {
      const auto [d, f] = heap.top();
      heap.pop();
      if (settled[f]) continue;
      settled[f] = true;
      row[count++] = NeighborEntry{f, static_cast<float>(d)};
      for (auto g : adjacent[f]) {
        if (settled[g]) continue;
        const double nd = d + (surface.centroids[f] - surface.centroids[g]).norm();
        if (nd < dist[g]) {
          if (std::isinf(dist[g])) touched.push_back(g);
          dist[g] = nd;
          heap.emplace(nd, g);
        }
      }
    }
  }
  return NeighborTable(nf, k, std::move(entries));
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes[offset + i]) << (8 * i));
  return v;
}

constexpr std::uint16_t kTableVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4;

}  // namespace

std::vector<std::uint8_t> encode_neighbor_table(const NeighborTable& table) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + table.entries().size() * 8);
  for (char c : {'M', 'C', 'P', 'N'}) out.push_back(static_cast<std::uint8_t>(c));
  put_le<std::uint16_t>(out, kTableVersion);
  put_le<std::uint32_t>(out, table.face_count());
  put_le<std::uint32_t>(out, table.k());
  for (const auto& e : table.entries()) {
    put_le<std::uint32_t>(out, e.face);
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(e.distance));
  }
  return out;
}

NeighborTable decode_neighbor_table(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || bytes[0] != 'M' || bytes[1] != 'C' || bytes[2] != 'P' ||
      bytes[3] != 'N') {
    throw FormatError("neighbor table: bad magic");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kTableVersion) {
    throw FormatError("neighbor table: unsupported version " + std::to_string(version));
  }
  const auto nf = get_le<std::uint32_t>(bytes, 6);
  const auto k = get_le<std::uint32_t>(bytes, 10);
  const std::size_t expected = kHeaderBytes + static_cast<std::size_t>(nf) * k * 8;
  if (bytes.size() != expected) {
    throw FormatError("neighbor table: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  std::vector<NeighborEntry> entries(static_cast<std::size_t>(nf) * k);
  std::size_t off = kHeaderBytes;
  for (auto& e : entries) {
    e.face = get_le<std::uint32_t>(bytes, off);
    e.distance = std::bit_cast<float>(get_le<std::uint32_t>(bytes, off + 4));
    off += 8;
  }
  return NeighborTable(nf, k, std::move(entries));
}

void write_neighbor_table(const std::filesystem::path& path, const NeighborTable& table) {
  const auto bytes = encode_neighbor_table(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

NeighborTable read_neighbor_table(const std::filesystem::path& path) {
  const std::string raw = slurp(path);
  return decode_neighbor_table(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
}

// ---------------------------------------------------------------------------
// Particles

void check_particle(const SurfaceSet& surfaces, const Particle& p) {
  if (p.link < 0 || static_cast<std::size_t>(p.link) >= surfaces.size() || p.face < 0 ||
      static_cast<std::size_t>(p.face) >= surfaces[static_cast<std::size_t>(p.link)].face_count()) {
    throw InputError("particle (" + std::to_string(p.link) + ", " + std::to_string(p.face) +
                     ") is not on a loaded surface");
  }
}

SurfacePoint particle_to_world(std::span<const Pose> frames, const SurfaceSet& surfaces, const Particle& p) {
  check_particle(surfaces, p);
  if (static_cast<std::size_t>(p.link) >= frames.size()) throw InputError("particle link beyond chain");
  const auto& s = surfaces[static_cast<std::size_t>(p.link)];
  const Pose& f = frames[static_cast<std::size_t>(p.link)];
  return {f.apply(s.centroids[static_cast<std::size_t>(p.face)]),
          f.rotation * s.normals[static_cast<std::size_t>(p.face)]};
}

SurfacePoint particle_to_world(const ChainModel& chain, const VecX& q, const SurfaceSet& surfaces,
                               const Particle& p) {
  check_particle(surfaces, p);
  const auto frames = forward_kinematics(chain, q);
  return particle_to_world(frames, surfaces, p);
}

SurfaceSampler::SurfaceSampler(const SurfaceSet& surfaces) {
  double acc = 0.0;
  for (const auto& s : surfaces) {
    std::vector<double> cdf;
    cdf.reserve(s.face_count());
    double a = 0.0;
    for (double x : s.areas) cdf.push_back(a += x);
    acc += a;
    link_cdf_.push_back(acc);
    face_cdf_.push_back(std::move(cdf));
  }
  if (!(acc > 0.0)) throw InputError("no surface faces to sample from");
}

bool SurfaceSampler::has_faces(int link) const {
  return link >= 0 && static_cast<std::size_t>(link) < face_cdf_.size() &&
         !face_cdf_[static_cast<std::size_t>(link)].empty();
}

namespace {
std::size_t draw_index(const std::vector<double>& cdf, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, cdf.back());
  const double x = u(rng);
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}
}  // namespace

Particle SurfaceSampler::sample(Rng& rng) const {
  auto link = draw_index(link_cdf_, rng);
  // Skip links of zero area that the upper_bound could land on at a boundary.
  while (face_cdf_[link].empty()) ++link;
  return sample_on_link(static_cast<int>(link), rng);
}

Particle SurfaceSampler::sample_on_link(int link, Rng& rng) const {
  if (!has_faces(link)) throw InputError("link " + std::to_string(link) + " has no surface");
  const auto& cdf = face_cdf_[static_cast<std::size_t>(link)];
  return Particle{link, static_cast<std::int32_t>(draw_index(cdf, rng))};
}

// ---------------------------------------------------------------------------
// Parametric meshes

TriangleMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
             {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::uint64_t, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = edge_key(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back(((m.vertices[a] + m.vertices[b]) * 0.5).normalized());
      const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
      mid.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<std::uint32_t, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const auto ab = midpoint(f[0], f[1]);
      const auto bc = midpoint(f[1], f[2]);
      const auto ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriangleMesh make_cube(double side) {
  const double h = side / 2.0;
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? h : -h, (i & 2) ? h : -h, (i & 4) ? h : -h);
  }
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriangleMesh make_grid(int nx, int ny, double spacing) {
  TriangleMesh m;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) m.vertices.emplace_back(i * spacing, j * spacing, 0.0);
  }
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>(j * (nx + 1) + i); };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return m;
}

TriangleMesh make_capsule(const Vec3& a, const Vec3& b, double radius, double edge) {
  using std::numbers::pi;
  if (!(radius > 0.0) || !(edge > 0.0)) throw InputError("capsule needs positive radius and edge");
  const double length = (b - a).norm();

  // Profile of the surface of revolution about local z: (z, rho) samples from
  // the bottom pole to the top pole, with rings at both cap/cylinder seams.
  std::vector<std::pair<double, double>> profile;
  const int cap_steps = std::max(2, static_cast<int>(std::lround(0.5 * pi * radius / edge)));
  const int cyl_steps = length > 0.0 ? std::max(1, static_cast<int>(std::lround(length / edge))) : 0;
  for (int i = 0; i <= cap_steps; ++i) {
    const double phi = pi - 0.5 * pi * i / cap_steps;  // polar angle from +z
    profile.emplace_back(radius * std::cos(phi), radius * std::sin(phi));
  }
  for (int i = 1; i <= cyl_steps; ++i) profile.emplace_back(length * i / cyl_steps, radius);
  for (int i = 1; i <= cap_steps; ++i) {
    const double phi = 0.5 * pi - 0.5 * pi * i / cap_steps;
    profile.emplace_back(length + radius * std::cos(phi), radius * std::sin(phi));
  }
  profile.front().second = 0.0;
  profile.back().second = 0.0;

  TriangleMesh m;
  struct Ring {
    std::uint32_t start;
    int count;
    double offset;
  };
  std::vector<Ring> rings;
  for (std::size_t r = 0; r < profile.size(); ++r) {
    const auto [z, rho] = profile[r];
    const bool pole = (r == 0 || r + 1 == profile.size());
    const int count = pole ? 1 : std::max(3, static_cast<int>(std::lround(2.0 * pi * rho / edge)));
    const double offset = pole ? 0.0 : (r % 2 ? 0.5 : 0.0) * 2.0 * pi / count;
    rings.push_back({static_cast<std::uint32_t>(m.vertices.size()), count, offset});
    for (int i = 0; i < count; ++i) {
      const double th = offset + 2.0 * pi * i / count;
      m.vertices.emplace_back(rho * std::cos(th), rho * std::sin(th), z);
    }
  }

  // Zip consecutive rings together by angle.
  for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
    const Ring& lo = rings[r];
    const Ring& hi = rings[r + 1];
    auto angle = [](const Ring& ring, int i) {
      return ring.count == 1 ? 1e9 : ring.offset + 2.0 * pi * i / ring.count;
    };
    auto vid = [](const Ring& ring, int i) { return ring.start + static_cast<std::uint32_t>(i % ring.count); };
    int i = 0, j = 0;
    const int imax = lo.count == 1 ? 0 : lo.count;
    const int jmax = hi.count == 1 ? 0 : hi.count;
    while (i < imax || j < jmax) {
      const bool advance_lo = i < imax && (j >= jmax || angle(lo, i + 1) <= angle(hi, j + 1));
      if (advance_lo) {
        m.faces.push_back({vid(lo, i), vid(lo, i + 1), vid(hi, j)});
        ++i;
      } else {
        m.faces.push_back({vid(lo, i), vid(hi, j + 1), vid(hi, j)});
        ++j;
      }
    }
  }

  // Align local z with a->b.
  Mat3 rot = Mat3::Identity();
  if (length > 0.0) {
    rot = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), (b - a) / length).toRotationMatrix();
  }
  for (auto& v : m.vertices) v = rot * v + a;
  return m;
}

SurfaceSet synthesize_surfaces(const ChainModel& chain, double edge) {
  SurfaceSet out;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto& cap = chain.link(i).capsule;
    if (!cap) {
      LinkSurface empty;
      empty.link_index = static_cast<int>(i);
      out.push_back(std::move(empty));
      continue;
    }
    out.push_back(make_surface(make_capsule(cap->a, cap->b, cap->radius, edge), static_cast<int>(i)));
  }
  return out;
}

}  // namespace mcpep
