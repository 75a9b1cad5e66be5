#pragma once

#include "mcpep/kinematics.hpp"

#include <array>
#include <compare>
#include <filesystem>
#include <span>
#include <vector>

namespace mcpep {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
};

/// Wavefront OBJ, triangles only. Texture/normal indices are ignored.
TriangleMesh read_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(std::string_view text);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

/// Newline-separated face indices; '#' starts a comment.
std::vector<std::uint32_t> read_mask(const std::filesystem::path& path);
std::vector<std::uint32_t> parse_mask(std::string_view text);

/// Triangulated surface of one link, in the link frame.
struct LinkSurface {
  int link_index = 0;
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::vector<Vec3> centroids;
  std::vector<Vec3> normals;
  std::vector<double> areas;
  /// Index of each face in the unmasked source mesh.
  std::vector<std::uint32_t> source_faces;

  std::size_t face_count() const { return faces.size(); }
  double total_area() const;
};

/// Builds a surface from a mesh, dropping masked faces. Normals follow the
/// winding, flipped as a whole when they point into the vertex centroid.
/// Throws ValidationError on non-manifold edges or degenerate faces.
LinkSurface make_surface(const TriangleMesh& mesh, int link_index,
                         std::span<const std::uint32_t> mask = {});
LinkSurface load_surface(const std::filesystem::path& mesh_file, int link_index,
                         const std::filesystem::path& mask_file = {});

struct NeighborEntry {
  std::uint32_t face = 0;
  float distance = 0.0f;
};

/// Per-face rows of the K nearest faces by approximate geodesic distance,
/// ascending; entry 0 is the face itself.
class NeighborTable {
 public:
  NeighborTable() = default;
  NeighborTable(std::uint32_t face_count, std::uint32_t k, std::vector<NeighborEntry> entries);

  std::uint32_t face_count() const { return face_count_; }
  std::uint32_t k() const { return k_; }
  std::span<const NeighborEntry> row(std::uint32_t face) const {
    return {entries_.data() + static_cast<std::size_t>(face) * k_, k_};
  }
  const NeighborEntry& at(std::uint32_t face, std::uint32_t rank) const {
    return entries_[static_cast<std::size_t>(face) * k_ + rank];
  }
  const std::vector<NeighborEntry>& entries() const { return entries_; }

  bool operator==(const NeighborTable&) const = default;

 private:
  std::uint32_t face_count_ = 0;
  std::uint32_t k_ = 0;
  std::vector<NeighborEntry> entries_;
};

inline bool operator==(const NeighborEntry& a, const NeighborEntry& b) {
  return a.face == b.face && a.distance == b.distance;
}

/// Dijkstra over the face-adjacency graph (faces sharing a vertex, weighted by
/// centroid distance), truncated to the K nearest faces per source.
NeighborTable build_neighbor_table(const LinkSurface& surface, std::uint32_t k = 64);

/// Binary layout: "MCPN", u16 version = 1, u32 face_count, u32 K, then
/// face_count * K records of (u32 face, f32 distance); all little-endian.
void write_neighbor_table(const std::filesystem::path& path, const NeighborTable& table);
NeighborTable read_neighbor_table(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_neighbor_table(const NeighborTable& table);
NeighborTable decode_neighbor_table(std::span<const std::uint8_t> bytes);

/// Surface hypothesis: face `face` of link `link`.
struct Particle {
  std::int32_t link = 0;
  std::int32_t face = 0;
  auto operator<=>(const Particle&) const = default;
};

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;
};

/// Surfaces are indexed by link; a chain may leave trailing links without one.
using SurfaceSet = std::vector<LinkSurface>;

SurfacePoint particle_to_world(const ChainModel& chain, const VecX& q, const SurfaceSet& surfaces,
                               const Particle& p);
SurfacePoint particle_to_world(std::span<const Pose> frames, const SurfaceSet& surfaces,
                               const Particle& p);
void check_particle(const SurfaceSet& surfaces, const Particle& p);

/// Area-weighted sampling of surface faces.
class SurfaceSampler {
 public:
  SurfaceSampler() = default;
  explicit SurfaceSampler(const SurfaceSet& surfaces);

  /// Link with probability proportional to its area, then face by area.
  Particle sample(Rng& rng) const;
  Particle sample_on_link(int link, Rng& rng) const;
  std::size_t link_count() const { return face_cdf_.size(); }
  bool has_faces(int link) const;

 private:
  std::vector<double> link_cdf_;
  std::vector<std::vector<double>> face_cdf_;
};

struct SurfaceStats {
  std::size_t faces = 0;
  double total_area = 0.0;
  double min_area = 0.0;
  double max_area = 0.0;
  /// Mean centroid-to-vertex distance.
  double mean_face_radius = 0.0;
};
SurfaceStats surface_stats(const LinkSurface& surface);

// Parametric meshes. All are closed and outward-wound unless noted.

TriangleMesh make_icosphere(int subdivisions, double radius = 1.0);
TriangleMesh make_cube(double side = 1.0);
/// Open nx-by-ny grid of squares in the z = 0 plane, two triangles each.
TriangleMesh make_grid(int nx, int ny, double spacing);
/// Capsule around segment a-b with near-uniform faces of the given edge length.
TriangleMesh make_capsule(const Vec3& a, const Vec3& b, double radius, double edge);

/// Default edge length for synthetic link meshes (mean face radius ~0.45 cm).
inline constexpr double kDefaultMeshEdge = 0.0072;

/// One capsule surface per link of the chain (links without geometry get none).
SurfaceSet synthesize_surfaces(const ChainModel& chain, double edge = kDefaultMeshEdge);

}  // namespace mcpep
