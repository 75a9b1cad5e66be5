#pragma once

#include "mcpep/contact.hpp"
#include "mcpep/mesh.hpp"

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcpep {

struct FilterConfig {
  /// Particles per set (m).
  int particles_per_set = 100;
  /// Weight sharpness: w = exp(-alpha * residual_sq).
  double alpha = 50.0;
  /// Residual threshold shared by exploration and set management.
  double epsilon_bar = 0.1;
  /// Motion step rank ~ geometric(step_p) over the neighbor row.
  double step_p = 0.4;
  /// Exploration particles per set; negative means m / 5.
  int explore_cap = -1;
  /// Friction coefficient of the contact cones.
  double mu = 0.5;
  /// A new set is only added once the youngest set is this many iterations old
  /// and has explained the measurement at least once ...
  int min_set_age = 50;
  /// ... or has been searching for this many iterations.
  int search_timeout = 0;
  /// Upper bound on simultaneous sets; 0 means one per link with a surface.
  int max_sets = 0;
  /// Momentum observer gain used by the estimation pipeline (1/s).
  double observer_gain = 100.0;
  std::uint64_t seed = 1;

  int effective_explore_cap() const { return explore_cap < 0 ? particles_per_set / 5 : explore_cap; }
  void validate() const;
};

FilterConfig parse_filter_config(std::string_view json_text);
FilterConfig load_filter_config(const std::filesystem::path& path);
std::string filter_config_to_json(const FilterConfig& config);

struct ParticleSet {
  std::vector<Particle> basic;
  std::vector<double> basic_weights;
  std::vector<Particle> explore;
  std::vector<double> explore_weights;
  long created_at = 0;
  /// Set once best_residual has dropped to epsilon_bar.
  bool settled = false;

  // Snapshot of the last measurement update; resampling leaves it intact.
  bool evaluated = false;
  Particle best;
  double best_residual = std::numeric_limits<double>::infinity();
  double best_weight = 0.0;  // normalized

  std::size_t size() const { return basic.size() + explore.size(); }
  /// exp(-alpha * best_residual), the largest pre-normalization weight.
  double best_raw_weight(double alpha) const;
};

struct FilterState {
  std::vector<ParticleSet> sets;
  FilterConfig config;
  long iteration = 0;
  long qp_failures = 0;

  bool operator==(const FilterState& other) const;
};

/// Immutable preprocessing shared by every filter instance.
class FilterModel {
 public:
  FilterModel(ChainModel chain, SurfaceSet surfaces, std::vector<NeighborTable> tables);

  const ChainModel& chain() const { return chain_; }
  const SurfaceSet& surfaces() const { return surfaces_; }
  const std::vector<NeighborTable>& tables() const { return tables_; }
  const SurfaceSampler& sampler() const { return sampler_; }
  int links_with_surface() const;

 private:
  ChainModel chain_;
  SurfaceSet surfaces_;
  std::vector<NeighborTable> tables_;
  SurfaceSampler sampler_;
};

/// Builds a model from the chain's capsule geometry.
FilterModel make_synthetic_model(const ChainModel& chain, std::uint32_t k = 64,
                                 double edge = kDefaultMeshEdge);

/// QP residuals for contact hypotheses at one configuration and measurement.
/// Slots are filled column-wise so that a set's partners are written once.
class ResidualEvaluator {
 public:
  ResidualEvaluator(const FilterModel& model, const VecX& q, const VecX& w_hat, double mu);

  const std::vector<Pose>& frames() const { return frames_; }
  ContactPoint contact(const Particle& p) const;

  void reset(std::size_t slots);
  void place(std::size_t slot, const Particle& p);
  /// Residual of the placed hypothesis; nullopt when the solver fails.
  std::optional<double> residual() const;
  ForceSolution solve() const;

  /// Residual of an arbitrary hypothesis; the empty hypothesis gives |w_hat|^2.
  std::optional<double> residual_of(std::span<const Particle> hypothesis);

 private:
  const FilterModel& model_;
  std::vector<Pose> frames_;
  VecX w_hat_;
  MatX qt_;
  double mu_ = 0.5;
  std::vector<FrictionConeBasis> bases_;
};

/// Random walk over the neighbor tables: face <- row[face][s], s ~ geometric(p).
void motion_model(FilterState& state, const FilterModel& model, Rng& rng);

/// Weights from sampled-partner QP residuals, normalized per set.
void measurement_update(FilterState& state, const FilterModel& model, const VecX& q,
                        const VecX& w_hat, Rng& rng);

/// Moves one basic particle to a neighbouring link when the set explains the
/// measurement poorly, otherwise folds the exploration particles back in.
void update_exploration_particles(FilterState& state, const FilterModel& model, Rng& rng);

/// Systematic resampling of the basic particles from basic and explore;
/// exploration particles are kept.
void resample_with_ep(FilterState& state, Rng& rng);

/// Adds a scattered set when the current sets do not explain w_hat, or drops
/// the first set the measurement can do without.
void manage_particle_sets(FilterState& state, const FilterModel& model, const VecX& q,
                          const VecX& w_hat, Rng& rng);

/// One full iteration: motion, measurement, exploration, resampling, management.
void mcp_ep_step(FilterState& state, const FilterModel& model, const VecX& q, const VecX& w_hat,
                 Rng& rng);

/// Residual of the best particles of `sets`, or |w_hat|^2 without sets.
double explained_residual(const FilterModel& model, const VecX& q, const VecX& w_hat, double mu,
                          std::span<const ParticleSet* const> sets);

struct EstimatedContact {
  Particle particle;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  Vec3 force = Vec3::Zero();
  double max_weight = 0.0;
};

struct ContactEstimate {
  std::vector<EstimatedContact> contacts;  // set creation order
  double residual_sq = 0.0;
};

ContactEstimate extract_estimate(const FilterState& state, const FilterModel& model, const VecX& q,
                                 const VecX& w_hat);

FilterState make_filter_state(const FilterConfig& config);
ParticleSet make_particle_set(const FilterModel& model, int m, long created_at, Rng& rng);

/// Convenience owner of a state and its random stream.
class ContactParticleFilter {
 public:
  ContactParticleFilter(const FilterModel& model, FilterConfig config);

  void step(const VecX& q, const VecX& w_hat);
  ContactEstimate estimate(const VecX& q, const VecX& w_hat) const;
  const FilterState& state() const { return state_; }
  FilterState& mutable_state() { return state_; }
  Rng& rng() { return rng_; }

 private:
  const FilterModel& model_;
  FilterState state_;
  Rng rng_;
};

}  // namespace mcpep
