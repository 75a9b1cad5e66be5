#pragma once

#include "mcpep/filter.hpp"
#include "mcpep/sensing.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcpep {

struct GroundTruthContact {
  Particle particle;
  Vec3 force = Vec3::Zero();  // world frame, N
  double onset = 0.0;         // s
};

/// Per-channel Gaussian standard deviations.
struct NoiseModel {
  double joint_torque = 0.0;  // N m
  double base_force = 0.0;    // N
  double base_moment = 0.0;   // N m

  bool active() const { return joint_torque > 0.0 || base_force > 0.0 || base_moment > 0.0; }
};

/// q(t) = q0 + amplitude * sin(2 pi frequency t), per joint.
struct Sinusoid {
  VecX amplitude;
  VecX frequency;  // Hz
};

struct Scenario {
  VecX q;
  std::optional<Sinusoid> motion;
  std::vector<GroundTruthContact> contacts;
  NoiseModel noise;
  double duration = 0.3;   // s
  double rate = 1000.0;    // Hz
  std::uint64_t noise_seed = 0;

  std::size_t frame_count() const;
  JointState state_at(double t) const;
  /// Rejects repeated links, forces outside the polyhedral cone, onsets
  /// closer than `min_gap`, and out-of-range indices.
  void validate(const ChainModel& chain, const SurfaceSet& surfaces, double mu, double min_gap = 0.0) const;
};

Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);

/// Noise-free sensor reading at time t; noise is added when `rng` is given.
SensorFrame synthesize_measurements(const ChainModel& chain, const SurfaceSet& surfaces,
                                    const Scenario& scenario, double t, Rng* rng = nullptr);
std::vector<SensorFrame> synthesize_frames(const ChainModel& chain, const SurfaceSet& surfaces,
                                           const Scenario& scenario);

/// Observer plus base-wrench estimate, one frame at a time.
struct ScenarioOptions {
  int contacts = 1;
  double force = 20.0;          // N
  double first_onset = 0.01;    // s
  double onset_gap = 0.1;       // s
  double settle = 0.3;          // s after the last onset
  double mu = 0.5;
  NoiseModel noise;
  /// Force the contact links in onset order; empty draws distinct links.
  std::vector<int> links;
};

/// Random configuration within joint limits, contacts on distinct links with
/// area-weighted faces, forces of fixed magnitude uniform in the polyhedral cone.
Scenario random_scenario(const FilterModel& model, const ScenarioOptions& options, Rng& rng);

/// Uniform direction inside the polyhedral cone, scaled to `magnitude`.
Vec3 sample_cone_force(const FrictionConeBasis& basis, double magnitude, Rng& rng);

inline constexpr double kSuccessThreshold = 0.0225;  // m

struct TrialMetrics {
  bool success = false;
  std::vector<bool> contact_success;    // truth order
  std::vector<double> position_error;   // m, truth order
  std::vector<double> force_error;      // N, truth order
  std::vector<int> truth_links;
  std::size_t estimated_contacts = 0;
  /// Iterations from the creation of the newest set to the first iteration
  /// localizing every contact; -1 when that never happens.
  long convergence_steps = -1;
  double mean_step_ms = 0.0;
  long qp_failures = 0;
};

/// Assignment of estimates to truth contacts minimizing the largest position
/// error. Unmatched truth contacts get the distance to the nearest estimate
/// (or to the base origin without estimates) and their full force as error.
void score_estimate(const ContactEstimate& estimate, std::span<const Vec3> truth_points,
                    std::span<const Vec3> truth_forces, TrialMetrics& metrics);

TrialMetrics run_trial(const FilterModel& model, const Scenario& scenario, const FilterConfig& config,
                       Rng& rng);

struct BenchmarkOptions {
  int contacts = 1;
  int trials = 100;
  std::uint64_t seed = 1;
  ScenarioOptions scenario;
  FilterConfig filter;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct BenchmarkSummary {
  int contacts = 0;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_convergence_steps = 0.0;
  double position_rmse_cm = 0.0;          // all contacts of all trials
  double position_rmse_success_cm = 0.0;  // successful trials only
  double force_rmse_n = 0.0;
  double force_rmse_success_n = 0.0;
  double mean_step_ms = 0.0;
};

/// Success counts indexed by [first contact link][second contact link].
struct PairMatrix {
  std::vector<std::vector<int>> trials;
  std::vector<std::vector<int>> successes;

  double rate(int first, int second) const;
  /// Mean success rate over the populated cells of a first-contact row.
  std::optional<double> row_mean(int first) const;
};

struct BenchmarkResult {
  BenchmarkSummary summary;
  std::vector<TrialMetrics> trials;
  std::optional<PairMatrix> pairs;  // dual-contact runs
};

BenchmarkResult run_benchmark(const FilterModel& model, const BenchmarkOptions& options);
BenchmarkSummary summarize(int contacts, const std::vector<TrialMetrics>& trials);
PairMatrix pair_matrix(const std::vector<TrialMetrics>& trials, int links);

/// Machine-independent CSV (run-time is left to the console report).
std::string benchmark_csv(const BenchmarkResult& result);
std::string pair_matrix_csv(const PairMatrix& pairs);
std::string benchmark_report(const BenchmarkResult& result);

// Sensor-frame CSV: t, q*, dq*, tau*, fx, fy, fz, mx, my, mz.
void write_frames_csv(const std::filesystem::path& path, const std::vector<SensorFrame>& frames);
std::string frames_to_csv(const std::vector<SensorFrame>& frames);
std::vector<SensorFrame> parse_frames_csv(std::string_view text, std::size_t dof);
std::vector<SensorFrame> read_frames_csv(const std::filesystem::path& path, std::size_t dof);

struct EstimateRow {
  long iteration = 0;
  ContactEstimate estimate;
};
/// Columns: iter, k, then link, face, x, y, z, fx, fy, fz per contact, then residual.
std::string estimates_to_csv(const std::vector<EstimateRow>& rows);

/// Runs the filter over a recorded stream, one iteration per frame. The
/// frame spacing must be uniform to within 1%.
std::vector<EstimateRow> estimate_frames(const FilterModel& model, const std::vector<SensorFrame>& frames,
                                         const FilterConfig& config);

// Model directory: link<i>.obj, optional link<i>.mask, link<i>.mcpn for each
// link with a surface.
void save_model(const FilterModel& model, const std::filesystem::path& dir);
FilterModel load_model(ChainModel chain, const std::filesystem::path& dir);

}  // namespace mcpep
