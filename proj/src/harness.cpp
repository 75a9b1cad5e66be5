#include "mcpep/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace mcpep {

namespace {

std::string format_double(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

Vec3 json_vec3(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw FormatError(where + " must be a 3-element array");
  Vec3 out;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw FormatError(where + " must be numeric");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

VecX json_vecx(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array()) throw FormatError(where + " must be an array");
  VecX out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw FormatError(where + " must be numeric");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

double json_number(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw FormatError(where + "." + key + " must be numeric");
  return v.get<double>();
}

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw FormatError("unknown key '" + it.key() + "' in " + where);
  }
}

std::vector<double> vec_to_std(const VecX& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

// ---------------------------------------------------------------------------
// Scenario

std::size_t Scenario::frame_count() const {
  return static_cast<std::size_t>(std::floor(duration * rate + 1e-9)) + 1;
}

JointState Scenario::state_at(double t) const {
  JointState s = JointState::at_rest(q);
  if (motion) {
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      const double w = 2.0 * std::numbers::pi * motion->frequency[i];
      const double a = motion->amplitude[i];
      s.q[i] += a * std::sin(w * t);
      s.dq[i] = a * w * std::cos(w * t);
      s.ddq[i] = -a * w * w * std::sin(w * t);
    }
  }
  return s;
}

void Scenario::validate(const ChainModel& chain, const SurfaceSet& surfaces, double mu, double min_gap) const {
  const auto n = static_cast<Eigen::Index>(chain.dof());
  if (q.size() != n) throw ValidationError("scenario q has " + std::to_string(q.size()) + " entries for " +
                                           std::to_string(n) + " joints");
  if (motion && (motion->amplitude.size() != n || motion->frequency.size() != n)) {
    throw ValidationError("scenario motion must give one amplitude and frequency per joint");
  }
  if (!(rate > 0.0)) throw ValidationError("scenario rate must be positive");
  if (!(duration > 0.0)) throw ValidationError("scenario duration must be positive");
  if (noise.joint_torque < 0.0 || noise.base_force < 0.0 || noise.base_moment < 0.0) {
    throw ValidationError("noise standard deviations must be nonnegative");
  }
  const auto frames = forward_kinematics(chain, q);
  std::set<int> links;
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const auto& c = contacts[i];
    const std::string where = "contact " + std::to_string(i);
    try {
      check_particle(surfaces, c.particle);
    } catch (const InputError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!links.insert(c.particle.link).second) {
      throw ValidationError(where + " repeats link " + std::to_string(c.particle.link));
    }
    const SurfacePoint sp = particle_to_world(frames, surfaces, c.particle);
    if (c.force.norm() > 0.0 && !cone_basis(sp.normal, mu).contains(c.force, 1e-9)) {
      throw ValidationError(where + " force lies outside the friction cone");
    }
    if (c.onset < 0.0) throw ValidationError(where + " has a negative onset");
    if (i > 0 && c.onset - contacts[i - 1].onset < min_gap - 1e-12) {
      throw ValidationError(where + " starts less than " + format_double(min_gap, "%g") +
                            " s after the previous contact");
    }
  }
}

Scenario parse_scenario(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scenario is not valid JSON: ") + e.what());
  }
  check_keys(j, {"q", "motion", "contacts", "noise", "duration", "rate", "noise_seed"}, "scenario");
  Scenario s;
  if (!j.contains("q")) throw FormatError("scenario is missing 'q'");
  s.q = json_vecx(j["q"], "scenario.q");
  if (j.contains("motion")) {
    const auto& m = j["motion"];
    check_keys(m, {"amplitude", "frequency"}, "scenario.motion");
    s.motion = Sinusoid{json_vecx(m.at("amplitude"), "scenario.motion.amplitude"),
                        json_vecx(m.at("frequency"), "scenario.motion.frequency")};
  }
  if (j.contains("contacts")) {
    if (!j["contacts"].is_array()) throw FormatError("scenario.contacts must be an array");
    for (std::size_t i = 0; i < j["contacts"].size(); ++i) {
      const auto& c = j["contacts"][i];
      const std::string where = "scenario.contacts[" + std::to_string(i) + "]";
      check_keys(c, {"link", "face", "force", "onset"}, where);
      for (const char* key : {"link", "face", "force"}) {
        if (!c.contains(key)) throw FormatError(where + " is missing '" + key + "'");
      }
      if (!c["link"].is_number_integer() || !c["face"].is_number_integer()) {
        throw FormatError(where + " link and face must be integers");
      }
      GroundTruthContact gt;
      gt.particle = {c["link"].get<std::int32_t>(), c["face"].get<std::int32_t>()};
      gt.force = json_vec3(c["force"], where + ".force");
      gt.onset = c.contains("onset") ? json_number(c, "onset", where) : 0.0;
      s.contacts.push_back(gt);
    }
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    check_keys(n, {"joint_torque", "base_force", "base_moment"}, "scenario.noise");
    if (n.contains("joint_torque")) s.noise.joint_torque = json_number(n, "joint_torque", "scenario.noise");
    if (n.contains("base_force")) s.noise.base_force = json_number(n, "base_force", "scenario.noise");
    if (n.contains("base_moment")) s.noise.base_moment = json_number(n, "base_moment", "scenario.noise");
  }
  if (j.contains("duration")) s.duration = json_number(j, "duration", "scenario");
  if (j.contains("rate")) s.rate = json_number(j, "rate", "scenario");
  if (j.contains("noise_seed")) {
    if (!j["noise_seed"].is_number_unsigned()) throw FormatError("scenario.noise_seed must be a nonnegative integer");
    s.noise_seed = j["noise_seed"].get<std::uint64_t>();
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["q"] = vec_to_std(s.q);
  if (s.motion) {
    j["motion"]["amplitude"] = vec_to_std(s.motion->amplitude);
    j["motion"]["frequency"] = vec_to_std(s.motion->frequency);
  }
  j["contacts"] = nlohmann::ordered_json::array();
  for (const auto& c : s.contacts) {
    nlohmann::ordered_json cj;
    cj["link"] = c.particle.link;
    cj["face"] = c.particle.face;
    cj["force"] = {c.force.x(), c.force.y(), c.force.z()};
    cj["onset"] = c.onset;
    j["contacts"].push_back(cj);
  }
  j["noise"]["joint_torque"] = s.noise.joint_torque;
  j["noise"]["base_force"] = s.noise.base_force;
  j["noise"]["base_moment"] = s.noise.base_moment;
  j["duration"] = s.duration;
  j["rate"] = s.rate;
  j["noise_seed"] = s.noise_seed;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Synthesis

SensorFrame synthesize_measurements(const ChainModel& chain, const SurfaceSet& surfaces,
                                    const Scenario& scenario, double t, Rng* rng) {
  if (t < -1e-12 || t > scenario.duration + 1e-9) throw InputError("time outside the scenario");
  const JointState state = scenario.state_at(t);
  const auto frames = forward_kinematics(chain, state.q);
  std::vector<Pose> frames0;
  if (scenario.motion) frames0 = forward_kinematics(chain, scenario.q);

  std::vector<ExternalForce> external;
  for (const auto& c : scenario.contacts) {
    if (c.onset > t + 1e-12) continue;
    const SurfacePoint sp = particle_to_world(frames, surfaces, c.particle);
    Vec3 force = c.force;
    if (scenario.motion) {
      // The force stays fixed relative to the link it pushes on.
      const auto link = static_cast<std::size_t>(c.particle.link);
      force = frames[link].rotation * frames0[link].rotation.transpose() * c.force;
    }
    external.push_back({c.particle.link, sp.point, force});
  }
  const InverseDynamicsResult id = rnea(chain, state, external);

  SensorFrame f;
  f.t = t;
  f.q = state.q;
  f.dq = state.dq;
  f.tau_j = id.torques;
  f.ft_raw = base_to_sensor(chain, id.base);
  if (rng != nullptr && scenario.noise.active()) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < f.tau_j.size(); ++i) f.tau_j[i] += scenario.noise.joint_torque * nd(*rng);
    for (int i = 0; i < 3; ++i) f.ft_raw.force[i] += scenario.noise.base_force * nd(*rng);
    for (int i = 0; i < 3; ++i) f.ft_raw.moment[i] += scenario.noise.base_moment * nd(*rng);
  }
  return f;
}

std::vector<SensorFrame> synthesize_frames(const ChainModel& chain, const SurfaceSet& surfaces,
                                           const Scenario& scenario) {
  Rng rng(scenario.noise_seed);
  std::vector<SensorFrame> out;
  const std::size_t count = scenario.frame_count();
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = std::min(scenario.duration, static_cast<double>(i) / scenario.rate);
    out.push_back(synthesize_measurements(chain, surfaces, scenario, t, &rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random scenarios

Vec3 sample_cone_force(const FrictionConeBasis& basis, double magnitude, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (;;) {
    const Vec3 d(nd(rng), nd(rng), nd(rng));
    const double len = d.norm();
    if (len < 1e-12) continue;
    if (basis.contains(d / len, 0.0)) return magnitude * d / len;
  }
}

Scenario random_scenario(const FilterModel& model, const ScenarioOptions& options, Rng& rng) {
  const ChainModel& chain = model.chain();
  const auto n = static_cast<Eigen::Index>(chain.dof());
  if (options.contacts < 0) throw InputError("contact count must be nonnegative");
  std::vector<int> candidates;
  for (int l = 0; l < static_cast<int>(model.surfaces().size()); ++l) {
    if (model.sampler().has_faces(l)) candidates.push_back(l);
  }
  if (options.contacts > static_cast<int>(candidates.size())) {
    throw InputError("more contacts requested than links with a surface");
  }
  if (!options.links.empty() && static_cast<int>(options.links.size()) != options.contacts) {
    throw InputError("explicit contact links must match the contact count");
  }

  Scenario s;
  s.q.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Joint& j = chain.joint(static_cast<std::size_t>(i));
    s.q[i] = std::uniform_real_distribution<double>(j.lower, j.upper)(rng);
  }
  std::vector<int> links = options.links;
  if (links.empty()) {
    std::vector<int> pool = candidates;
    for (int c = 0; c < options.contacts; ++c) {
      const auto pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
      links.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  const auto frames = forward_kinematics(chain, s.q);
  for (int c = 0; c < options.contacts; ++c) {
    GroundTruthContact gt;
    gt.particle = model.sampler().sample_on_link(links[static_cast<std::size_t>(c)], rng);
    const SurfacePoint sp = particle_to_world(frames, model.surfaces(), gt.particle);
    gt.force = sample_cone_force(cone_basis(sp.normal, options.mu), options.force, rng);
    gt.onset = options.first_onset + options.onset_gap * c;
    s.contacts.push_back(gt);
  }
  const double last = s.contacts.empty() ? options.first_onset : s.contacts.back().onset;
  s.duration = last + options.settle;
  s.noise = options.noise;
  s.noise_seed = rng();
  return s;
}

// ---------------------------------------------------------------------------
// Trials

void score_estimate(const ContactEstimate& estimate, std::span<const Vec3> truth_points,
                    std::span<const Vec3> truth_forces, TrialMetrics& m) {
  const std::size_t k = truth_points.size();
  const std::size_t e = estimate.contacts.size();
  m.position_error.assign(k, 0.0);
  m.force_error.assign(k, 0.0);
  m.contact_success.assign(k, false);
  m.estimated_contacts = e;

  // assignment[t] = estimate index or -1; exhaustive search over injective maps.
  std::vector<int> best_assignment(k, -1);
  double best_cost = std::numeric_limits<double>::infinity();
  double best_sum = std::numeric_limits<double>::infinity();
  std::vector<int> assignment(k, -1);
  std::vector<bool> used(e, false);
  const auto unmatched_error = [&](std::size_t t) {
    if (estimate.contacts.empty()) return truth_points[t].norm();
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : estimate.contacts) d = std::min(d, (c.point - truth_points[t]).norm());
    return d;
  };
  std::function<void(std::size_t)> search = [&](std::size_t t) {
    if (t == k) {
      double worst = 0.0;
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double d = assignment[i] >= 0
                             ? (estimate.contacts[static_cast<std::size_t>(assignment[i])].point - truth_points[i]).norm()
                             : std::numeric_limits<double>::infinity();
        worst = std::max(worst, d);
        sum += std::isfinite(d) ? d : 1e6;
      }
      if (worst < best_cost || (worst == best_cost && sum < best_sum)) {
        best_cost = worst;
        best_sum = sum;
        best_assignment = assignment;
      }
      return;
    }
    bool any = false;
    for (std::size_t j = 0; j < e; ++j) {
      if (used[j]) continue;
      any = true;
      used[j] = true;
      assignment[t] = static_cast<int>(j);
      search(t + 1);
      used[j] = false;
    }
    // Leave this truth contact unmatched only when estimates run out.
    if (!any || e < k) {
      assignment[t] = -1;
      search(t + 1);
    }
  };
  search(0);

  bool all = true;
  for (std::size_t t = 0; t < k; ++t) {
    const int a = best_assignment[t];
    if (a >= 0) {
      const auto& c = estimate.contacts[static_cast<std::size_t>(a)];
      m.position_error[t] = (c.point - truth_points[t]).norm();
      m.force_error[t] = (c.force - truth_forces[t]).norm();
    } else {
      m.position_error[t] = unmatched_error(t);
      m.force_error[t] = truth_forces[t].norm();
    }
    m.contact_success[t] = a >= 0 && m.position_error[t] <= kSuccessThreshold;
    all = all && m.contact_success[t];
  }
  m.success = all && e == k;
}

TrialMetrics run_trial(const FilterModel& model, const Scenario& scenario, const FilterConfig& config, Rng& rng) {
  const ChainModel& chain = model.chain();
  scenario.validate(chain, model.surfaces(), config.mu);
  FilterState state = make_filter_state(config);
  MeasurementPipeline pipeline(chain, config.observer_gain, 1.0 / scenario.rate);
  Rng noise_rng(scenario.noise_seed);

  const double last_onset = scenario.contacts.empty() ? 0.0 : scenario.contacts.back().onset;
  TrialMetrics metrics;
  for (const auto& c : scenario.contacts) metrics.truth_links.push_back(c.particle.link);

  double step_seconds = 0.0;
  long steps = 0;
  const std::size_t count = scenario.frame_count();
  ContactEstimate final_estimate;
  std::vector<Vec3> truth_points;
  std::vector<Vec3> truth_forces;
  VecX final_q;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = std::min(scenario.duration, static_cast<double>(i) / scenario.rate);
    const SensorFrame frame = synthesize_measurements(chain, model.surfaces(), scenario, t, &noise_rng);
    const VecX w_hat = pipeline.update(frame);

    const auto start = std::chrono::steady_clock::now();
    mcp_ep_step(state, model, frame.q, w_hat, rng);
    step_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++steps;

    const bool all_active = t + 1e-12 >= last_onset;
    const bool last_frame = i + 1 == count;
    if (!all_active && !last_frame) continue;
    if (metrics.convergence_steps >= 0 && !last_frame) continue;

    const auto frames = forward_kinematics(chain, frame.q);
    truth_points.clear();
    truth_forces.clear();
    for (const auto& c : scenario.contacts) {
      truth_points.push_back(particle_to_world(frames, model.surfaces(), c.particle).point);
      Vec3 force = c.force;
      if (scenario.motion) {
        const auto frames0 = forward_kinematics(chain, scenario.q);
        const auto link = static_cast<std::size_t>(c.particle.link);
        force = frames[link].rotation * frames0[link].rotation.transpose() * c.force;
      }
      truth_forces.push_back(force);
    }
    const ContactEstimate est = extract_estimate(state, model, frame.q, w_hat);
    TrialMetrics probe;
    score_estimate(est, truth_points, truth_forces, probe);
    if (probe.success && metrics.convergence_steps < 0 && all_active && !scenario.contacts.empty()) {
      long newest = 0;
      for (const auto& s : state.sets) newest = std::max(newest, s.created_at);
      metrics.convergence_steps = state.iteration - newest;
    }
    if (last_frame) {
      final_estimate = est;
      probe.truth_links = metrics.truth_links;
      probe.convergence_steps = metrics.convergence_steps;
      metrics = probe;
    }
  }
  if (scenario.contacts.empty()) {
    metrics.success = state.sets.empty();
    metrics.estimated_contacts = state.sets.size();
  }
  metrics.mean_step_ms = steps > 0 ? 1e3 * step_seconds / static_cast<double>(steps) : 0.0;
  metrics.qp_failures = state.qp_failures;
  return metrics;
}

// ---------------------------------------------------------------------------
// Benchmark

double PairMatrix::rate(int first, int second) const {
  const int n = trials[static_cast<std::size_t>(first)][static_cast<std::size_t>(second)];
  return n > 0 ? static_cast<double>(successes[static_cast<std::size_t>(first)][static_cast<std::size_t>(second)]) / n
               : 0.0;
}

std::optional<double> PairMatrix::row_mean(int first) const {
  double sum = 0.0;
  int cells = 0;
  for (std::size_t j = 0; j < trials.size(); ++j) {
    if (trials[static_cast<std::size_t>(first)][j] > 0) {
      sum += rate(first, static_cast<int>(j));
      ++cells;
    }
  }
  if (cells == 0) return std::nullopt;
  return sum / cells;
}

BenchmarkSummary summarize(int contacts, const std::vector<TrialMetrics>& trials) {
  BenchmarkSummary s;
  s.contacts = contacts;
  s.trials = static_cast<int>(trials.size());
  double pos_sq = 0.0, pos_sq_ok = 0.0, force_sq = 0.0, force_sq_ok = 0.0, step_ms = 0.0;
  long n_all = 0, n_ok = 0, conv_sum = 0, conv_n = 0;
  for (const auto& t : trials) {
    if (t.success) ++s.successes;
    for (std::size_t c = 0; c < t.position_error.size(); ++c) {
      pos_sq += t.position_error[c] * t.position_error[c];
      force_sq += t.force_error[c] * t.force_error[c];
      ++n_all;
      if (t.success) {
        pos_sq_ok += t.position_error[c] * t.position_error[c];
        force_sq_ok += t.force_error[c] * t.force_error[c];
        ++n_ok;
      }
    }
    if (t.success && t.convergence_steps >= 0) {
      conv_sum += t.convergence_steps;
      ++conv_n;
    }
    step_ms += t.mean_step_ms;
  }
  if (s.trials > 0) {
    s.success_rate = static_cast<double>(s.successes) / s.trials;
    s.mean_step_ms = step_ms / s.trials;
  }
  if (conv_n > 0) s.mean_convergence_steps = static_cast<double>(conv_sum) / static_cast<double>(conv_n);
  if (n_all > 0) {
    s.position_rmse_cm = 100.0 * std::sqrt(pos_sq / static_cast<double>(n_all));
    s.force_rmse_n = std::sqrt(force_sq / static_cast<double>(n_all));
  }
  if (n_ok > 0) {
    s.position_rmse_success_cm = 100.0 * std::sqrt(pos_sq_ok / static_cast<double>(n_ok));
    s.force_rmse_success_n = std::sqrt(force_sq_ok / static_cast<double>(n_ok));
  }
  return s;
}

PairMatrix pair_matrix(const std::vector<TrialMetrics>& trials, int links) {
  PairMatrix m;
  const auto n = static_cast<std::size_t>(links);
  m.trials.assign(n, std::vector<int>(n, 0));
  m.successes.assign(n, std::vector<int>(n, 0));
  for (const auto& t : trials) {
    if (t.truth_links.size() != 2) continue;
    const auto a = static_cast<std::size_t>(t.truth_links[0]);
    const auto b = static_cast<std::size_t>(t.truth_links[1]);
    ++m.trials[a][b];
    if (t.success) ++m.successes[a][b];
  }
  return m;
}

BenchmarkResult run_benchmark(const FilterModel& model, const BenchmarkOptions& options) {
  if (options.trials < 1) throw InputError("benchmark needs at least one trial");
  if (options.contacts < 0) throw InputError("contact count must be nonnegative");
  options.filter.validate();
  ScenarioOptions scenario_options = options.scenario;
  scenario_options.contacts = options.contacts;
  scenario_options.mu = options.filter.mu;

  BenchmarkResult result;
  result.trials.resize(static_cast<std::size_t>(options.trials));
  std::atomic<int> next{0};
  std::vector<std::string> errors(static_cast<std::size_t>(options.trials));
  auto worker = [&]() {
    for (int i = next++; i < options.trials; i = next++) {
      Rng rng(options.seed + static_cast<std::uint64_t>(i));
      try {
        const Scenario scenario = random_scenario(model, scenario_options, rng);
        result.trials[static_cast<std::size_t>(i)] = run_trial(model, scenario, options.filter, rng);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
  };
  unsigned threads = options.threads > 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(options.trials));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw Error("trial " + std::to_string(i) + " failed: " + errors[i]);
  }

  result.summary = summarize(options.contacts, result.trials);
  if (options.contacts == 2) result.pairs = pair_matrix(result.trials, static_cast<int>(model.chain().dof()));
  return result;
}

std::string benchmark_csv(const BenchmarkResult& result) {
  const auto& s = result.summary;
  std::ostringstream out;
  out << "contacts,trials,successes,success_rate,mean_convergence_steps,position_rmse_cm,"
         "position_rmse_success_cm,force_rmse_n,force_rmse_success_n\n";
  out << s.contacts << ',' << s.trials << ',' << s.successes << ',' << format_double(s.success_rate, "%.6f") << ','
      << format_double(s.mean_convergence_steps, "%.4f") << ',' << format_double(s.position_rmse_cm, "%.6f") << ','
      << format_double(s.position_rmse_success_cm, "%.6f") << ',' << format_double(s.force_rmse_n, "%.6f") << ','
      << format_double(s.force_rmse_success_n, "%.6f") << '\n';
  return out.str();
}

std::string pair_matrix_csv(const PairMatrix& pairs) {
  std::ostringstream out;
  out << "first_link,second_link,trials,successes,success_rate\n";
  for (std::size_t a = 0; a < pairs.trials.size(); ++a) {
    for (std::size_t b = 0; b < pairs.trials.size(); ++b) {
      if (a == b) continue;
      out << a << ',' << b << ',' << pairs.trials[a][b] << ',' << pairs.successes[a][b] << ','
          << format_double(pairs.rate(static_cast<int>(a), static_cast<int>(b)), "%.6f") << '\n';
    }
  }
  return out.str();
}

std::string benchmark_report(const BenchmarkResult& result) {
  const auto& s = result.summary;
  std::ostringstream out;
  out << "contacts " << s.contacts << ", trials " << s.trials << '\n'
      << "  success rate        " << format_double(100.0 * s.success_rate, "%.2f") << " %\n"
      << "  convergence steps   " << format_double(s.mean_convergence_steps, "%.2f") << '\n'
      << "  position RMSE       " << format_double(s.position_rmse_cm, "%.3f") << " cm ("
      << format_double(s.position_rmse_success_cm, "%.3f") << " cm over successes)\n"
      << "  force RMSE          " << format_double(s.force_rmse_n, "%.3f") << " N ("
      << format_double(s.force_rmse_success_n, "%.3f") << " N over successes)\n"
      << "  run-time            " << format_double(s.mean_step_ms, "%.3f") << " ms per iteration\n";
  if (result.pairs) {
    const auto& p = *result.pairs;
    out << "  success rate by link pair (row: first contact, column: second contact)\n      ";
    for (std::size_t b = 0; b < p.trials.size(); ++b) out << format_double(static_cast<double>(b + 1), "%6.0f");
    out << "    mean\n";
    for (std::size_t a = 0; a < p.trials.size(); ++a) {
      out << format_double(static_cast<double>(a + 1), "%6.0f");
      for (std::size_t b = 0; b < p.trials.size(); ++b) {
        if (a == b || p.trials[a][b] == 0) {
          out << "     -";
        } else {
          out << format_double(100.0 * p.rate(static_cast<int>(a), static_cast<int>(b)), "%6.0f");
        }
      }
      const auto mean = p.row_mean(static_cast<int>(a));
      out << (mean ? format_double(100.0 * *mean, "%8.1f") : std::string("       -")) << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// CSV files

std::string frames_to_csv(const std::vector<SensorFrame>& frames) {
  std::ostringstream out;
  const Eigen::Index n = frames.empty() ? 0 : frames.front().q.size();
  out << 't';
  for (const char* prefix : {"q", "dq", "tau"}) {
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << prefix << i;
  }
  out << ",fx,fy,fz,mx,my,mz\n";
  for (const auto& f : frames) {
    out << format_double(f.t);
    for (const VecX* v : {&f.q, &f.dq, &f.tau_j}) {
      for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double((*v)[i]);
    }
    for (int i = 0; i < 3; ++i) out << ',' << format_double(f.ft_raw.force[i]);
    for (int i = 0; i < 3; ++i) out << ',' << format_double(f.ft_raw.moment[i]);
    out << '\n';
  }
  return out.str();
}

void write_frames_csv(const std::filesystem::path& path, const std::vector<SensorFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << frames_to_csv(frames);
}

std::vector<SensorFrame> parse_frames_csv(std::string_view text, std::size_t dof) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("frames CSV is empty");
  const std::size_t expected = 1 + 3 * dof + 6;
  const auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  const auto header = split(line);
  if (header.size() != expected || header.front() != "t") {
    throw FormatError("frames CSV header has " + std::to_string(header.size()) + " columns; expected " +
                      std::to_string(expected) + " for " + std::to_string(dof) + " joints");
  }
  std::vector<SensorFrame> frames;
  std::size_t line_no = 1;
  const auto n = static_cast<Eigen::Index>(dof);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != expected) {
      throw FormatError("frames CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " columns; expected " + std::to_string(expected));
    }
    std::vector<double> v(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      try {
        std::size_t used = 0;
        v[i] = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw FormatError("frames CSV line " + std::to_string(line_no) + ", column " + header[i] +
                          ": not a number ('" + cells[i] + "')");
      }
    }
    SensorFrame f;
    f.t = v[0];
    f.q = Eigen::Map<const VecX>(v.data() + 1, n);
    f.dq = Eigen::Map<const VecX>(v.data() + 1 + n, n);
    f.tau_j = Eigen::Map<const VecX>(v.data() + 1 + 2 * n, n);
    f.ft_raw.force = Eigen::Map<const Vec3>(v.data() + 1 + 3 * n);
    f.ft_raw.moment = Eigen::Map<const Vec3>(v.data() + 4 + 3 * n);
    if (!frames.empty() && !(f.t > frames.back().t)) {
      throw FormatError("frames CSV line " + std::to_string(line_no) + ": time does not increase");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<SensorFrame> read_frames_csv(const std::filesystem::path& path, std::size_t dof) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open frames file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_frames_csv(ss.str(), dof);
}

std::string estimates_to_csv(const std::vector<EstimateRow>& rows) {
  std::size_t max_k = 0;
  for (const auto& r : rows) max_k = std::max(max_k, r.estimate.contacts.size());
  std::ostringstream out;
  out << "iter,k";
  for (std::size_t c = 0; c < max_k; ++c) {
    for (const char* col : {"link", "face", "x", "y", "z", "fx", "fy", "fz"}) out << ',' << col << c;
  }
  out << ",residual\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << r.estimate.contacts.size();
    for (std::size_t c = 0; c < max_k; ++c) {
      if (c < r.estimate.contacts.size()) {
        const auto& e = r.estimate.contacts[c];
        out << ',' << e.particle.link << ',' << e.particle.face;
        for (int i = 0; i < 3; ++i) out << ',' << format_double(e.point[i], "%.9g");
        for (int i = 0; i < 3; ++i) out << ',' << format_double(e.force[i], "%.9g");
      } else {
        out << ",,,,,,,,";
      }
    }
    out << ',' << format_double(r.estimate.residual_sq, "%.9g") << '\n';
  }
  return out.str();
}

std::vector<EstimateRow> estimate_frames(const FilterModel& model, const std::vector<SensorFrame>& frames,
                                         const FilterConfig& config) {
  config.validate();
  std::vector<EstimateRow> rows;
  if (frames.empty()) return rows;
  double dt = 1e-3;
  if (frames.size() > 1) {
    dt = (frames.back().t - frames.front().t) / static_cast<double>(frames.size() - 1);
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (std::abs(frames[i].t - frames[i - 1].t - dt) > 0.01 * dt) {
        throw ValidationError("frame spacing is not uniform at row " + std::to_string(i + 1));
      }
    }
  }
  ContactParticleFilter filter(model, config);
  MeasurementPipeline pipeline(model.chain(), config.observer_gain, dt);
  rows.reserve(frames.size());
  for (const auto& frame : frames) {
    const VecX w_hat = pipeline.update(frame);
    filter.step(frame.q, w_hat);
    rows.push_back({filter.state().iteration, filter.estimate(frame.q, w_hat)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Model directory

namespace {

std::filesystem::path link_file(const std::filesystem::path& dir, std::size_t link, const char* ext) {
  return dir / ("link" + std::to_string(link) + ext);
}

}  // namespace

void save_model(const FilterModel& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < model.surfaces().size(); ++i) {
    const LinkSurface& s = model.surfaces()[i];
    if (s.face_count() == 0) continue;
    write_obj(link_file(dir, i, ".obj"), TriangleMesh{s.vertices, s.faces});
    write_neighbor_table(link_file(dir, i, ".mcpn"), model.tables()[i]);
  }
}

FilterModel load_model(ChainModel chain, const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  SurfaceSet surfaces;
  std::vector<NeighborTable> tables;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto obj = link_file(dir, i, ".obj");
    LinkSurface surface;
    surface.link_index = static_cast<int>(i);
    NeighborTable table;
    if (std::filesystem::exists(obj)) {
      const auto mask = link_file(dir, i, ".mask");
      surface = load_surface(obj, static_cast<int>(i), std::filesystem::exists(mask) ? mask : std::filesystem::path{});
      const auto mcpn = link_file(dir, i, ".mcpn");
      if (!std::filesystem::exists(mcpn)) throw InputError("missing neighbor table " + mcpn.string());
      table = read_neighbor_table(mcpn);
    }
    surfaces.push_back(std::move(surface));
    tables.push_back(std::move(table));
  }
  if (std::all_of(surfaces.begin(), surfaces.end(), [](const LinkSurface& s) { return s.face_count() == 0; })) {
    throw InputError("no link<i>.obj surfaces in " + dir.string());
  }
  return FilterModel(std::move(chain), std::move(surfaces), std::move(tables));
}

}  // namespace mcpep
