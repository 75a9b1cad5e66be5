#include "mcpep/filter.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mcpep {

// ---------------------------------------------------------------------------
// Configuration

void FilterConfig::validate() const {
  if (particles_per_set < 2) throw ValidationError("particles_per_set must be at least 2");
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (!(epsilon_bar > 0.0)) throw ValidationError("epsilon_bar must be positive");
  if (!(step_p > 0.0 && step_p < 1.0)) throw ValidationError("step_p must lie in (0, 1)");
  if (effective_explore_cap() < 0 || effective_explore_cap() >= particles_per_set) {
    throw ValidationError("explore_cap must lie in [0, particles_per_set)");
  }
  if (!(mu > 0.0)) throw ValidationError("mu must be positive");
  if (min_set_age < 0) throw ValidationError("min_set_age must be nonnegative");
  if (search_timeout < 0) throw ValidationError("search_timeout must be nonnegative");
  if (max_sets < 0) throw ValidationError("max_sets must be nonnegative");
  if (!(observer_gain > 0.0)) throw ValidationError("observer_gain must be positive");
}

FilterConfig parse_filter_config(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("filter config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("filter config must be a JSON object");
  FilterConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    auto number = [&]() {
      if (!v.is_number()) throw FormatError("filter config '" + key + "' must be numeric");
      return v.get<double>();
    };
    auto integer = [&]() {
      if (!v.is_number_integer()) throw FormatError("filter config '" + key + "' must be an integer");
      return v.get<long long>();
    };
    if (key == "particles_per_set") c.particles_per_set = static_cast<int>(integer());
    else if (key == "alpha") c.alpha = number();
    else if (key == "epsilon_bar") c.epsilon_bar = number();
    else if (key == "step_p") c.step_p = number();
    else if (key == "explore_cap") c.explore_cap = static_cast<int>(integer());
    else if (key == "mu") c.mu = number();
    else if (key == "min_set_age") c.min_set_age = static_cast<int>(integer());
    else if (key == "search_timeout") c.search_timeout = static_cast<int>(integer());
    else if (key == "max_sets") c.max_sets = static_cast<int>(integer());
    else if (key == "observer_gain") c.observer_gain = number();
    else if (key == "seed") {
      if (!v.is_number_unsigned()) throw FormatError("filter config 'seed' must be a nonnegative integer");
      c.seed = v.get<std::uint64_t>();
    } else {
      throw FormatError("unknown key '" + key + "' in filter config");
    }
  }
  c.validate();
  return c;
}

FilterConfig load_filter_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open filter config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_filter_config(ss.str());
}

std::string filter_config_to_json(const FilterConfig& c) {
  nlohmann::ordered_json j;
  j["particles_per_set"] = c.particles_per_set;
  j["alpha"] = c.alpha;
  j["epsilon_bar"] = c.epsilon_bar;
  j["step_p"] = c.step_p;
  j["explore_cap"] = c.explore_cap;
  j["mu"] = c.mu;
  j["min_set_age"] = c.min_set_age;
  j["search_timeout"] = c.search_timeout;
  j["max_sets"] = c.max_sets;
  j["observer_gain"] = c.observer_gain;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// State and model

double ParticleSet::best_raw_weight(double alpha) const { return std::exp(-alpha * best_residual); }

bool FilterState::operator==(const FilterState& other) const {
  if (iteration != other.iteration || sets.size() != other.sets.size()) return false;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& a = sets[i];
    const auto& b = other.sets[i];
    if (a.basic != b.basic || a.explore != b.explore || a.basic_weights != b.basic_weights ||
        a.explore_weights != b.explore_weights || a.created_at != b.created_at ||
        a.settled != b.settled || a.best != b.best) {
      return false;
    }
  }
  return true;
}

FilterModel::FilterModel(ChainModel chain, SurfaceSet surfaces, std::vector<NeighborTable> tables)
    : chain_(std::move(chain)), surfaces_(std::move(surfaces)), tables_(std::move(tables)) {
  chain_.validate();
  if (surfaces_.size() > chain_.dof()) throw ValidationError("more surfaces than links");
  if (tables_.size() != surfaces_.size()) throw ValidationError("one neighbor table per surface is required");
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    if (surfaces_[i].face_count() == 0) continue;
    if (tables_[i].face_count() != surfaces_[i].face_count()) {
      throw ValidationError("neighbor table " + std::to_string(i) + " has " +
                            std::to_string(tables_[i].face_count()) + " rows for " +
                            std::to_string(surfaces_[i].face_count()) + " faces");
    }
    if (tables_[i].k() == 0) throw ValidationError("neighbor table " + std::to_string(i) + " is empty");
  }
  sampler_ = SurfaceSampler(surfaces_);
}

int FilterModel::links_with_surface() const {
  int n = 0;
  for (const auto& s : surfaces_) n += s.face_count() > 0 ? 1 : 0;
  return n;
}

FilterModel make_synthetic_model(const ChainModel& chain, std::uint32_t k, double edge) {
  SurfaceSet surfaces = synthesize_surfaces(chain, edge);
  std::vector<NeighborTable> tables;
  for (const auto& s : surfaces) {
    tables.push_back(s.face_count() > 0 ? build_neighbor_table(s, k) : NeighborTable());
  }
  return FilterModel(chain, std::move(surfaces), std::move(tables));
}

FilterState make_filter_state(const FilterConfig& config) {
  config.validate();
  FilterState s;
  s.config = config;
  return s;
}

ParticleSet make_particle_set(const FilterModel& model, int m, long created_at, Rng& rng) {
  ParticleSet set;
  set.created_at = created_at;
  set.basic.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) set.basic.push_back(model.sampler().sample(rng));
  set.basic_weights.assign(static_cast<std::size_t>(m), 1.0 / m);
  return set;
}

// ---------------------------------------------------------------------------
// Residual evaluation

ResidualEvaluator::ResidualEvaluator(const FilterModel& model, const VecX& q, const VecX& w_hat, double mu)
    : model_(model), frames_(forward_kinematics(model.chain(), q)), w_hat_(w_hat), mu_(mu) {
  const auto n = static_cast<Eigen::Index>(model.chain().dof());
  if (w_hat.size() != n + 6) {
    throw InputError("measurement has " + std::to_string(w_hat.size()) + " entries, expected " +
                     std::to_string(n + 6));
  }
  if (!w_hat.allFinite()) throw InputError("measurement contains non-finite values");
}

ContactPoint ResidualEvaluator::contact(const Particle& p) const {
  const SurfacePoint sp = particle_to_world(frames_, model_.surfaces(), p);
  return {p.link, sp.point, sp.normal};
}

void ResidualEvaluator::reset(std::size_t slots) {
  qt_.resize(static_cast<Eigen::Index>(model_.chain().dof() + 6), static_cast<Eigen::Index>(4 * slots));
  bases_.assign(slots, FrictionConeBasis{});
}

void ResidualEvaluator::place(std::size_t slot, const Particle& p) {
  const ContactPoint c = contact(p);
  bases_[slot] = cone_basis(c.normal, mu_);
  fill_contact_columns(model_.chain(), frames_, c, bases_[slot], qt_, static_cast<Eigen::Index>(4 * slot));
}

std::optional<double> ResidualEvaluator::residual() const {
  if (qt_.cols() == 0) return w_hat_.squaredNorm();
  try {
    return nnls(qt_, w_hat_).objective;
  } catch (const SolverError&) {
    return std::nullopt;
  }
}

ForceSolution ResidualEvaluator::solve() const {
  ForceSolution sol;
  if (qt_.cols() == 0) {
    sol.residual_sq = w_hat_.squaredNorm();
    return sol;
  }
  try {
    const NnlsResult r = nnls(qt_, w_hat_);
    sol.weights = r.x;
    sol.residual_sq = r.objective;
    sol.iterations = r.iterations;
  } catch (const SolverError& e) {
    log(LogLevel::kWarning, std::string(e.what()) + "; reporting the best iterate");
    sol.weights = e.best_iterate();
    sol.residual_sq = (qt_ * sol.weights - w_hat_).squaredNorm();
  }
  for (std::size_t i = 0; i < bases_.size(); ++i) {
    sol.forces.push_back(bases_[i].matrix() * sol.weights.segment<4>(static_cast<Eigen::Index>(4 * i)));
  }
  return sol;
}

std::optional<double> ResidualEvaluator::residual_of(std::span<const Particle> hypothesis) {
  reset(hypothesis.size());
  for (std::size_t i = 0; i < hypothesis.size(); ++i) place(i, hypothesis[i]);
  return residual();
}

// ---------------------------------------------------------------------------
// Filter steps

namespace {

std::size_t draw_weighted(const std::vector<double>& a, const std::vector<double>& b, Rng& rng) {
  double total = 0.0;
  for (double w : a) total += w;
  for (double w : b) total += w;
  const std::size_t count = a.size() + b.size();
  if (!(total > 0.0)) return std::uniform_int_distribution<std::size_t>(0, count - 1)(rng);
  double x = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < count; ++i) {
    x -= i < a.size() ? a[i] : b[i - a.size()];
    if (x < 0.0) return i;
  }
  return count - 1;
}

const Particle& member(const ParticleSet& s, std::size_t i) {
  return i < s.basic.size() ? s.basic[i] : s.explore[i - s.basic.size()];
}

void evaluate_set(ParticleSet& set, std::size_t slot, const std::vector<Particle>& partners,
                  ResidualEvaluator& eval, double alpha, long& failures) {
  const std::size_t count = set.size();
  std::vector<double> residuals(count, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < count; ++k) {
    const Particle& p = member(set, k);
    bool clash = false;
    for (std::size_t j = 0; j < partners.size(); ++j) {
      if (j != slot && partners[j].link == p.link) clash = true;
    }
    if (clash) continue;
    eval.place(slot, p);
    if (auto r = eval.residual()) {
      residuals[k] = *r;
    } else {
      ++failures;
      log(LogLevel::kDebug, "force QP did not converge; particle weight set to 0");
    }
  }

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (std::size_t k = 0; k < count; ++k) {
    if (residuals[k] < best || (residuals[k] == best && member(set, k) < member(set, best_index))) {
      best = residuals[k];
      best_index = k;
    }
  }

  std::vector<double> w(count, 0.0);
  if (std::isfinite(best)) {
    // Shifted by the best residual so that the largest weight is exp(0).
    for (std::size_t k = 0; k < count; ++k) {
      if (std::isfinite(residuals[k])) w[k] = std::exp(-alpha * (residuals[k] - best));
    }
  } else {
    log(LogLevel::kWarning, "every particle of a set lost its weight; using uniform weights");
    std::fill(w.begin(), w.end(), 1.0);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;

  set.basic_weights.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(set.basic.size()));
  set.explore_weights.assign(w.begin() + static_cast<std::ptrdiff_t>(set.basic.size()), w.end());
  set.evaluated = true;
  set.best = member(set, best_index);
  set.best_residual = best;
  set.best_weight = w[best_index];
}

Particle relocate_to_adjacent_link(const Particle& p, const FilterModel& model, Rng& rng) {
  std::vector<int> options;
  for (int link : {p.link - 1, p.link + 1}) {
    if (model.sampler().has_faces(link)) options.push_back(link);
  }
  if (options.empty()) return model.sampler().sample_on_link(p.link, rng);
  const int link = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  return model.sampler().sample_on_link(link, rng);
}

int max_sets_of(const FilterState& state, const FilterModel& model) {
  return state.config.max_sets > 0 ? state.config.max_sets : model.links_with_surface();
}

}  // namespace

void motion_model(FilterState& state, const FilterModel& model, Rng& rng) {
  std::geometric_distribution<std::uint32_t> step(state.config.step_p);
  auto move = [&](Particle& p) {
    const NeighborTable& table = model.tables().at(static_cast<std::size_t>(p.link));
    std::uint32_t s = step(rng);
    while (s >= table.k()) s = step(rng);
    p.face = static_cast<std::int32_t>(table.at(static_cast<std::uint32_t>(p.face), s).face);
  };
  for (auto& set : state.sets) {
    for (auto& p : set.basic) move(p);
    for (auto& p : set.explore) move(p);
  }
}

void measurement_update(FilterState& state, const FilterModel& model, const VecX& q, const VecX& w_hat,
                        Rng& rng) {
  if (state.sets.empty()) return;
  ResidualEvaluator eval(model, q, w_hat, state.config.mu);
  const std::size_t k = state.sets.size();
  std::vector<Particle> partners(k);
  // Newest set first: a freshly scattered set is scored against the settled
  // ones, and older sets then draw partners from its updated weights.
  for (std::size_t n = 0; n < k; ++n) {
    const std::size_t i = k - 1 - n;
    eval.reset(k);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const ParticleSet& other = state.sets[j];
      partners[j] = member(other, draw_weighted(other.basic_weights, other.explore_weights, rng));
      eval.place(j, partners[j]);
    }
    evaluate_set(state.sets[i], i, partners, eval, state.config.alpha, state.qp_failures);
  }
}

void update_exploration_particles(FilterState& state, const FilterModel& model, Rng& rng) {
  const auto cap = static_cast<std::size_t>(state.config.effective_explore_cap());
  for (auto& set : state.sets) {
    if (!set.evaluated) continue;
    if (set.best_residual <= state.config.epsilon_bar) set.settled = true;
    if (set.best_residual > state.config.epsilon_bar) {
      if (cap == 0 || set.basic.size() <= 1) continue;
      if (set.explore.size() >= cap) {
        // The oldest exploration particle rejoins the basic particles.
        set.basic.push_back(set.explore.front());
        set.basic_weights.push_back(set.explore_weights.front());
        set.explore.erase(set.explore.begin());
        set.explore_weights.erase(set.explore_weights.begin());
      }
      const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, set.basic.size() - 1)(rng);
      const Particle moved = relocate_to_adjacent_link(set.basic[idx], model, rng);
      set.basic.erase(set.basic.begin() + static_cast<std::ptrdiff_t>(idx));
      set.basic_weights.erase(set.basic_weights.begin() + static_cast<std::ptrdiff_t>(idx));
      set.explore.push_back(moved);
      set.explore_weights.push_back(0.0);
    } else if (!set.explore.empty()) {
      set.basic.insert(set.basic.end(), set.explore.begin(), set.explore.end());
      set.basic_weights.insert(set.basic_weights.end(), set.explore_weights.begin(), set.explore_weights.end());
      set.explore.clear();
      set.explore_weights.clear();
    }
  }
}

void resample_with_ep(FilterState& state, Rng& rng) {
  for (auto& set : state.sets) {
    const std::size_t nb = set.basic.size();
    const std::size_t count = set.size();
    if (nb == 0) continue;
    std::vector<double> cumulative(count);
    double total = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      total += k < nb ? set.basic_weights[k] : set.explore_weights[k - nb];
      cumulative[k] = total;
    }
    if (!(total > 0.0)) {
      log(LogLevel::kWarning, "resampling a set with zero total weight; using uniform weights");
      for (std::size_t k = 0; k < count; ++k) cumulative[k] = static_cast<double>(k + 1);
      total = static_cast<double>(count);
    }
    const double u0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<Particle> next;
    next.reserve(nb);
    std::size_t k = 0;
    for (std::size_t i = 0; i < nb; ++i) {
      const double target = (u0 + static_cast<double>(i)) / static_cast<double>(nb) * total;
      while (k + 1 < count && cumulative[k] <= target) ++k;
      next.push_back(member(set, k));
    }
    set.basic = std::move(next);
    const double uniform = 1.0 / static_cast<double>(count);
    set.basic_weights.assign(nb, uniform);
    set.explore_weights.assign(set.explore.size(), uniform);
  }
}

double explained_residual(const FilterModel& model, const VecX& q, const VecX& w_hat, double mu,
                          std::span<const ParticleSet* const> sets) {
  ResidualEvaluator eval(model, q, w_hat, mu);
  std::vector<Particle> best;
  for (const ParticleSet* s : sets) {
    if (s->evaluated) best.push_back(s->best);
  }
  const auto r = eval.residual_of(best);
  return r ? *r : std::numeric_limits<double>::infinity();
}

void manage_particle_sets(FilterState& state, const FilterModel& model, const VecX& q, const VecX& w_hat,
                          Rng& rng) {
  std::vector<const ParticleSet*> all;
  for (const auto& s : state.sets) all.push_back(&s);
  const double eps = explained_residual(model, q, w_hat, state.config.mu, all);
  if (eps > state.config.epsilon_bar) {
    const bool room = static_cast<int>(state.sets.size()) < max_sets_of(state, model);
    bool ready = true;
    if (!state.sets.empty()) {
      const ParticleSet& newest = state.sets.back();
      const long age = state.iteration - newest.created_at;
      ready = age >= state.config.min_set_age && (newest.settled || age >= state.config.search_timeout);
    }
    if (room && ready) {
      state.sets.push_back(make_particle_set(model, state.config.particles_per_set, state.iteration, rng));
    }
    return;
  }
  for (std::size_t i = 0; i < state.sets.size(); ++i) {
    std::vector<const ParticleSet*> others;
    for (std::size_t j = 0; j < state.sets.size(); ++j) {
      if (j != i) others.push_back(&state.sets[j]);
    }
    if (explained_residual(model, q, w_hat, state.config.mu, others) < state.config.epsilon_bar) {
      state.sets.erase(state.sets.begin() + static_cast<std::ptrdiff_t>(i));
      return;
    }
  }
}

void mcp_ep_step(FilterState& state, const FilterModel& model, const VecX& q, const VecX& w_hat, Rng& rng) {
  ++state.iteration;
  motion_model(state, model, rng);
  measurement_update(state, model, q, w_hat, rng);
  update_exploration_particles(state, model, rng);
  resample_with_ep(state, rng);
  manage_particle_sets(state, model, q, w_hat, rng);
}

ContactEstimate extract_estimate(const FilterState& state, const FilterModel& model, const VecX& q,
                                 const VecX& w_hat) {
  ResidualEvaluator eval(model, q, w_hat, state.config.mu);
  std::vector<const ParticleSet*> sets;
  for (const auto& s : state.sets) {
    if (s.evaluated) sets.push_back(&s);
  }
  eval.reset(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) eval.place(i, sets[i]->best);
  const ForceSolution sol = eval.solve();
  ContactEstimate est;
  est.residual_sq = sol.residual_sq;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const ContactPoint c = eval.contact(sets[i]->best);
    est.contacts.push_back({sets[i]->best, c.point, c.normal, sol.forces[i], sets[i]->best_weight});
  }
  return est;
}

ContactParticleFilter::ContactParticleFilter(const FilterModel& model, FilterConfig config)
    : model_(model), state_(make_filter_state(config)), rng_(config.seed) {}

void ContactParticleFilter::step(const VecX& q, const VecX& w_hat) { mcp_ep_step(state_, model_, q, w_hat, rng_); }

ContactEstimate ContactParticleFilter::estimate(const VecX& q, const VecX& w_hat) const {
  return extract_estimate(state_, model_, q, w_hat);
}

}  // namespace mcpep
