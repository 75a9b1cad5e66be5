#include "mcpep/chain_io.hpp"
#include "mcpep/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mcpep;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed for " + path.string());
}

FilterConfig config_or_default(const std::string& path) {
  return path.empty() ? FilterConfig{} : load_filter_config(path);
}

FilterModel model_for(const std::string& chain_path, const std::string& tables, std::uint32_t k) {
  ChainModel chain = load_chain(chain_path);
  if (!tables.empty()) return load_model(std::move(chain), tables);
  return make_synthetic_model(chain, k);
}

int run_preprocess(const std::string& mesh, const std::string& mask, std::uint32_t k, const std::string& out) {
  const LinkSurface surface = load_surface(mesh, 0, mask);
  if (k > surface.face_count()) {
    throw ValidationError("K = " + std::to_string(k) + " exceeds the face count " + std::to_string(surface.face_count()));
  }
  write_neighbor_table(out, build_neighbor_table(surface, k));
  const SurfaceStats st = surface_stats(surface);
  std::printf("faces %zu, area %.6g m^2, face area ratio %.3g, mean face radius %.3g cm\n", st.faces, st.total_area,
              st.max_area / st.min_area, 100.0 * st.mean_face_radius);
  return 0;
}

int run_genmesh(const std::string& chain_path, double edge, std::uint32_t k, const std::string& out) {
  const FilterModel model = make_synthetic_model(load_chain(chain_path), k, edge);
  save_model(model, out);
  for (const auto& s : model.surfaces()) {
    if (s.face_count() == 0) continue;
    const SurfaceStats st = surface_stats(s);
    std::printf("link %d: %zu faces, face area ratio %.3g\n", s.link_index, st.faces, st.max_area / st.min_area);
  }
  return 0;
}

int run_export_chain(const std::string& which, const std::string& out) {
  if (which == "arm7") {
    write_text(out, chain_to_json(seven_dof_arm()));
  } else if (which == "coaxial") {
    write_text(out, chain_to_json(coaxial_arm()));
  } else {
    throw InputError("unknown built-in chain '" + which + "' (arm7, coaxial)");
  }
  return 0;
}

int run_simulate(const std::string& chain_path, const std::string& tables, const std::string& scenario_path,
                 double mu, const std::string& out) {
  const FilterModel model = model_for(chain_path, tables, 64);
  const Scenario scenario = load_scenario(scenario_path);
  scenario.validate(model.chain(), model.surfaces(), mu);
  write_frames_csv(out, synthesize_frames(model.chain(), model.surfaces(), scenario));
  return 0;
}

int run_estimate(const std::string& chain_path, const std::string& tables, const std::string& frames_path,
                 const std::string& config_path, const std::string& out) {
  const FilterModel model = model_for(chain_path, tables, 64);
  const FilterConfig config = config_or_default(config_path);
  const auto frames = read_frames_csv(frames_path, model.chain().dof());
  const auto rows = estimate_frames(model, frames, config);
  write_text(out, estimates_to_csv(rows));
  if (!rows.empty()) {
    const auto& last = rows.back().estimate;
    std::printf("%zu frames, %zu contacts at the last frame, residual %.3g\n", rows.size(), last.contacts.size(),
                last.residual_sq);
    for (const auto& c : last.contacts) {
      std::printf("  link %d face %d  point (%.4f, %.4f, %.4f) m  force (%.3f, %.3f, %.3f) N\n", c.particle.link + 1,
                  c.particle.face, c.point.x(), c.point.y(), c.point.z(), c.force.x(), c.force.y(), c.force.z());
    }
  }
  return 0;
}

struct BenchArgs {
  std::string chain, tables, config, out, pairs_out;
  int contacts = 1;
  int trials = 100;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  double settle = ScenarioOptions{}.settle;
  double gap = ScenarioOptions{}.onset_gap;
};

int run_bench(const BenchArgs& a) {
  const FilterModel model = model_for(a.chain, a.tables, 64);
  BenchmarkOptions opt;
  opt.contacts = a.contacts;
  opt.trials = a.trials;
  opt.seed = a.seed;
  opt.threads = a.threads;
  opt.filter = config_or_default(a.config);
  opt.scenario.settle = a.settle;
  opt.scenario.onset_gap = a.gap;
  const BenchmarkResult result = run_benchmark(model, opt);
  std::cout << benchmark_report(result);
  if (!a.out.empty()) write_text(a.out, benchmark_csv(result));
  if (!a.pairs_out.empty()) {
    if (!result.pairs) throw InputError("--pairs-out needs --contacts 2");
    write_text(a.pairs_out, pair_matrix_csv(*result.pairs));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-contact localization with the MCP-EP particle filter"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Errors only");

  std::string mesh, mask, out, chain, tables, scenario, frames, config, builtin = "arm7";
  std::uint32_t k = 64;
  double edge = kDefaultMeshEdge;
  double mu = FilterConfig{}.mu;
  BenchArgs bench;

  auto* pre = app.add_subcommand("preprocess", "Build a neighbor table for one link mesh");
  pre->add_option("--mesh", mesh, "Triangle mesh (OBJ)")->required()->check(CLI::ExistingFile);
  pre->add_option("--mask", mask, "Excluded face indices")->check(CLI::ExistingFile);
  pre->add_option("--k", k, "Neighbors per face")->capture_default_str()->check(CLI::PositiveNumber);
  pre->add_option("--out", out, "Output table (MCPN)")->required();

  auto* gen = app.add_subcommand("genmesh", "Write capsule meshes and neighbor tables for every link of a chain");
  gen->add_option("--chain", chain, "Chain file (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--edge", edge, "Target edge length (m)")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--k", k, "Neighbors per face")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--out", out, "Output directory")->required();

  auto* exp = app.add_subcommand("chain", "Write a built-in chain description");
  exp->add_option("--builtin", builtin, "arm7 or coaxial")->capture_default_str();
  exp->add_option("--out", out, "Output file (JSON)")->required();

  auto* sim = app.add_subcommand("simulate", "Synthesize sensor frames for a scenario");
  sim->add_option("--chain", chain, "Chain file (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--scenario", scenario, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--tables", tables, "Model directory; capsule meshes of the chain when omitted")
      ->check(CLI::ExistingDirectory);
  sim->add_option("--mu", mu, "Friction coefficient for the cone check")->capture_default_str();
  sim->add_option("--out", out, "Output frames (CSV)")->required();

  auto* est = app.add_subcommand("estimate", "Run the filter over recorded frames");
  est->add_option("--chain", chain, "Chain file (JSON)")->required()->check(CLI::ExistingFile);
  est->add_option("--tables", tables, "Model directory; capsule meshes of the chain when omitted")
      ->check(CLI::ExistingDirectory);
  est->add_option("--frames", frames, "Sensor frames (CSV)")->required()->check(CLI::ExistingFile);
  est->add_option("--config", config, "Filter configuration (JSON)")->check(CLI::ExistingFile);
  est->add_option("--out", out, "Per-iteration estimates (CSV)")->required();

  auto* ben = app.add_subcommand("bench", "Randomized benchmark");
  ben->add_option("--chain", bench.chain, "Chain file (JSON)")->required()->check(CLI::ExistingFile);
  ben->add_option("--tables", bench.tables, "Model directory; capsule meshes of the chain when omitted")
      ->check(CLI::ExistingDirectory);
  ben->add_option("--contacts", bench.contacts, "Simultaneous contacts")->required()->check(CLI::Range(0, 7));
  ben->add_option("--trials", bench.trials, "Number of trials")->capture_default_str()->check(CLI::PositiveNumber);
  ben->add_option("--seed", bench.seed, "Master seed")->capture_default_str();
  ben->add_option("--config", bench.config, "Filter configuration (JSON)")->check(CLI::ExistingFile);
  ben->add_option("--threads", bench.threads, "Worker threads (0: all cores)")->capture_default_str();
  ben->add_option("--settle", bench.settle, "Seconds simulated after the last onset")->capture_default_str();
  ben->add_option("--gap", bench.gap, "Onset gap between contacts (s)")->capture_default_str();
  ben->add_option("--out", bench.out, "Summary (CSV)");
  ben->add_option("--pairs-out", bench.pairs_out, "Dual-contact link-pair matrix (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  set_log_level(verbose ? LogLevel::kDebug : quiet ? LogLevel::kError : LogLevel::kWarning);

  try {
    if (*pre) return run_preprocess(mesh, mask, k, out);
    if (*gen) return run_genmesh(chain, edge, k, out);
    if (*exp) return run_export_chain(builtin, out);
    if (*sim) return run_simulate(chain, tables, scenario, mu, out);
    if (*est) return run_estimate(chain, tables, frames, config, out);
    if (*ben) return run_bench(bench);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
