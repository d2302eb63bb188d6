#include "fluidrisk/bridge.hpp"
#include "fluidrisk/config.hpp"
#include "fluidrisk/csv.hpp"
#include "fluidrisk/descriptors.hpp"
#include "fluidrisk/errors.hpp"
#include "fluidrisk/kolmogorov.hpp"
#include "fluidrisk/oracle.hpp"
#include "fluidrisk/parallel.hpp"
#include "fluidrisk/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fr = fluidrisk;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

struct GridOpts {
  double du = 0, dl = 0;
  int m = 0, q = 0, refine = 0;

  void add(CLI::App* app) {
    app->add_option("--du", du, "duration spacing (with --m)");
    app->add_option("--m", m, "number of duration cells");
    app->add_option("--dl", dl, "level spacing (with --q)");
    app->add_option("--q", q, "number of level cells (even)");
    app->add_option("--refine", refine, "halve both default spacings this many times")
        ->check(CLI::NonNegativeNumber);
  }
  bool custom() const { return du > 0 || dl > 0 || m > 0 || q > 0; }
  fr::LevelDurationGrid build(const fr::FluidModel& model) const {
    fr::LevelDurationGrid g = fr::LevelDurationGrid::defaults(model);
    if (custom()) {
      if (!(du > 0) || m < 1 || !(dl > 0) || q < 2)
        throw fr::DomainError("--du, --m, --dl and --q must be given together");
      g = fr::LevelDurationGrid(du, m, dl, q);
    }
    for (int k = 0; k < refine; ++k) g = g.refined();
    return g;
  }
  json to_json(const fr::LevelDurationGrid& g) const {
    return {{"du", g.du()}, {"m", g.m()}, {"dl", g.dl()}, {"q", g.q()}};
  }
};

struct Common {
  std::string config;
  std::string output;
  std::string config_text;
  fr::FluidModel model;

  void add(CLI::App* app) {
    app->add_option("config", config, "model configuration (JSON)")->required();
    app->add_option("-o,--output", output, "CSV output path (default: <command>.csv)");
  }
  void load() {
    std::ifstream in(config, std::ios::binary);
    if (!in) throw fr::ConfigError("", 0, "cannot open " + config);
    std::ostringstream ss;
    ss << in.rdbuf();
    config_text = ss.str();
    model = fr::parse_model(config_text);
  }
  std::string stem() const {
    std::filesystem::path p(output);
    return (p.parent_path() / p.stem()).string();
  }
};

struct Manifest {
  std::string command;
  json params = json::object();
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::time_t started = std::time(nullptr);

  void write(const Common& c) const {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(fr::fnv1a64(c.config_text)));
    char when[32];
    std::strftime(when, sizeof when, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&started));
    json j;
    j["command"] = command;
    j["config"] = c.config;
    j["config_hash"] = std::string("fnv1a64:") + hash;
    j["params"] = params;
    j["seed"] = has_seed ? json(seed) : json(nullptr);
    j["version"] = FLUIDRISK_VERSION;
    j["threads"] = fr::thread_count();
    j["started_utc"] = when;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    j["outputs"] = outputs;
    std::ofstream(c.stem() + ".manifest.json") << j.dump(2) << '\n';
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

json matrix_json(const fr::Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

// rows: full state indices of the matrix rows
void write_descriptor(const Common& c, Manifest& man, const fr::DescriptorResult& r,
                      const std::vector<int>& rows) {
  const auto& minus = c.model.space.minus();
  {
    auto os = open_out(c.output);
    fr::CsvWriter w(os);
    w.header({"i", "j", "value", "n_used", "tail_estimate"});
    for (int a = 0; a < r.matrix.rows(); ++a)
      for (int b = 0; b < r.matrix.cols(); ++b)
        w.field(rows[a]).field(minus[b]).field(r.matrix(a, b)).field(r.n_used)
            .field(r.tail_estimate).end_row();
  }
  json s;
  s["command"] = man.command;
  s["params"] = man.params;
  s["rows"] = rows;
  s["cols"] = minus;
  s["matrix"] = matrix_json(r.matrix);
  s["n_used"] = r.n_used;
  s["tail_estimate"] = r.tail_estimate;
  s["converged"] = r.converged;
  s["increments"] = r.increments;
  const std::string summary = c.stem() + ".summary.json";
  std::ofstream(summary) << s.dump(2) << '\n';
  man.outputs = {c.output, summary};
}

void write_mc(const Common& c, Manifest& man, const fr::McEstimate& e, const std::vector<int>& rows) {
  const auto& minus = c.model.space.minus();
  auto os = open_out(c.output);
  fr::CsvWriter w(os);
  w.header({"i", "j", "value", "std_error", "n_paths", "seed", "censored_fraction"});
  for (int a = 0; a < e.value.rows(); ++a)
    for (int b = 0; b < e.value.cols(); ++b)
      w.field(rows[a]).field(minus[b]).field(e.value(a, b)).field(e.std_error(a, b))
          .field(static_cast<long long>(e.n_paths)).field(std::to_string(e.seed))
          .field(e.censored_fraction).end_row();
  man.outputs = {c.output};
  if (e.censored_fraction >= 1.0) std::cerr << "warning: every path was censored\n";
}

fr::SeriesMode parse_mode(const std::string& s) {
  return s == "order" ? fr::SeriesMode::by_order : fr::SeriesMode::resummed;
}

void apply_threads(int threads) {
  if (threads > 0) {
    fr::set_threads(threads);
    return;
  }
  if (const char* env = std::getenv("FLUIDRISK_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) fr::set_threads(static_cast<int>(n));
    else std::cerr << "warning: ignoring FLUIDRISK_THREADS=" << env << '\n';
  }
}

int first_plus(const fr::FluidModel& m) { return m.space.plus().front(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Duration-dependent Markovian arrival processes and fluid risk descriptors"};
  app.set_version_flag("--version", FLUIDRISK_VERSION);
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: FLUIDRISK_THREADS, else all)")
      ->check(CLI::PositiveNumber);

  Common c;
  Manifest man;
  GridOpts grid;
  double theta1 = 0, theta2 = 0, z = 0;
  std::string mode = "resummed";
  int n_max = 8, max_iterations = 1000, oversample = 4, anderson = 5;
  double eps_tail = 1e-5;
  std::uint64_t seed = 1;
  long n_paths = 100000;
  int max_epochs = 10000;

  auto add_theta = [&](CLI::App* s) {
    s->add_option("--theta1", theta1, "dividend transform argument")->check(CLI::NonNegativeNumber);
    s->add_option("--theta2", theta2, "cost transform argument")->check(CLI::NonNegativeNumber);
  };
  auto add_series = [&](CLI::App* s) {
    s->add_option("--mode", mode, "series evaluation: order (partial sums) or resummed")
        ->check(CLI::IsMember({"order", "resummed"}))
        ->capture_default_str();
    s->add_option("--n-max", n_max, "highest order in order mode")->capture_default_str();
    s->add_option("--max-iterations", max_iterations, "iteration cap in resummed mode")
        ->capture_default_str();
    s->add_option("--eps-tail", eps_tail, "stop once the sup-norm increment is below this")
        ->capture_default_str();
    s->add_option("--oversample", oversample, "micro-cells per cell in the 2-bridge deposit")
        ->capture_default_str();
    s->add_option("--anderson", anderson, "Anderson history in resummed mode (0: plain iteration)")
        ->check(CLI::Range(0, 50))
        ->capture_default_str();
  };
  auto add_mc = [&](CLI::App* s) {
    s->add_option("--n-paths", n_paths, "paths per start state")->check(CLI::Range(100L, 1L << 40))
        ->capture_default_str();
    s->add_option("--seed", seed, "random seed")->capture_default_str();
  };

  // validate
  auto* validate = app.add_subcommand("validate", "check model invariants");
  c.add(validate);

  // simulate
  double horizon = 10;
  int sim_paths = 1, start_state = -1;
  auto* simulate = app.add_subcommand("simulate", "simulate paths on the Poisson grid");
  c.add(simulate);
  simulate->add_option("--horizon", horizon, "time horizon")->capture_default_str();
  simulate->add_option("--z", z, "initial duration")->capture_default_str();
  simulate->add_option("--paths", sim_paths, "number of paths")->capture_default_str();
  simulate->add_option("--state", start_state, "initial state (default: draw from alpha)");
  simulate->add_option("--seed", seed, "random seed")->capture_default_str();

  // gmatrix
  double s_from = 0, step = 1e-2;
  std::vector<double> t_points{1.0};
  auto* gmatrix = app.add_subcommand("gmatrix", "survival matrices G(s, t)");
  c.add(gmatrix);
  gmatrix->add_option("--s", s_from, "interval start")->capture_default_str();
  gmatrix->add_option("--t", t_points, "interval ends")->delimiter(',');
  gmatrix->add_option("--step", step, "RK4 step")->capture_default_str();

  // density
  std::vector<double> y_points{1.0};
  int arrival = 1;
  bool joint = false;
  auto* density = app.add_subcommand("density", "interarrival densities");
  c.add(density);
  density->add_option("--y", y_points, "evaluation points (marginal) or y_1..y_n (joint)")
      ->delimiter(',');
  density->add_option("--n", arrival, "arrival index of the marginal S_n - S_{n-1}")
      ->capture_default_str();
  density->add_flag("--joint", joint, "joint density of the first n interarrival times");
  density->add_option("--step", step, "RK4 step")->capture_default_str();

  // bridge
  std::string dump;
  auto* bridge = app.add_subcommand("bridge", "n-bridge tensors and their integrated masses");
  c.add(bridge);
  add_theta(bridge);
  grid.add(bridge);
  bridge->add_option("--z", z, "initial duration (grid node)")->capture_default_str();
  bridge->add_option("--n-max", n_max, "highest order")->capture_default_str();
  bridge->add_option("--oversample", oversample, "micro-cells per cell")->capture_default_str();
  bridge->add_option("--dump", dump, "binary tensor dump path");

  // first-return
  auto* first = app.add_subcommand("first-return", "first-return descriptor matrix");
  c.add(first);
  add_theta(first);
  add_series(first);
  grid.add(first);
  first->add_option("--z", z, "initial duration (grid node)")->capture_default_str();

  // finite-time
  double t_final = 5;
  int m_max = 40;
  double eps = 1e-5;
  auto* finite = app.add_subcommand("finite-time", "finite-time return matrix (D = 0 models)");
  c.add(finite);
  finite->add_option("--t", t_final, "time horizon")->capture_default_str();
  finite->add_option("--z", z, "initial duration")->capture_default_str();
  finite->add_option("--m-max", m_max, "order cap")->capture_default_str();
  finite->add_option("--eps", eps, "target for the calendar-time tail bound")->capture_default_str();
  grid.add(finite);

  // ruin
  double u_level = 1;
  int n_stages = 4, i0 = -1;
  auto* ruin = app.add_subcommand("ruin", "Erlangized ruin descriptor");
  c.add(ruin);
  ruin->add_option("--u", u_level, "initial level")->capture_default_str();
  ruin->add_option("--n-stages", n_stages, "Erlang stages")->capture_default_str();
  ruin->add_option("--i0", i0, "start state in S+ (default: first S+ state)");
  add_theta(ruin);
  add_series(ruin);
  grid.add(ruin);

  // mc
  auto* mc = app.add_subcommand("mc", "Monte Carlo estimates");
  mc->require_subcommand(1);
  auto* mc_first = mc->add_subcommand("first-return", "weighted first-return frequencies");
  c.add(mc_first);
  add_theta(mc_first);
  add_mc(mc_first);
  mc_first->add_option("--z", z, "initial duration")->capture_default_str();
  mc_first->add_option("--max-epochs", max_epochs, "epoch cap (censoring)")->capture_default_str();
  auto* mc_ruin = mc->add_subcommand("ruin", "ruin frequencies from level u");
  c.add(mc_ruin);
  add_mc(mc_ruin);
  mc_ruin->add_option("--u", u_level, "initial level")->capture_default_str();
  mc_ruin->add_option("--z", z, "initial duration")->capture_default_str();
  mc_ruin->add_option("--max-epochs", max_epochs, "epoch cap (censoring)")->capture_default_str();
  auto* mc_finite = mc->add_subcommand("finite-time", "return frequencies by time t");
  c.add(mc_finite);
  add_mc(mc_finite);
  mc_finite->add_option("--t", t_final, "time horizon")->capture_default_str();
  mc_finite->add_option("--z", z, "initial duration")->capture_default_str();
  int hist_n = 2, s_bins = 16, l_bins = 16;
  auto* mc_hist = mc->add_subcommand("bridge-histogram", "binned n-bridge endpoints");
  c.add(mc_hist);
  add_theta(mc_hist);
  add_mc(mc_hist);
  grid.add(mc_hist);
  mc_hist->add_option("--n", hist_n, "bridge order")->capture_default_str();
  mc_hist->add_option("--z", z, "initial duration")->capture_default_str();
  mc_hist->add_option("--s-bins", s_bins, "duration bins over [0, U_max]")->capture_default_str();
  mc_hist->add_option("--l-bins", l_bins, "level bins over [-L_max, L_max]")->capture_default_str();

  // convergence-study
  std::string target = "first-return";
  std::vector<int> stage_list{1, 4, 16};
  int levels = 0;
  auto* study = app.add_subcommand("convergence-study",
                                   "analytic descriptors against Monte Carlo bands");
  c.add(study);
  study->add_option("--target", target, "first-return, ruin or finite-time")
      ->check(CLI::IsMember({"first-return", "ruin", "finite-time"}))
      ->capture_default_str();
  study->add_option("--levels", levels, "grid halvings to run after the base grid")
      ->capture_default_str();
  study->add_option("--n-stages", stage_list, "Erlang stage counts (ruin)")->delimiter(',');
  study->add_option("--i0", i0, "start state in S+ (ruin)");
  study->add_option("--u", u_level, "initial level (ruin)")->capture_default_str();
  study->add_option("--t", t_final, "time horizon (finite-time)")->capture_default_str();
  study->add_option("--z", z, "initial duration")->capture_default_str();
  study->add_option("--max-epochs", max_epochs, "Monte Carlo epoch cap")->capture_default_str();
  add_theta(study);
  add_series(study);
  add_mc(study);
  grid.add(study);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }
  apply_threads(threads);

  CLI::App* sub = app.get_subcommands().front();
  man.command = sub->get_name();
  if (sub == mc) man.command += " " + mc->get_subcommands().front()->get_name();
  if (c.output.empty()) {
    c.output = man.command + ".csv";
    for (auto& ch : c.output)
      if (ch == ' ') ch = '-';
  }

  try {
    c.load();
    const auto& model = c.model;
    const auto& plus = model.space.plus();
    json& p = man.params;

    if (sub == validate) {
      const auto report = fr::validate_model(model);
      auto os = open_out(c.output);
      fr::CsvWriter w(os);
      w.header({"check", "pass", "worst", "u", "i", "j"});
      for (const auto& ch : report.checks)
        w.field(ch.name).field(ch.pass ? 1 : 0).field(ch.worst).field(ch.u).field(ch.i)
            .field(ch.j).end_row();
      man.outputs = {c.output};
      man.write(c);
      std::cout << report.summary();
      return report.pass() ? kExitOk : kExitInvalid;
    }

    if (sub == simulate) {
      p = {{"horizon", horizon}, {"z", z}, {"paths", sim_paths}, {"state", start_state}};
      man.seed = seed;
      man.has_seed = true;
      auto os = open_out(c.output);
      fr::CsvWriter w(os);
      w.header({"path", "epoch", "time", "state", "arrival_flag", "duration", "fluid",
                "dividend_acc", "cost_acc"});
      for (int k = 0; k < sim_paths; ++k) {
        const auto rec = fr::simulate_path(model, z, horizon, seed, k, start_state);
        for (std::size_t e = 0; e < rec.poisson_epochs.size(); ++e)
          w.field(k).field(static_cast<long long>(e)).field(rec.poisson_epochs[e])
              .field(rec.states[e]).field(rec.arrival[e] ? 1 : 0).field(rec.durations[e])
              .field(rec.fluid[e]).field(rec.dividend[e]).field(rec.jump_costs[e]).end_row();
      }
      man.outputs = {c.output};
    } else if (sub == gmatrix) {
      p = {{"s", s_from}, {"t", t_points}, {"step", step}};
      const int dim = model.dim();
      auto os = open_out(c.output);
      fr::CsvWriter w(os);
      w.field(std::string("s")).field(std::string("t"));
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) w.field("g_" + std::to_string(i) + "_" + std::to_string(j));
      w.field(std::string("error_estimate")).end_row();
      for (double t : t_points) {
        const auto g = fr::survival_matrix(model.kernel, s_from, t, step);
        w.field(s_from).field(t);
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) w.field(g.g(i, j));
        w.field(g.error_estimate).end_row();
      }
      man.outputs = {c.output};
    } else if (sub == density) {
      p = {{"y", y_points}, {"n", arrival}, {"joint", joint}, {"step", step}};
      auto os = open_out(c.output);
      fr::CsvWriter w(os);
      if (joint) {
        w.header({"n", "density"});
        w.field(static_cast<int>(y_points.size()))
            .field(fr::interarrival_density(model, y_points, step)).end_row();
      } else {
        w.header({"n", "y", "density", "initial_mass", "tail_bound", "truncation_ok"});
        for (double y : y_points) {
          const auto m = fr::iph_marginal(model, arrival, y, step);
          w.field(arrival).field(y).field(m.density).field(m.initial_mass).field(m.tail_bound)
              .field(m.truncation_ok ? 1 : 0).end_row();
          if (!m.truncation_ok) std::cerr << "warning: renewal operator truncation not converged\n";
        }
      }
      man.outputs = {c.output};
    } else if (sub == bridge) {
      const auto g = grid.build(model);
      p = {{"theta1", theta1}, {"theta2", theta2}, {"z", z}, {"n_max", n_max},
           {"oversample", oversample}, {"grid", grid.to_json(g)}};
      fr::BridgeOptions o;
      o.theta1 = theta1;
      o.theta2 = theta2;
      o.n_max = n_max;
      o.oversample = oversample;
      const int zi = g.z_index(z);
      const auto tensor = fr::bridge_recursion(model, g, o);
      const auto& minus = model.space.minus();
      auto os = open_out(c.output);
      fr::CsvWriter w(os);
      w.header({"n", "i", "j", "L", "window_mass", "overflow_mass", "edge_density", "clamp"});
      for (int n = 2; n <= tensor.n_max(); ++n) {
        const auto& sl = tensor.at(n);
        const fr::Matrix L = fr::integrate_bridge(sl, g, zi);
        const fr::Matrix mass = fr::bridge_mass(sl, g, zi);
        for (int i = 0; i < tensor.np; ++i)
          for (int j = 0; j < tensor.nm; ++j) {
            double over = 0, edge = 0;
            for (int b = 0; b < g.l_count(); ++b) over += g.l_weight(b) * sl.at(zi, i, j, g.overflow(), b);
            for (int s = 0; s < g.s_count(); ++s)
              edge = std::max({edge, sl.at(zi, i, j, s, 0), sl.at(zi, i, j, s, g.q())});
            w.field(n).field(plus[i]).field(minus[j]).field(L(i, j)).field(mass(i, j))
                .field(over).field(edge).field(tensor.clamp[n - 2]).end_row();
          }
      }
      man.outputs = {c.output};
      if (!dump.empty()) {
        std::ofstream bin(dump, std::ios::binary);
        if (!bin) throw std::runtime_error("cannot write " + dump);
        tensor.write_binary(bin);
        man.outputs.push_back(dump);
      }
    } else if (sub == first || sub == ruin) {
      const auto g = grid.build(model);
      fr::PsiOptions o;
      o.theta1 = theta1;
      o.theta2 = theta2;
      o.mode = parse_mode(mode);
      o.n_max = o.mode == fr::SeriesMode::by_order ? n_max : max_iterations;
      o.eps_tail = eps_tail;
      o.anderson = o.mode == fr::SeriesMode::resummed ? anderson : 0;
      o.oversample = oversample;
      p = {{"theta1", theta1}, {"theta2", theta2}, {"mode", mode}, {"n_max", o.n_max},
           {"eps_tail", eps_tail}, {"anderson", o.anderson}, {"oversample", oversample},
           {"grid", grid.to_json(g)}};
      fr::DescriptorResult r;
      std::vector<int> rows;
      if (sub == first) {
        p["z"] = z;
        r = fr::psi(model, z, g, o);
        rows = plus;
      } else {
        if (i0 < 0) i0 = first_plus(model);
        p["u"] = u_level;
        p["n_stages"] = n_stages;
        p["i0"] = i0;
        r = fr::ruin_descriptor(model, u_level, n_stages, i0, g, o);
        rows = {i0};
      }
      write_descriptor(c, man, r, rows);
      man.write(c);
      if (!r.converged) {
        std::cerr << "warning: series increment " << r.tail_estimate << " still above eps_tail "
                  << eps_tail << " after " << r.n_used << " steps\n";
        return kExitNumeric;
      }
      return kExitOk;
    } else if (sub == finite) {
      const auto g = grid.custom() || grid.refine > 0 ? grid.build(model)
                                                       : fr::finite_time_grid(model, z, t_final);
      p = {{"t", t_final}, {"z", z}, {"m_max", m_max}, {"eps", eps}, {"grid", grid.to_json(g)}};
      fr::FiniteTimeOptions o;
      o.m_max = m_max;
      o.eps = eps;
      const auto r = fr::finite_time_return(model, z, t_final, g, o);
      write_descriptor(c, man, r, plus);
      man.write(c);
      if (!r.converged) {
        std::cerr << "warning: tail bound " << r.tail_estimate << " above eps at m_max\n";
        return kExitNumeric;
      }
      return kExitOk;
    } else if (mc->parsed()) {
      CLI::App* which = mc->get_subcommands().front();
      man.seed = seed;
      man.has_seed = true;
      p = {{"n_paths", n_paths}, {"z", z}};
      if (which == mc_first) {
        p["theta1"] = theta1;
        p["theta2"] = theta2;
        p["max_epochs"] = max_epochs;
        write_mc(c, man, fr::mc_first_return(model, z, theta1, theta2, n_paths, max_epochs, seed),
                 plus);
      } else if (which == mc_ruin) {
        p["u"] = u_level;
        p["max_epochs"] = max_epochs;
        std::vector<int> rows(model.dim());
        for (int i = 0; i < model.dim(); ++i) rows[i] = i;
        write_mc(c, man, fr::mc_ruin(model, u_level, z, n_paths, max_epochs, seed), rows);
      } else if (which == mc_finite) {
        p["t"] = t_final;
        write_mc(c, man, fr::mc_finite_time(model, z, t_final, n_paths, seed), plus);
      } else {
        const auto g = grid.build(model);
        p["n"] = hist_n;
        p["theta1"] = theta1;
        p["theta2"] = theta2;
        p["grid"] = grid.to_json(g);
        std::vector<double> se(s_bins + 1), le(l_bins + 1);
        for (int k = 0; k <= s_bins; ++k) se[k] = g.u_max() * k / s_bins;
        for (int k = 0; k <= l_bins; ++k) le[k] = -g.l_max() + 2 * g.l_max() * k / l_bins;
        const auto h = fr::mc_bridge_histogram(model, z, hist_n, se, le, n_paths, seed, theta1,
                                               theta2);
        if (h.hits == 0) std::cerr << "warning: no path formed an " << hist_n << "-bridge\n";
        const auto& minus = model.space.minus();
        auto os = open_out(c.output);
        fr::CsvWriter w(os);
        w.header({"i", "j", "s_lo", "s_hi", "l_lo", "l_hi", "value", "std_error", "n_paths", "seed"});
        for (std::size_t i = 0; i < plus.size(); ++i)
          for (std::size_t j = 0; j < minus.size(); ++j)
            for (int sb = 0; sb < s_bins; ++sb)
              for (int lb = 0; lb < l_bins; ++lb) {
                const std::size_t x = ((i * minus.size() + j) * s_bins + sb) * l_bins + lb;
                w.field(plus[i]).field(minus[j]).field(se[sb]).field(se[sb + 1]).field(le[lb])
                    .field(le[lb + 1]).field(h.bins[x]).field(h.bins_se[x])
                    .field(static_cast<long long>(n_paths)).field(std::to_string(seed)).end_row();
              }
        man.outputs = {c.output};
      }
    } else if (sub == study) {
      man.seed = seed;
      man.has_seed = true;
      fr::PsiOptions o;
      o.theta1 = theta1;
      o.theta2 = theta2;
      o.mode = parse_mode(mode);
      o.n_max = o.mode == fr::SeriesMode::by_order ? n_max : max_iterations;
      o.eps_tail = eps_tail;
      o.anderson = o.mode == fr::SeriesMode::resummed ? anderson : 0;
      o.oversample = oversample;
      p = {{"target", target}, {"theta1", theta1}, {"theta2", theta2}, {"mode", mode},
           {"n_max", o.n_max}, {"eps_tail", eps_tail}, {"anderson", o.anderson},
           {"n_paths", n_paths}, {"z", z}, {"max_epochs", max_epochs}, {"levels", levels}};
      const auto& minus = model.space.minus();
      auto os = open_out(c.output);
      fr::CsvWriter w(os);
      w.header({"setting", "i", "j", "analytic", "mc", "std_error", "gap", "within_3se"});
      bool last_ok = true;
      auto emit = [&](const std::string& setting, const fr::Matrix& a, const fr::McEstimate& e,
                      const std::vector<int>& rows, int mc_row0) {
        last_ok = true;
        for (int i = 0; i < a.rows(); ++i)
          for (int j = 0; j < a.cols(); ++j) {
            const double m = e.value(mc_row0 + i, j), s = e.std_error(mc_row0 + i, j);
            const double gap = std::abs(a(i, j) - m);
            const bool ok = gap <= 3 * s + 1e-12;
            last_ok = last_ok && ok;
            w.field(setting).field(rows[i]).field(minus[j]).field(a(i, j)).field(m).field(s)
                .field(gap).field(ok ? 1 : 0).end_row();
          }
      };
      if (target == "first-return") {
        auto g = grid.build(model);
        fr::McEstimate e;
        for (int lv = 0; lv <= levels; ++lv, g = g.refined()) {
          const auto r = fr::psi(model, z, g, o);
          const int cap = o.mode == fr::SeriesMode::by_order ? r.n_used : max_epochs;
          if (lv == 0 || o.mode == fr::SeriesMode::by_order)
            e = fr::mc_first_return(model, z, theta1, theta2, n_paths, cap, seed);
          emit("du=" + fr::format_double(g.du()), r.matrix, e, plus, 0);
        }
      } else if (target == "ruin") {
        if (i0 < 0) i0 = first_plus(model);
        p["u"] = u_level;
        p["n_stages"] = stage_list;
        p["i0"] = i0;
        const auto g = grid.build(model);
        const auto e = fr::mc_ruin(model, u_level, z, n_paths, max_epochs, seed);
        for (int n : stage_list) {
          const auto r = fr::ruin_descriptor(model, u_level, n, i0, g, o);
          emit("n_stages=" + std::to_string(n), r.matrix, e, {i0}, i0);
        }
      } else {
        p["t"] = t_final;
        auto g = grid.custom() || grid.refine > 0 ? grid.build(model)
                                                   : fr::finite_time_grid(model, z, t_final);
        const auto e = fr::mc_finite_time(model, z, t_final, n_paths, seed);
        for (int lv = 0; lv <= levels; ++lv, g = g.refined()) {
          const auto r = fr::finite_time_return(model, z, t_final, g);
          emit("du=" + fr::format_double(g.du()), r.matrix, e, plus, 0);
        }
      }
      man.outputs = {c.output};
      man.write(c);
      return last_ok ? kExitOk : kExitNumeric;
    }
    man.write(c);
    return kExitOk;
  } catch (const fr::ConfigError& e) {
    // what() already carries the line and field
    std::cerr << "config error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fr::BoundViolation& e) {
    std::cerr << "validation failed: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fr::ModelError& e) {
    std::cerr << "invalid model: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fr::DomainError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fr::ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const fr::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
