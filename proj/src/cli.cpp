#include "nit/cli.hpp"

#include "nit/io.hpp"
#include "nit/simulation.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace nit::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

double to_double(const std::string& text, const std::string& what) {
  double v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw UsageError("invalid number '" + text + "' for " + what);
  return v;
}

// "auto" or "lo:hi:count".
std::vector<double> parse_grid(const std::string& spec) {
  if (spec == "auto") return {};
  const auto a = spec.find(':');
  const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
  if (b == std::string::npos) throw UsageError("--grid expects 'auto' or 'lo:hi:count', got '" + spec + "'");
  const double lo = to_double(spec.substr(0, a), "--grid");
  const double hi = to_double(spec.substr(a + 1, b - a - 1), "--grid");
  const double count = to_double(spec.substr(b + 1), "--grid");
  if (count < 1 || count != static_cast<int>(count)) throw UsageError("--grid count must be a positive integer");
  try {
    return log_grid(lo, hi, static_cast<int>(count));
  } catch (const InvalidInput& e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
}

std::map<std::string, double> parse_params(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--param expects key=value, got '" + item + "'");
    out[item.substr(0, eq)] = to_double(item.substr(eq + 1), "--param " + item.substr(0, eq));
  }
  return out;
}

struct McvFlags {
  double alpha = 0.1;
  std::string grid = "auto";
  int replicates = 5;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

void add_mcv_flags(CLI::App* cmd, McvFlags& f) {
  cmd->add_option("--alpha", f.alpha, "MCV noise-split ratio in (0, 1]")->capture_default_str();
  cmd->add_option("--grid", f.grid, "bandwidth grid: auto or lo:hi:count (log-spaced)")->capture_default_str();
  cmd->add_option("--replicates", f.replicates, "MCV replicates")->capture_default_str();
  cmd->add_option("--seed", f.seed, "master seed")->capture_default_str();
  cmd->add_option("--threads", f.threads, "worker threads (0: all cores)")->capture_default_str();
}

McvConfig mcv_config(const McvFlags& f) {
  McvConfig c;
  c.alpha = f.alpha;
  c.lambda_grid = parse_grid(f.grid);
  c.replicates = f.replicates;
  c.seed = f.seed;
  c.threads = f.threads;
  return c;
}

// Bad family names and parameter values are usage errors.
void resolve_checked(const SimulationSpec& spec) {
  try {
    resolve_spec(spec);
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Integrative Tweedie shrinkage with side information", "nit"};
  app.require_subcommand(1);

  // estimate
  auto* est = app.add_subcommand("estimate", "fit the estimator to a CSV dataset");
  std::string data_path, y_col = "y", aux_cols, cat_cols, out_path, box = "off";
  double sigma = 0, cov_ridge = 1e-6, ridge = 1e-8;
  bool no_zero_sum = false, monotone = false;
  McvFlags est_mcv;
  est->add_option("--data", data_path, "input CSV with a header row")->required();
  est->add_option("--y-col", y_col, "primary column")->capture_default_str();
  est->add_option("--aux-cols", aux_cols, "comma-separated auxiliary columns (default: all others)");
  est->add_option("--cat-cols", cat_cols, "comma-separated categorical auxiliary columns");
  est->add_option("--sigma", sigma, "known noise standard deviation")->required();
  est->add_option("--out", out_path, "output CSV; metadata goes to <out>.meta.json")->required();
  est->add_option("--box", box, "box constraint: off or auto")->check(CLI::IsMember({"off", "auto"}))->capture_default_str();
  est->add_flag("--no-zero-sum", no_zero_sum, "drop the zero-sum constraint");
  est->add_flag("--monotone", monotone, "impose monotonicity of y + sigma^2 h (no auxiliaries only)");
  est->add_option("--cov-ridge", cov_ridge, "relative ridge on the pooled covariance")->capture_default_str();
  est->add_option("--ridge", ridge, "relative ridge on the kernel matrix")->capture_default_str();
  add_mcv_flags(est, est_mcv);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a simulation study and write an MSE table");
  std::string family, methods = "naive,js,ebt,nit_dd,nit_or", sim_out;
  Index n = 1000;
  std::vector<std::string> params;
  std::size_t reps = 10;
  McvFlags sim_mcv;
  sim->add_option("--family", family, "simulation family")->required();
  sim->add_option("--n", n, "sample size")->capture_default_str();
  sim->add_option("--param", params, "family parameter key=value (repeatable)");
  sim->add_option("--methods", methods, "comma-separated methods")->capture_default_str();
  sim->add_option("--reps", reps, "replications")->capture_default_str();
  sim->add_option("--out", sim_out, "output CSV (default: standard output)");
  add_mcv_flags(sim, sim_mcv);

  // oracle-check
  auto* chk = app.add_subcommand("oracle-check", "generator moment self-test and oracle score checks");
  std::string chk_family;
  Index chk_n = 100000;
  std::vector<std::string> chk_params;
  std::size_t points = 1000;
  std::uint64_t chk_seed = 0;
  chk->add_option("--family", chk_family, "simulation family")->required();
  chk->add_option("--n", chk_n, "sample size for the moment self-test")->capture_default_str();
  chk->add_option("--param", chk_params, "family parameter key=value (repeatable)");
  chk->add_option("--points", points, "records for the finite-difference check")->capture_default_str();
  chk->add_option("--seed", chk_seed, "seed")->capture_default_str();

  std::vector<const char*> argv{"nit"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "nit: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return 1;
  }

  try {
    if (est->parsed()) {
      DatasetSchema schema;
      schema.y_column = y_col;
      schema.aux_columns = split_list(aux_cols);
      schema.categorical_columns = split_list(cat_cols);
      schema.sigma = sigma;
      const McvConfig mcv = mcv_config(est_mcv);
      ConstraintOptions cons;
      cons.zero_sum = !no_zero_sum;
      cons.box = box == "auto" ? BoxMode::automatic : BoxMode::off;
      cons.monotone = monotone;
      FitOptions fit;
      fit.cov_ridge = cov_ridge;
      fit.solver.ridge = ridge;

      const Dataset data = read_dataset(data_path, schema);
      const EstimateResult result = estimate(data, mcv, cons, fit);
      for (const auto& d : result.diagnostics) err << "nit: " << d << "\n";
      EstimateMeta meta;
      meta.alpha = mcv.alpha;
      meta.seed = mcv.seed;
      meta.replicates = mcv.replicates;
      meta.constraints = cons;
      meta.cov_ridge = cov_ridge;
      meta.ridge = ridge;
      write_estimates(result, data, out_path, meta);
      return 0;
    }

    if (sim->parsed()) {
      SimulationSpec spec;
      spec.family = family;
      spec.n = n;
      spec.params = parse_params(params);
      resolve_checked(spec);
      StudyOptions opts;
      opts.mcv = mcv_config(sim_mcv);
      opts.threads = sim_mcv.threads;
      const StudyResult result = run_study({spec}, split_list(methods), reps, sim_mcv.seed, opts);
      for (const auto& c : result.cells)
        for (std::size_t r = 0; r < c.failures.size(); ++r)
          if (!c.failures[r].empty())
            err << "nit: " << c.method << " failed in replication " << r << ": " << c.failures[r] << "\n";
      if (sim_out.empty())
        write_study(result, out);
      else
        write_study(result, sim_out);
      return 0;
    }

    if (chk->parsed()) {
      SimulationSpec spec;
      spec.family = chk_family;
      spec.params = parse_params(chk_params);
      spec.seed = chk_seed;
      resolve_checked(spec);
      bool ok = true;
      out << "column,moment,sample,expected,std_error,ok\n";
      for (const auto& m : generator_self_test(spec, chk_n)) {
        out << m.column << ',' << m.moment << ',' << format_double(m.sample) << ',' << format_double(m.expected)
            << ',' << format_double(m.std_error) << ',' << (m.ok ? "yes" : "no") << '\n';
        ok = ok && m.ok;
      }
      const ScoreCheck fd = oracle_fd_check(spec, points);
      const bool fd_ok = fd.max_abs_error <= 1e-6;
      out << "score_fd,max_abs_error," << format_double(fd.max_abs_error) << ",0,1e-06," << (fd_ok ? "yes" : "no")
          << '\n';
      if (!(ok && fd_ok)) {
        err << "nit: oracle-check failed for " << chk_family << "\n";
        return 2;
      }
      return 0;
    }
  } catch (const UsageError& e) {
    err << "nit: " << e.what() << "\n";
    return 1;
  } catch (const InvalidInput& e) {
    err << "nit: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "nit: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace nit::cli
