#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "hurdlemix/conditional.hpp"
#include "hurdlemix/diagnostics.hpp"
#include "hurdlemix/errors.hpp"
#include "hurdlemix/io.hpp"
#include "hurdlemix/marginal.hpp"
#include "hurdlemix/summaries.hpp"
#include "hurdlemix/synthetic.hpp"

namespace fs = std::filesystem;
using namespace hurdlemix;

namespace {

std::atomic<bool> g_stop{false};

void on_sigint(int) { g_stop.store(true); }

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3;
constexpr int kExitInterrupted = 130;

fs::path default_output(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("HURDLEMIX_OUTPUT_DIR"); env && *env) return env;
  return "hurdlemix-out";
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// ---- fit ----

struct FitOptions {
  std::string data, format = "long", config, output;
  unsigned chains = 1;
  // overrides, applied only when given on the command line
  std::string algorithm, m_nb_mode, fixed_outer;
  Hyperparams h;
  std::uint64_t iters = 0, burnin = 0, thin = 0, seed = 0;
  std::size_t m_nb_samples = 0;
};

void add_fit(CLI::App& app, FitOptions& o, std::map<std::string, CLI::Option*>& given) {
  auto* fit = app.add_subcommand("fit", "Run MCMC on a count dataset and write a trace directory");
  fit->add_option("--data", o.data, "Dataset CSV")->required();
  fit->add_option("--format", o.format, "long | wide")->check(CLI::IsMember({"long", "wide"}));
  fit->add_option("--config", o.config, "RunConfig JSON; flags below override its fields");
  fit->add_option("--output", o.output, "Trace directory (default $HURDLEMIX_OUTPUT_DIR)");
  fit->add_option("--chains", o.chains, "Independent chains run concurrently")
      ->check(CLI::PositiveNumber);
  given["algorithm"] = fit->add_option("--algorithm", o.algorithm)
                           ->check(CLI::IsMember({"conditional", "marginal"}));
  given["alpha"] = fit->add_option("--alpha", o.h.alpha);
  given["beta"] = fit->add_option("--beta", o.h.beta);
  given["zeta"] = fit->add_option("--zeta", o.h.zeta);
  given["eta"] = fit->add_option("--eta", o.h.eta);
  given["lambda"] = fit->add_option("--lambda", o.h.lambda);
  given["gamma_M"] = fit->add_option("--gamma_M", o.h.gamma_M);
  given["gamma_S"] = fit->add_option("--gamma_S", o.h.gamma_S);
  given["Lambda_M"] = fit->add_option("--Lambda_M", o.h.Lambda_M);
  given["Lambda_S"] = fit->add_option("--Lambda_S", o.h.Lambda_S);
  given["iters"] = fit->add_option("--iters", o.iters);
  given["burnin"] = fit->add_option("--burnin", o.burnin);
  given["thin"] = fit->add_option("--thin", o.thin);
  given["seed"] = fit->add_option("--seed", o.seed);
  given["m_nb_mode"] = fit->add_option("--m_nb_mode", o.m_nb_mode)
                           ->check(CLI::IsMember({"truncated", "monte_carlo"}));
  given["m_nb_samples"] = fit->add_option("--m_nb_samples", o.m_nb_samples);
  given["fixed_outer"] = fit->add_option("--fixed_outer", o.fixed_outer, "Partition JSON file");
}

RunConfig resolve_config(const FitOptions& o, const std::map<std::string, CLI::Option*>& given) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  auto has = [&](const char* k) { return given.at(k)->count() > 0; };
  if (has("algorithm")) c.algorithm = algorithm_from_string(o.algorithm);
  Hyperparams& h = c.hyperparams;
  if (has("alpha")) h.alpha = o.h.alpha;
  if (has("beta")) h.beta = o.h.beta;
  if (has("zeta")) h.zeta = o.h.zeta;
  if (has("eta")) h.eta = o.h.eta;
  if (has("lambda")) h.lambda = o.h.lambda;
  if (has("gamma_M")) h.gamma_M = o.h.gamma_M;
  if (has("gamma_S")) h.gamma_S = o.h.gamma_S;
  if (has("Lambda_M")) h.Lambda_M = o.h.Lambda_M;
  if (has("Lambda_S")) h.Lambda_S = o.h.Lambda_S;
  if (has("iters")) c.iters = o.iters;
  if (has("burnin")) c.burnin = o.burnin;
  if (has("thin")) c.thin = o.thin;
  if (has("seed")) c.seed = o.seed;
  if (has("m_nb_mode")) {
    c.m_nb_mode.kind =
        o.m_nb_mode == "truncated" ? MnbMode::Kind::truncated : MnbMode::Kind::monte_carlo;
  }
  if (has("m_nb_samples")) c.m_nb_mode.nsamples = o.m_nb_samples;
  if (has("fixed_outer")) c.fixed_outer = o.fixed_outer;
  c.check();
  return c;
}

void run_one_chain(const RunConfig& config, const CountDataset& data,
                   const std::vector<int>& fixed, const fs::path& dir) {
  TraceWriter writer(dir, config, data);
  RunControl control;
  control.sink = [&](const TraceRecord& rec) { writer.write(rec); };
  control.stop = &g_stop;
  control.keep_records = false;
  const auto t0 = std::chrono::steady_clock::now();
  const ChainConfig cc = config.chain_config(fixed);
  if (config.algorithm == Algorithm::conditional) {
    run_conditional_chain(data, config.hyperparams, cc, control);
  } else {
    run_marginal_chain(data, config.hyperparams, cc, config.m_nb_mode, control);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  writer.finish(secs, g_stop.load());
}

int run_fit(const FitOptions& o, const std::map<std::string, CLI::Option*>& given) {
  const RunConfig config = resolve_config(o, given);
  const CountDataset data = load_dataset(o.data, data_format_from_string(o.format));
  std::vector<int> fixed;
  if (!config.fixed_outer.empty()) fixed = load_partition(config.fixed_outer, data.n());
  const fs::path out = default_output(o.output);

  if (o.chains == 1) {
    run_one_chain(config, data, fixed, out);
  } else {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(o.chains);
    for (unsigned k = 0; k < o.chains; ++k) {
      threads.emplace_back([&, k] {
        try {
          RunConfig ck = config;
          ck.seed = config.seed + k;
          run_one_chain(ck, data, fixed, out / ("chain_" + std::to_string(k + 1)));
        } catch (...) {
          errors[k] = std::current_exception();
          g_stop.store(true);
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  if (g_stop.load()) {
    std::cerr << "interrupted; partial trace written to " << out.string() << '\n';
    return kExitInterrupted;
  }
  std::cout << out.string() << '\n';
  return kExitOk;
}

// ---- summarize ----

struct SummarizeOptions {
  std::string trace, output;
  std::uint64_t y_max = 30;
};

void write_psm(const fs::path& path, const CoClusteringMatrix& psm) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (std::size_t i = 0; i < psm.n; ++i) {
    for (std::size_t l = 0; l < psm.n; ++l) out << (l ? "," : "") << fmt_double(psm(i, l));
    out << '\n';
  }
}

int run_summarize(const SummarizeOptions& o) {
  const TraceDirectory td = read_trace_directory(o.trace);
  const auto& records = td.trace.records;
  if (records.empty()) throw DataError("trace in " + o.trace + " has no records");
  const fs::path out = o.output.empty() ? fs::path(o.trace) : fs::path(o.output);
  fs::create_directories(out);

  const auto psm = coclustering(records, Level::outer);
  const auto psm_inner = coclustering(records, Level::inner);
  write_psm(out / "psm.csv", psm);
  write_psm(out / "psm_inner.csv", psm_inner);

  const auto outer_best = binder_estimate(records, Level::outer);
  const auto nested = nested_binder_estimate(records);
  std::vector<int> outer1, inner1;
  for (int v : nested.outer) outer1.push_back(v + 1);
  for (int v : nested.inner) inner1.push_back(v + 1);
  std::vector<std::size_t> order;
  for (std::size_t i : average_linkage_order(psm)) order.push_back(i + 1);
  std::vector<std::size_t> order_inner;
  for (std::size_t i : average_linkage_order(psm_inner)) order_inner.push_back(i + 1);
  const int K = nested.outer.empty() ? 0 : 1 + *std::max_element(nested.outer.begin(), nested.outer.end());
  write_json(out / "partition.json",
             Json{{"outer", outer1},
                  {"inner", inner1},
                  {"K", K},
                  {"outer_binder_loss", outer_best.loss},
                  {"order", order},
                  {"order_inner", order_inner}});

  const auto counts = cluster_count_posterior(records);
  {
    std::ofstream kp(out / "k_posterior.csv", std::ios::binary | std::ios::trunc);
    kp << "quantity,value,probability\n";
    auto dump = [&](const char* name, const Pmf& p) {
      for (const auto& [v, w] : p) kp << name << ',' << v << ',' << fmt_double(w) << '\n';
    };
    dump("K", counts.K);
    dump("M", counts.M);
    dump("total_inner", counts.total_inner);
  }
  {
    std::ofstream pc(out / "pmf_curves.csv", std::ios::binary | std::ios::trunc);
    pc << "cluster,process,y,mean,lower,upper\n";
    if (td.trace.algorithm == Algorithm::conditional) {
      std::vector<std::uint64_t> grid;
      for (std::uint64_t y = 1; y <= o.y_max; ++y) grid.push_back(y);
      std::size_t max_k = 0;
      for (const auto& r : records) max_k = std::max(max_k, r.components.size());
      for (std::size_t m = 0; m < max_k; ++m) {
        for (std::size_t j = 0; j < td.trace.d; ++j) {
          const auto band = cluster_pmf_estimate(records, m, j, grid);
          for (std::size_t k = 0; k < grid.size(); ++k) {
            pc << m + 1 << ',' << j + 1 << ',' << grid[k] << ',' << fmt_double(band.mean[k])
               << ',' << fmt_double(band.lower[k]) << ',' << fmt_double(band.upper[k]) << '\n';
          }
        }
      }
    }
  }
  std::cout << out.string() << '\n';
  return kExitOk;
}

// ---- simulate ----

struct SimulateOptions {
  std::string scenario = "three-outer", format = "long", output;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateOptions& o) {
  const GroundTruth& truth = scenario(o.scenario);
  Rng rng(o.seed);
  const SyntheticData sim = generate(truth, rng);
  const fs::path out = default_output(o.output);
  fs::create_directories(out);
  save_dataset(out / "data.csv", sim.data, data_format_from_string(o.format));
  write_json(out / "truth.json", Json{{"scenario", o.scenario},
                                      {"seed", o.seed},
                                      {"format", o.format},
                                      {"truth", to_json(truth)},
                                      {"partition", to_json(sim)}});
  std::cout << out.string() << '\n';
  return kExitOk;
}

// ---- diagnose ----

struct DiagnoseOptions {
  std::vector<std::string> traces;
  std::string output;
};

Json series_metrics(const std::vector<double>& x, double thin) {
  const auto tau = iat(x);
  if (!tau) return Json{{"iat", nullptr}, {"ess", nullptr}, {"ess_per_iter", nullptr}};
  const double e = double(x.size()) / *tau;
  return Json{{"iat", *tau}, {"ess", e}, {"ess_per_iter", e / (double(x.size()) * thin)}};
}

int run_diagnose(const DiagnoseOptions& o) {
  Json traces = Json::array();
  for (const auto& path : o.traces) {
    const TraceDirectory td = read_trace_directory(path);
    const auto& recs = td.trace.records;
    const double thin = td.manifest.at("config").value("thin", 1.0);
    std::vector<double> ll, K, tk, M, llc;
    for (const auto& r : recs) {
      ll.push_back(r.log_marginal);
      K.push_back(double(r.K));
      tk.push_back(double(r.total_inner()));
      M.push_back(double(r.M));
      llc.push_back(r.loglik);
    }
    Json series{{"log_likelihood", series_metrics(ll, thin)},
                {"K", series_metrics(K, thin)},
                {"total_inner", series_metrics(tk, thin)}};
    if (td.trace.algorithm == Algorithm::conditional) {
      series["M"] = series_metrics(M, thin);
      series["log_likelihood_given_parameters"] = series_metrics(llc, thin);
    }
    traces.push_back(Json{{"path", path},
                          {"algorithm", to_string(td.trace.algorithm)},
                          {"records", recs.size()},
                          {"thin", thin},
                          {"series", series}});
  }
  const fs::path out = o.output.empty() ? fs::path(o.traces.front()) / "ess_iat.json"
                                        : fs::path(o.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_json(out, Json{{"traces", traces}});
  std::cout << out.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested clustering of zero-inflated count processes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitOptions fit;
  std::map<std::string, CLI::Option*> given;
  add_fit(app, fit, given);

  SummarizeOptions sum;
  auto* s = app.add_subcommand("summarize", "Posterior summaries of a trace directory");
  s->add_option("trace", sum.trace, "Trace directory")->required();
  s->add_option("--output", sum.output, "Output directory (default: the trace directory)");
  s->add_option("--y-max", sum.y_max, "Largest count on the pmf grid");

  SimulateOptions sim;
  auto* g = app.add_subcommand("simulate", "Generate a synthetic dataset from a preset");
  g->add_option("--scenario", sim.scenario)
      ->check(CLI::IsMember({"three-outer", "single-cluster", "nested-heavy"}));
  g->add_option("--seed", sim.seed);
  g->add_option("--format", sim.format)->check(CLI::IsMember({"long", "wide"}));
  g->add_option("--output", sim.output, "Output directory (default $HURDLEMIX_OUTPUT_DIR)");

  DiagnoseOptions diag;
  auto* d = app.add_subcommand("diagnose", "ESS and IAT of trace series");
  d->add_option("traces", diag.traces, "Trace directories")->required();
  d->add_option("--output", diag.output, "Output file (default: <first trace>/ess_iat.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (app.got_subcommand("fit")) return run_fit(fit, given);
    if (app.got_subcommand("summarize")) return run_summarize(sum);
    if (app.got_subcommand("simulate")) return run_simulate(sim);
    if (app.got_subcommand("diagnose")) return run_diagnose(diag);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
