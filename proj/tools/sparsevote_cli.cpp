#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sparsevote/sparsevote.hpp"

using namespace sparsevote;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string scheme, sparsity_mode, second_round;
  std::optional<int> d, n, machines, k, l, reps, threads;
  std::optional<double> r;
  std::optional<std::uint64_t> seed;
  bool paper_scale = false;
  std::string out = ".";
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_file, "key = value config file; flags override it");
  app->add_option("--scheme", f.scheme, "thresh_votes | top_L_votes | top_L_signs | bnm21 | avg_deblasso");
  app->add_option("--d", f.d, "dimension");
  app->add_option("--n", f.n, "samples per machine");
  app->add_option("--machines", f.machines, "number of machines M");
  app->add_option("--k", f.k, "sparsity K");
  app->add_option("--r", f.r, "SNR parameter r");
  app->add_option("--l", f.l, "L for the top-L schemes (default K)");
  app->add_option("--sparsity-mode", f.sparsity_mode, "known | unknown");
  app->add_option("--second-round", f.second_round, "average | gram_exact | none");
  app->add_option("--reps", f.reps, "replications");
  app->add_option("--seed", f.seed, "base seed");
  app->add_option("--threads", f.threads, "worker threads for replications");
  app->add_flag("--paper-scale", f.paper_scale, "d=5000, n=250, reps=500 before other overrides");
  app->add_option("--out", f.out, "output directory");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (f.paper_scale) {
    cfg.spec.d = 5000;
    cfg.spec.n = 250;
    cfg.reps = 500;
  }
  if (!f.config_file.empty()) io::apply_config_file(cfg, f.config_file);
  if (!f.scheme.empty()) cfg.scheme = io::parse_scheme(f.scheme);
  if (!f.sparsity_mode.empty()) cfg.sparsity_mode = io::parse_sparsity(f.sparsity_mode);
  if (!f.second_round.empty()) cfg.second_round = io::parse_second_round(f.second_round);
  if (f.d) cfg.spec.d = *f.d;
  if (f.n) cfg.spec.n = *f.n;
  if (f.machines) cfg.spec.M = *f.machines;
  if (f.k) cfg.spec.K = *f.k;
  if (f.r) cfg.spec.r = *f.r;
  if (f.l) cfg.L = *f.l;
  if (f.reps) cfg.reps = *f.reps;
  if (f.seed) cfg.spec.base_seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os.precision(17);
  return os;
}

void write_outputs(const fs::path& dir, const SweepResult& res) {
  fs::create_directories(dir);
  auto jl = open_out(dir / "records.jsonl");
  for (const auto& r : res.records) jl << io::to_json(r).dump() << '\n';
  auto csv = open_out(dir / "sweep.csv");
  io::write_sweep_csv(csv, res.rows);
  std::cout << io::sweep_csv_header() << '\n';
  for (const auto& row : res.rows)
    std::cout << row.axis << ',' << row.value << ',' << row.scheme << ',' << row.f_mean << ',' << row.f_se << ','
              << row.l2_mean << ',' << row.l2_se << ',' << row.oracle_l2_mean << ',' << row.bits_r1_mean << ','
              << row.bits_r2_mean << ',' << row.reps << '\n';
}

SweepAxis parse_axis(const std::string& s) {
  if (s == "r") return SweepAxis::r;
  if (s == "n") return SweepAxis::n;
  if (s == "M") return SweepAxis::M;
  if (s == "L") return SweepAxis::L;
  throw Error("unknown sweep axis: " + s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Communication-efficient distributed sparse regression simulator"};
  app.require_subcommand(1);

  CommonFlags gen_f, run_f, sweep_f;

  auto* gen = app.add_subcommand("generate", "write fixed designs, responses for one replication and theta*");
  add_common(gen, gen_f);
  bool gen_csv = false;
  std::uint64_t gen_rep = 0;
  gen->add_flag("--csv", gen_csv, "also write one CSV per machine");
  gen->add_option("--rep", gen_rep, "noise replication to draw");

  auto* run = app.add_subcommand("run", "replicate one configuration");
  add_common(run, run_f);

  auto* sweep = app.add_subcommand("sweep", "replicate over a grid of one parameter");
  add_common(sweep, sweep_f);
  std::string axis = "r";
  std::vector<double> grid;
  std::vector<std::string> schemes;
  sweep->add_option("--axis", axis, "r | n | M | L")->check(CLI::IsMember({"r", "n", "M", "L"}));
  sweep->add_option("--grid", grid, "grid values")->required();
  sweep->add_option("--schemes", schemes, "schemes evaluated on the same fits (default --scheme)");

  auto* th = app.add_subcommand("theory", "print the regime reports of both thresholding theorems as JSON");
  double th_d = 5000, th_r = 0.5, th_eps = 0.0;
  th->add_option("--d", th_d, "dimension");
  th->add_option("--r", th_r, "SNR parameter r");
  th->add_option("--eps", th_eps, "Gaussian-approximation error epsilon_tau");

  auto* rep = app.add_subcommand("report", "merge sweep CSVs into one long-format CSV");
  std::vector<std::string> inputs;
  std::string rep_out = "report.csv";
  rep->add_option("inputs", inputs, "sweep CSV files")->required();
  rep->add_option("--out", rep_out, "output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = build_config(gen_f);
      Experiment exp(cfg);
      auto shards = sample_shards(cfg.spec);
      const auto gt = exp.truth();
      sample_responses(shards, gt.theta_star, exp.sigma_for(cfg.spec.r), cfg.spec.base_seed, gen_rep);
      const fs::path dir(gen_f.out);
      fs::create_directories(dir);
      io::save_shards(dir / "shards.bin", shards);
      io::save_truth(dir / "truth.bin", gt);
      if (gen_csv)
        for (const auto& s : shards) {
          auto os = open_out(dir / ("machine_" + std::to_string(s.machine_id) + ".csv"));
          io::write_shard_csv(os, s);
        }
      std::cout << "wrote " << shards.size() << " shards (n=" << cfg.spec.n << ", d=" << cfg.spec.d
                << "), theta_min=" << gt.theta_min << ", c_omega=" << gt.c_omega << " to " << dir << '\n';
    } else if (*run) {
      const auto cfg = build_config(run_f);
      const double g[] = {cfg.spec.r};
      write_outputs(run_f.out, run_sweep(cfg, SweepAxis::r, g));
    } else if (*sweep) {
      const auto cfg = build_config(sweep_f);
      std::vector<SchemeVariant> vars;
      for (const auto& s : schemes) {
        auto c = cfg;
        c.scheme = io::parse_scheme(s);
        c.validate();
        vars.push_back(c.variant());
      }
      write_outputs(sweep_f.out, run_sweep(cfg, parse_axis(axis), grid, vars));
    } else if (*th) {
      theory::TheoryConstants consts;
      nlohmann::json j;
      j["d"] = th_d;
      j["r"] = th_r;
      j["epsilon_tau"] = th_eps;
      j["constants_illustrative"] = consts.illustrative;
      j["thm2"] = io::to_json(theory::thm2_regime(th_d, th_r, th_eps));
      j["thm3"] = io::to_json(theory::thm3_regime(th_d, th_r, th_eps));
      std::cout << j.dump(2) << '\n';
    } else if (*rep) {
      auto os = open_out(rep_out);
      os << "source,axis,value,scheme,metric,mean,se,reps\n";
      for (const auto& in : inputs) {
        std::ifstream is(in);
        if (!is) throw Error("cannot read " + in);
        for (const auto& row : io::read_csv_rows(is)) {
          auto emit = [&](const char* metric, const std::string& mean, const std::string& se) {
            os << in << ',' << row.at("axis") << ',' << row.at("value") << ',' << row.at("scheme") << ',' << metric
               << ',' << mean << ',' << se << ',' << row.at("reps") << '\n';
          };
          emit("f_measure", row.at("f_mean"), row.at("f_se"));
          emit("l2_error", row.at("l2_mean"), row.at("l2_se"));
          emit("oracle_l2_error", row.at("oracle_l2_mean"), "");
          emit("bits_round1_per_machine", row.at("bits_r1_mean"), "");
          emit("bits_round2_per_machine", row.at("bits_r2_mean"), "");
        }
      }
      std::cout << "wrote " << rep_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
