// hvacdt: command-line driver for the collect -> train -> extract -> verify
// -> deploy pipeline. Every command reads and writes artifacts in --out, so
// the commands chain without extra flags.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "hvacdt/hvacdt.hpp"

namespace fs = std::filesystem;
using namespace hvacdt;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

Config load(const Globals& g) {
  Config c = g.config_path.empty() ? default_config(0) : load_config(g.config_path, 0);
  if (g.seed) {
    // Keep the config's season-specific comfort range; only reseed.
    c.apply_seed(*g.seed);
  }
  fs::create_directories(g.out);
  return c;
}

std::string in_out(const Globals& g, const std::string& name) { return (fs::path(g.out) / name).string(); }

std::string pick(const std::string& flag, const Globals& g, const std::string& fallback) {
  return flag.empty() ? in_out(g, fallback) : flag;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return nlohmann::json::parse(in);
}

DynamicsModel read_model(const std::string& path) { return dynamics_from_json(read_json(path)); }
TreePolicy read_tree(const std::string& path) { return tree_from_json(read_json(path)); }

DisturbanceTrace eval_trace(const Config& c, const std::string& weather_csv, int days) {
  if (weather_csv.empty()) return evaluation_weather(c, days > 0 ? days : c.run.eval_days);
  const auto loaded = load_disturbance_csv(weather_csv, c.plant.dt);
  if (loaded.clamped_values > 0) {
    std::cerr << "warning: " << loaded.clamped_values << " out-of-range values clamped in " << weather_csv << '\n';
  }
  return loaded.trace;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_metrics(const std::string& label, const Metrics& m) {
  std::cout << std::left << std::setw(10) << label << " energy " << std::fixed << std::setprecision(2)
            << m.total_energy_kWh << " kWh, comfort " << std::setprecision(3) << m.comfort_rate << ", degree-hours "
            << std::setprecision(2) << m.violation_degree_hours << ", ratio " << std::setprecision(4)
            << m.performance_ratio << '\n';
  std::cout.unsetf(std::ios::floatfield);
}

EpisodeTrace run_policy(const std::string& policy, const Config& c, const DisturbanceTrace& trace,
                        const TreePolicy* tree, const DynamicsModel* model, std::uint64_t seed) {
  if (policy == "baseline") {
    return run_closed_loop(BaselineController{c.reward.comfort}, trace, c.plant, c.reward, c.run.initial_temp);
  }
  if (policy == "tree") return run_closed_loop(TreeController{tree}, trace, c.plant, c.reward, c.run.initial_temp);
  MPCConfig mpc = c.mpc;
  mpc.seed = seed;
  return run_closed_loop(RsMbrlController<DynamicsModel>{model, mpc, c.reward}, trace, c.plant, c.reward,
                         c.run.initial_temp);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-tree HVAC policy extraction and verification"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "INI configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "global seed");
  app.add_option("--out", g.out, "artifact directory")->capture_default_str();

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "generate weather and run the rule-based baseline");
  int sim_days = 1;
  std::string sim_weather;
  sim->add_option("--days", sim_days, "days of generated weather")->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--weather", sim_weather, "disturbance CSV instead of generated weather");

  // collect ----------------------------------------------------------------
  auto* collect = app.add_subcommand("collect", "log baseline and epsilon-random episodes as transitions");

  // train-dynamics ---------------------------------------------------------
  auto* train = app.add_subcommand("train-dynamics", "fit the dynamics model on logged transitions");
  std::string train_data;
  train->add_option("--data", train_data, "transitions CSV (default <out>/transitions.csv)");

  // extract ----------------------------------------------------------------
  auto* extract = app.add_subcommand("extract", "label a decision dataset with the MBRL controller and fit CART");
  std::string ex_model, ex_data;
  int ex_n = 0;
  extract->add_option("--model", ex_model, "model JSON (default <out>/model.json)");
  extract->add_option("--data", ex_data, "transitions CSV (default <out>/transitions.csv)");
  extract->add_option("-n,--points", ex_n, "decision points (default from config)");

  // diagnose-noise ---------------------------------------------------------
  auto* diag = app.add_subcommand("diagnose-noise", "entropy and JSD of augmented samples per noise level");
  std::string diag_data;
  std::vector<double> diag_levels = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09};
  int diag_samples = 10000;
  diag->add_option("--data", diag_data, "transitions CSV (default <out>/transitions.csv)");
  diag->add_option("--levels", diag_levels, "noise levels")->capture_default_str();
  diag->add_option("--samples", diag_samples, "augmented samples per level")->capture_default_str();

  // verify -----------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "check criteria #1-#3, correct failing leaves, write the report");
  std::string v_tree, v_model, v_data;
  bool v_strict = false;
  verify->add_option("--tree", v_tree, "tree JSON (default <out>/tree.json)");
  verify->add_option("--model", v_model, "model JSON (default <out>/model.json)");
  verify->add_option("--data", v_data, "transitions CSV (default <out>/transitions.csv)");
  verify->add_flag("--strict", v_strict, "also list leaves straddling the comfort bounds for review");

  // deploy -----------------------------------------------------------------
  auto* deploy = app.add_subcommand("deploy", "run a policy in closed loop on the evaluation trace");
  std::string d_policy = "tree", d_tree, d_model, d_weather;
  int d_days = 0, d_repeats = 1;
  deploy->add_option("--policy", d_policy, "baseline | tree | rs_mbrl")
      ->check(CLI::IsMember({"baseline", "tree", "rs_mbrl"}))
      ->capture_default_str();
  deploy->add_option("--tree", d_tree, "tree JSON (default <out>/tree_verified.json)");
  deploy->add_option("--model", d_model, "model JSON (default <out>/model.json)");
  deploy->add_option("--weather", d_weather, "disturbance CSV instead of generated weather");
  deploy->add_option("--days", d_days, "days of generated weather (default from config)");
  deploy->add_option("--repeats", d_repeats, "runs with seeds 1..N; writes per-step setpoint spread")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  // sweep ------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "data-efficiency sweep over decision dataset sizes");
  std::string s_model, s_data;
  std::vector<std::size_t> s_sizes = {10, 50, 100, 200, 500};
  sweep->add_option("--model", s_model, "model JSON (default <out>/model.json)");
  sweep->add_option("--data", s_data, "transitions CSV (default <out>/transitions.csv)");
  sweep->add_option("--sizes", s_sizes, "dataset sizes")->capture_default_str();

  // bench ------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "per-decision latency of baseline, tree and RS-MBRL");
  std::string b_tree, b_model, b_data;
  int b_reps = 30, b_warmup = 3;
  bench->add_option("--tree", b_tree, "tree JSON (default <out>/tree_verified.json)");
  bench->add_option("--model", b_model, "model JSON (default <out>/model.json)");
  bench->add_option("--data", b_data, "transitions CSV (default <out>/transitions.csv)");
  bench->add_option("--reps", b_reps, "timed decisions per policy (>= 30)")->capture_default_str();
  bench->add_option("--warmup", b_warmup, "discarded decisions")->capture_default_str();

  // compare ----------------------------------------------------------------
  auto* compare = app.add_subcommand("compare", "baseline vs RS-MBRL vs tree on energy, comfort and latency");
  std::string c_tree, c_model, c_data, c_weather;
  int c_days = 0, c_reps = 30;
  compare->add_option("--tree", c_tree, "tree JSON (default <out>/tree_verified.json)");
  compare->add_option("--model", c_model, "model JSON (default <out>/model.json)");
  compare->add_option("--data", c_data, "transitions CSV (default <out>/transitions.csv)");
  compare->add_option("--weather", c_weather, "disturbance CSV instead of generated weather");
  compare->add_option("--days", c_days, "days of generated weather (default from config)");
  compare->add_option("--reps", c_reps, "latency repetitions")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count()) g.seed = seed_value;

  try {
    const Config c = load(g);
    const auto t0 = std::chrono::steady_clock::now();

    if (*sim) {
      const DisturbanceTrace trace =
          sim_weather.empty() ? evaluation_weather(c, sim_days) : eval_trace(c, sim_weather, 0);
      save_disturbance_csv(in_out(g, "weather.csv"), trace);
      const auto ep = run_policy("baseline", c, trace, nullptr, nullptr, 0);
      save_episode_csv(in_out(g, "trace_baseline.csv"), ep);
      const auto m = compute_metrics(ep, c.reward.comfort);
      write_json(in_out(g, "metrics_baseline.json"), to_json(m));
      std::cout << trace.size() << " steps\n";
      print_metrics("baseline", m);
    } else if (*collect) {
      const auto weather = history_weather(c);
      save_disturbance_csv(in_out(g, "history_weather.csv"), weather);
      const auto data = collect_history(c);
      save_transitions_csv(in_out(g, "transitions.csv"), data);
      std::cout << data.size() << " transitions -> " << in_out(g, "transitions.csv") << '\n';
    } else if (*train) {
      const auto data = load_transitions_csv(pick(train_data, g, "transitions.csv"));
      const auto model = fit_dynamics(data, c.train);
      write_json(in_out(g, "model.json"), to_json(model));
      std::ofstream loss(in_out(g, "loss_history.csv"));
      loss << "epoch,mse\n";
      for (std::size_t e = 0; e < model.loss_history.size(); ++e) loss << e + 1 << ',' << csv::num(model.loss_history[e]) << '\n';
      std::cout << "train rmse " << evaluate_model(model, data) << " degC";
      if (model.degenerate_targets) std::cout << " (warning: targets are constant)";
      std::cout << " in " << seconds_since(t0) << " s\n";
    } else if (*extract) {
      const auto model = read_model(pick(ex_model, g, "model.json"));
      const Augmenter history(history_inputs(load_transitions_csv(pick(ex_data, g, "transitions.csv"))));
      const auto n = static_cast<std::size_t>(ex_n > 0 ? ex_n : c.run.decision_points);
      DatasetStats stats;
      const auto records = build_decision_dataset(model, history, n, c.noise, c.mpc, c.reward, &stats);
      save_decisions_csv(in_out(g, "decisions.csv"), records);
      const auto tree = fit_cart(records, c.cart);
      write_json(in_out(g, "tree.json"), to_json(tree));
      std::cout << n << " decisions (" << stats.model_calls << " model calls, " << seconds_since(t0) << " s); tree "
                << tree.size() << " nodes, " << tree.leaf_count() << " leaves, depth " << tree.depth() << '\n';
    } else if (*diag) {
      const Augmenter history(history_inputs(load_transitions_csv(pick(diag_data, g, "transitions.csv"))));
      std::ofstream out(in_out(g, "noise_diagnostics.csv"));
      out << "noise_level,mean_entropy_bits,mean_jsd";
      for (const char* f : kFeatureNames) out << ",entropy_" << f;
      for (const char* f : kFeatureNames) out << ",jsd_" << f;
      out << '\n';
      for (std::size_t l = 0; l < diag_levels.size(); ++l) {
        NoiseConfig nc = c.noise;
        nc.noise_level = diag_levels[l];
        std::vector<FeatureVector> samples;
        Rng rng = make_stream(c.noise.seed, l);
        for (int i = 0; i < diag_samples; ++i) samples.push_back(augment_sample(history, nc, rng));
        const auto d = distribution_diagnostics<kFeatureCount>(samples, history.history());
        out << csv::num(nc.noise_level) << ',' << csv::num(d.mean_entropy) << ',' << csv::num(d.mean_jsd);
        for (double v : d.entropy_bits) out << ',' << csv::num(v);
        for (double v : d.jsd) out << ',' << csv::num(v);
        out << '\n';
        std::cout << "noise " << nc.noise_level << ": entropy " << d.mean_entropy << " bits, jsd " << d.mean_jsd << '\n';
      }
    } else if (*verify) {
      const auto tree = read_tree(pick(v_tree, g, "tree.json"));
      const auto model = read_model(pick(v_model, g, "model.json"));
      const Augmenter history(history_inputs(load_transitions_csv(pick(v_data, g, "transitions.csv"))));
      VerifyConfig vc = c.verify;
      vc.strict = vc.strict || v_strict;
      const auto paths = verify_paths(tree, vc.comfort, vc.strict);
      const auto fixed = correct_tree(tree, paths, vc.comfort);
      const auto prob = verify_probabilistic(fixed, model, history, vc);
      const auto report = make_report(tree, paths, prob, vc.safe_threshold, true);
      write_json(in_out(g, "tree_verified.json"), to_json(fixed));
      write_json(in_out(g, "report.json"), to_json(report));
      std::cout << to_json(report).dump(2) << '\n';
    } else if (*deploy) {
      const auto trace = eval_trace(c, d_weather, d_days);
      std::optional<TreePolicy> tree;
      std::optional<DynamicsModel> model;
      if (d_policy == "tree") tree = read_tree(pick(d_tree, g, "tree_verified.json"));
      if (d_policy == "rs_mbrl") model = read_model(pick(d_model, g, "model.json"));
      std::vector<EpisodeTrace> runs;
      for (int r = 1; r <= d_repeats; ++r) {
        runs.push_back(run_policy(d_policy, c, trace, tree ? &*tree : nullptr, model ? &*model : nullptr,
                                  derive_seed(c.mpc.seed, static_cast<std::uint64_t>(r))));
        const std::string suffix = d_repeats > 1 ? "_run" + std::to_string(r) : "";
        save_episode_csv(in_out(g, "trace_" + d_policy + suffix + ".csv"), runs.back());
      }
      const auto m = compute_metrics(runs.front(), c.reward.comfort);
      write_json(in_out(g, "metrics_" + d_policy + ".json"), to_json(m));
      print_metrics(d_policy, m);
      if (d_policy == "tree") {
        const auto a = audit_directions(runs.front(), trace, *tree, c.reward.comfort);
        std::cout << "wrong-direction steps: " << a.checked_violations << " of " << a.checked_steps
                  << " under verified leaves, " << a.straddling_violations << " of " << a.straddling_steps
                  << " under leaves straddling a comfort bound\n";
      }
      if (d_repeats > 1) {
        const auto spread = setpoint_spread(runs);
        std::ofstream out(in_out(g, "setpoint_spread_" + d_policy + ".csv"));
        out << "timestamp,heat_mean,heat_std,cool_mean,cool_std\n";
        for (std::size_t k = 0; k < spread.heat_std.size(); ++k) {
          out << runs.front().steps[k].timestamp << ',' << csv::num(spread.heat_mean[k]) << ','
              << csv::num(spread.heat_std[k]) << ',' << csv::num(spread.cool_mean[k]) << ','
              << csv::num(spread.cool_std[k]) << '\n';
        }
        std::cout << "max per-step setpoint std over " << d_repeats << " runs: " << spread.max_std() << '\n';
      }
    } else if (*sweep) {
      const auto model = read_model(pick(s_model, g, "model.json"));
      const Augmenter history(history_inputs(load_transitions_csv(pick(s_data, g, "transitions.csv"))));
      const SweepSetup setup{c.noise, c.mpc, c.reward, c.cart, c.plant, c.run.initial_temp};
      const auto rows = data_efficiency_sweep(model, history, s_sizes, evaluation_weather(c, c.run.eval_days), setup);
      std::ofstream out(in_out(g, "sweep.csv"));
      out << "n,performance_ratio,comfort_rate,energy_kWh,tree_nodes,tree_leaves,corrected\n";
      for (const auto& r : rows) {
        out << r.n << ',' << csv::num(r.performance_ratio) << ',' << csv::num(r.comfort_rate) << ','
            << csv::num(r.energy_kWh) << ',' << r.tree_nodes << ',' << r.tree_leaves << ',' << r.corrected << '\n';
        std::cout << "n=" << r.n << " ratio " << r.performance_ratio << " nodes " << r.tree_nodes << '\n';
      }
    } else if (*bench || *compare) {
      const bool is_compare = compare->parsed();
      const auto tree = read_tree(pick(is_compare ? c_tree : b_tree, g, "tree_verified.json"));
      const auto model = read_model(pick(is_compare ? c_model : b_model, g, "model.json"));
      const auto inputs = history_inputs(load_transitions_csv(pick(is_compare ? c_data : b_data, g, "transitions.csv")));
      const int reps = is_compare ? c_reps : b_reps;
      const int warmup = is_compare ? 3 : b_warmup;
      const RsMbrlController<DynamicsModel> rs{&model, c.mpc, c.reward};
      const BaselineController base{c.reward.comfort};
      const TreeController tc{&tree};
      const LatencyStats lat[3] = {
          bench_latency([&](const FeatureVector& x) { return base.decide(x); }, inputs, warmup, reps),
          bench_latency([&](const FeatureVector& x) { return rs.decide(x); }, inputs, warmup, reps),
          bench_latency([&](const FeatureVector& x) { return tc.decide(x); }, inputs, warmup, reps)};
      const char* names[3] = {"baseline", "rs_mbrl", "tree"};
      if (!is_compare) {
        std::ofstream out(in_out(g, "bench.csv"));
        out << "policy,mean_ms,std_ms,reps\n";
        for (int i = 0; i < 3; ++i) {
          out << names[i] << ',' << csv::num(lat[i].mean_ms) << ',' << csv::num(lat[i].std_ms) << ',' << lat[i].reps << '\n';
          std::cout << names[i] << ": " << lat[i].mean_ms << " +- " << lat[i].std_ms << " ms\n";
        }
        std::cout << "speedup rs_mbrl/tree: " << lat[1].mean_ms / lat[2].mean_ms << "x\n";
      } else {
        const auto trace = eval_trace(c, c_weather, c_days);
        Metrics m[3];
        for (int i = 0; i < 3; ++i) {
          m[i] = compute_metrics(run_policy(names[i], c, trace, &tree, &model, c.mpc.seed), c.reward.comfort);
        }
        std::ofstream csv_out(in_out(g, "compare.csv"));
        std::ofstream md(in_out(g, "compare.md"));
        csv_out << "policy,energy_kWh,comfort_rate,violation_degree_hours,performance_ratio,latency_mean_ms,latency_std_ms\n";
        md << "| policy | energy (kWh) | comfort rate | degree-hours | ratio | latency (ms) |\n"
           << "|---|---:|---:|---:|---:|---:|\n";
        for (int i = 0; i < 3; ++i) {
          csv_out << names[i] << ',' << csv::num(m[i].total_energy_kWh) << ',' << csv::num(m[i].comfort_rate) << ','
                  << csv::num(m[i].violation_degree_hours) << ',' << csv::num(m[i].performance_ratio) << ','
                  << csv::num(lat[i].mean_ms) << ',' << csv::num(lat[i].std_ms) << '\n';
          std::ostringstream row;
          row << std::fixed << "| " << names[i] << " | " << std::setprecision(2) << m[i].total_energy_kWh << " | "
              << std::setprecision(3) << m[i].comfort_rate << " | " << std::setprecision(2)
              << m[i].violation_degree_hours << " | " << std::setprecision(4) << m[i].performance_ratio << " | "
              << std::setprecision(4) << lat[i].mean_ms << " |\n";
          md << row.str();
        }
        md << "\nThe baseline is a rule-based assumption: occupied hours use the rounded comfort bounds as "
              "setpoints, unoccupied hours use the off pair (15, 30).\n";
        md.close();
        std::cout << std::ifstream(in_out(g, "compare.md")).rdbuf();
      }
    }
  } catch (const ClosedLoopAborted& e) {
    save_episode_csv(in_out(g, "trace_partial.csv"), e.partial);
    std::cerr << "error: " << e.what() << " (partial trace in " << in_out(g, "trace_partial.csv") << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
