// ddcsp: guided discrete diffusion for Sudoku-style constraint satisfaction.
//
// Subcommands: gen-data, train-denoiser, train-value, solve, eval,
// sedd-sample, report. A key=value config file (with [sections]) supplies
// defaults; explicit flags win.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "ddcsp/samplers.hpp"
#include "ddcsp/report.hpp"
#include "ddcsp/value_net.hpp"

namespace {

using namespace ddcsp;

struct GlobalOpts {
  std::string config_path;
  std::string workdir;
  KeyValues config;

  std::string resolve(const std::string& path) const {
    if (workdir.empty() || path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(workdir) / p).string();
  }
};

// Config file value wins over the built-in default; an explicit flag wins
// over both.
void apply_kv(const KeyValues& kv, const std::string& key, CLI::Option* opt) {
  if (opt->count() > 0) return;
  auto v = kv.get(key);
  if (!v) return;
  opt->clear();
  if (!opt->get_expected_min() && opt->get_items_expected_max() == 0) {
    // flag: truthy values set it
    if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") opt->add_result("true");
    return;
  }
  opt->add_result(*v);
}

Schedule schedule_for(int order, int num_steps) {
  return make_linear_mask_schedule(num_steps > 0 ? num_steps : default_num_steps(order));
}

struct SamplerSettings {
  std::string kind = "mlm";  // mlm | sedd | oracle
  std::string checkpoint;
  int num_steps = 0;  // 0 = per-order default
  int stride = 1;
  bool guidance = false;
  GuidanceConfig gcfg;
  SeddConfig sedd;
  std::string sigma_kind = "constant";
  double sigma = 14.0;

  std::vector<std::pair<std::string, std::string>> echo(uint64_t seed, int samples) const {
    KeyValues kv;
    kv.set("sampler", kind);
    if (kind == "mlm") {
      kv.set_int("T", num_steps);
      kv.set_int("stride", stride);
      kv.set_bool("guidance", guidance);
      if (guidance) {
        kv.set_int("guidance.steps", gcfg.steps);
        kv.set_double("guidance.eta", gcfg.eta);
        kv.set_double("guidance.lambda", gcfg.kl_weight);
        kv.set_double("guidance.tau", gcfg.tau);
        kv.set_bool("guidance.hard", gcfg.hard);
        kv.set_int("guidance.every", gcfg.every);
        kv.set("guidance.value", gcfg.value_source);
      }
    } else if (kind == "sedd") {
      kv.set_double("sedd.horizon", sedd.horizon);
      kv.set_double("sedd.dt", sedd.dt);
      kv.set("sedd.mode", sedd.tau_leap ? "tau-leap" : "single-jump");
      kv.set("sedd.sigma_kind", sigma_kind);
      kv.set_double("sedd.sigma", sigma);
    }
    kv.set_int("seed", static_cast<long>(seed));
    kv.set_int("samples_per_puzzle", samples);
    return kv.items();
  }
};

ValueFunction build_value_function(const GuidanceConfig& gcfg, const GlobalOpts& g, int order) {
  if (gcfg.value_source == "analytic") return make_analytic_value(order);
  if (gcfg.value_source == "learned") {
    if (gcfg.value_ckpt.empty()) {
      throw ConfigError("guidance.value=learned requires guidance.value_ckpt");
    }
    const auto net = value_net_from_checkpoint(load_checkpoint(g.resolve(gcfg.value_ckpt)));
    if (net.cfg.order != order) throw ConfigError("value checkpoint order mismatch");
    return make_learned_value(value_net_to_double(net));
  }
  throw ConfigError("guidance.value must be 'analytic' or 'learned'");
}

// Builds the candidate sampler described by the settings. The returned spec
// derives all randomness from the rng handed to it by run_eval/solve.
SamplerSpec build_sampler(const SamplerSettings& s, const GlobalOpts& g, int order) {
  if (s.kind == "oracle") return make_oracle_sampler();

  if (s.kind == "mlm") {
    const auto ckpt = load_checkpoint(g.resolve(s.checkpoint));
    auto model = std::make_shared<const DenoiserModel<float>>(denoiser_from_checkpoint(ckpt));
    if (model->cfg.order != order) throw ConfigError("denoiser checkpoint order mismatch");
    const int steps = s.num_steps > 0 ? s.num_steps : std::min(model->cfg.max_t,
                                                               default_num_steps(order));
    const Schedule schedule = make_linear_mask_schedule(steps);
    if (s.guidance) {
      return make_guided_mlm_sampler(model, schedule, s.stride,
                                     build_value_function(s.gcfg, g, order), s.gcfg);
    }
    return make_mlm_sampler(model, schedule, s.stride);
  }

  if (s.kind == "sedd") {
    const auto ckpt = load_checkpoint(g.resolve(s.checkpoint));
    auto model = std::make_shared<const DenoiserModel<float>>(denoiser_from_checkpoint(ckpt));
    if (model->cfg.order != order) throw ConfigError("denoiser checkpoint order mismatch");
    const RateSchedule rate = s.sigma_kind == "geometric"
                                  ? RateSchedule::geometric(0.1, s.sigma, s.sedd.horizon)
                                  : RateSchedule::constant(s.sigma);
    const Schedule discrete = make_linear_mask_schedule(model->cfg.max_t);
    return make_sedd_sampler(denoiser_ratios(model, discrete, rate), rate, s.sedd, order);
  }
  throw ConfigError("unknown sampler kind: " + s.kind);
}

void add_sampler_options(CLI::App* cmd, SamplerSettings& s, bool allow_kind) {
  if (allow_kind) {
    cmd->add_option("--sampler", s.kind, "Sampler: mlm, sedd, or oracle")
        ->check(CLI::IsMember({"mlm", "sedd", "oracle"}));
  }
  cmd->add_option("--checkpoint", s.checkpoint, "Denoiser checkpoint path");
  cmd->add_option("--num-steps,-T", s.num_steps, "Diffusion steps (0 = per-order default)");
  cmd->add_option("--stride", s.stride, "Reverse steps skipped at once");
  cmd->add_flag("--guidance", s.guidance, "Refine logits with the value function");
  cmd->add_option("--guidance-steps", s.gcfg.steps, "Refinement iterations per timestep");
  cmd->add_option("--guidance-eta", s.gcfg.eta, "Refinement step size");
  cmd->add_option("--guidance-lambda", s.gcfg.kl_weight, "KL regularization weight");
  cmd->add_option("--guidance-tau", s.gcfg.tau, "Gumbel-softmax temperature");
  cmd->add_option("--guidance-hard", s.gcfg.hard, "Straight-through discretization");
  cmd->add_option("--guidance-every", s.gcfg.every, "Refine every Nth reverse timestep");
  cmd->add_option("--guidance-value", s.gcfg.value_source, "Value source: analytic or learned");
  cmd->add_option("--guidance-value-ckpt", s.gcfg.value_ckpt, "Learned value checkpoint");
  cmd->add_option("--sedd-dt", s.sedd.dt, "Euler step size");
  cmd->add_option("--sedd-horizon", s.sedd.horizon, "Continuous-time horizon");
  cmd->add_option("--sedd-mode", s.sedd.tau_leap,
                  "0 = single-jump, 1 = tau-leap")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, bool>{{"single-jump", false}, {"tau-leap", true}},
          CLI::ignore_case));
  cmd->add_option("--sigma-kind", s.sigma_kind, "Rate schedule: constant or geometric");
  cmd->add_option("--sigma", s.sigma, "Masking rate (constant) or max rate (geometric)");
}

void apply_sampler_config(CLI::App* cmd, const KeyValues& kv) {
  const std::vector<std::pair<std::string, std::string>> mapping = {
      {"sampler.kind", "--sampler"},
      {"sampler.checkpoint", "--checkpoint"},
      {"sampler.T", "--num-steps"},
      {"sampler.stride", "--stride"},
      {"sampler.guidance", "--guidance"},
      {"guidance.steps", "--guidance-steps"},
      {"guidance.eta", "--guidance-eta"},
      {"guidance.lambda", "--guidance-lambda"},
      {"guidance.tau", "--guidance-tau"},
      {"guidance.hard", "--guidance-hard"},
      {"guidance.every", "--guidance-every"},
      {"guidance.value", "--guidance-value"},
      {"guidance.value_ckpt", "--guidance-value-ckpt"},
      {"sedd.dt", "--sedd-dt"},
      {"sedd.horizon", "--sedd-horizon"},
      {"sedd.mode", "--sedd-mode"},
      {"sedd.sigma_kind", "--sigma-kind"},
      {"sedd.sigma", "--sigma"},
  };
  for (const auto& [key, flag] : mapping) {
    if (auto* opt = cmd->get_option_no_throw(flag)) apply_kv(kv, key, opt);
  }
}

int cmd_gen_data(const GlobalOpts& g, int order, int count, int givens, bool unique,
                 const std::string& kind, uint64_t seed, const std::string& out) {
  Rng rng(seed);
  Dataset ds;
  ds.kind = kind == "pairs" ? DatasetKind::kPairs : DatasetKind::kSolutions;
  for (int i = 0; i < count; ++i) {
    if (ds.kind == DatasetKind::kPairs) {
      auto [puzzle, solution] = generate_puzzle(rng, order, givens, unique);
      ds.boards.push_back(puzzle);
      ds.boards.push_back(solution);
    } else {
      ds.boards.push_back(random_solution(order, rng));
    }
  }
  save_dataset(ds, g.resolve(out));
  std::printf("wrote %zu lines to %s\n", ds.boards.size(), out.c_str());
  return 0;
}

int cmd_solve(const GlobalOpts& g, const SamplerSettings& settings, const std::string& puzzle_line,
              uint64_t seed) {
  const Board puzzle = parse_board(puzzle_line);
  SamplerSpec sampler = build_sampler(settings, g, puzzle.order);
  Rng rng = derive_rng(seed ^ fnv1a64(format_board(puzzle)), 0);
  const Board result = sampler.sample(puzzle, rng);
  std::printf("%s\n", format_board(result).c_str());
  const bool ok = result.complete() && count_violations(result) == 0;
  std::fprintf(stderr, "%s (violations=%d)\n", ok ? "solved" : "not solved",
               count_violations(result));
  return ok ? 0 : 1;
}

int cmd_eval(const GlobalOpts& g, const SamplerSettings& settings, const std::string& data_path,
             uint64_t seed, int samples, int threads, const std::string& csv_out,
             const std::string& json_out) {
  const Dataset pairs = load_dataset(g.resolve(data_path), DatasetKind::kPairs);
  if (pairs.size() == 0) throw DatasetError(data_path + ": empty eval set");
  const int order = pairs.puzzle(0).order;
  SamplerSpec sampler = build_sampler(settings, g, order);
  EvalOptions opts;
  opts.samples_per_puzzle = samples;
  opts.threads = threads;
  opts.seed = seed;
  opts.dataset_name = std::filesystem::path(data_path).filename().string();
  opts.config_echo = settings.echo(seed, samples);
  const SolveReport report = run_eval(sampler, pairs, opts);
  std::printf("%s\n", render_summary(report).c_str());
  if (!csv_out.empty()) emit_report_csv(report, g.resolve(csv_out));
  if (!json_out.empty()) emit_report_json(report, g.resolve(json_out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided discrete diffusion for constraint satisfaction (Sudoku)"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key=value config file with [sections]");
  app.add_option("--workdir", g.workdir, "Base directory for relative paths");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a Sudoku dataset");
  int gen_order = 3, gen_count = 100, gen_givens = 30;
  bool gen_unique = false;
  std::string gen_kind = "solutions", gen_out = "dataset.txt";
  uint64_t gen_seed = 1;
  gen->add_option("--order", gen_order, "Board order n (2 or 3)")->check(CLI::IsMember({2, 3}));
  gen->add_option("--count", gen_count, "Number of entries");
  gen->add_option("--givens", gen_givens, "Given cells per puzzle (pairs only)");
  gen->add_flag("--unique", gen_unique, "Require unique-solution puzzles");
  gen->add_option("--kind", gen_kind, "solutions | pairs")
      ->check(CLI::IsMember({"solutions", "pairs"}));
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--out", gen_out, "Output path");

  // train-denoiser
  auto* td = app.add_subcommand("train-denoiser", "Train the MLM denoiser");
  std::string td_data, td_ckpt = "denoiser.ckpt", td_metrics;
  DenoiserConfig td_cfg;
  int td_order = 2, td_steps = 3000, td_batch = 32, td_eval_interval = 500, td_T = 0;
  double td_lr = 1e-3, td_dropout = 0.0;
  int td_warmup = 100;
  uint64_t td_seed = 1;
  int td_embed = 0, td_layers = 0, td_heads = 0, td_ffn = 0;
  td->add_option("--data", td_data, "Solutions dataset")->required();
  td->add_option("--order", td_order, "Board order")->check(CLI::IsMember({2, 3}));
  td->add_option("--steps", td_steps, "Training steps");
  td->add_option("--batch", td_batch, "Batch size");
  td->add_option("--lr", td_lr, "Learning rate");
  td->add_option("--warmup", td_warmup, "LR warmup steps");
  td->add_option("--eval-interval", td_eval_interval, "Steps between evals");
  td->add_option("-T,--num-steps", td_T, "Diffusion steps (0 = per-order default)");
  td->add_option("--embed", td_embed, "Embedding dim (0 = default)");
  td->add_option("--layers", td_layers, "Transformer layers (0 = default)");
  td->add_option("--heads", td_heads, "Attention heads (0 = default)");
  td->add_option("--ffn", td_ffn, "Feed-forward dim (0 = default)");
  td->add_option("--dropout", td_dropout, "Dropout rate");
  td->add_option("--seed", td_seed, "Init/training seed");
  td->add_option("--ckpt", td_ckpt, "Checkpoint output path");
  td->add_option("--metrics", td_metrics, "Metrics CSV path");

  // train-value
  auto* tv = app.add_subcommand("train-value", "Train the constraint value network");
  std::string tv_data, tv_ckpt = "value.ckpt";
  int tv_order = 2, tv_steps = 2000, tv_batch = 32, tv_hidden = 128, tv_max_cells = -1;
  double tv_lr = 1e-3;
  uint64_t tv_seed = 9;
  tv->add_option("--data", tv_data, "Solutions dataset")->required();
  tv->add_option("--order", tv_order, "Board order")->check(CLI::IsMember({2, 3}));
  tv->add_option("--steps", tv_steps, "Training steps");
  tv->add_option("--batch", tv_batch, "Batch size");
  tv->add_option("--lr", tv_lr, "Learning rate");
  tv->add_option("--hidden", tv_hidden, "Hidden dim");
  tv->add_option("--max-cells", tv_max_cells, "Max corrupted cells (-1 = half the board)");
  tv->add_option("--seed", tv_seed, "Seed");
  tv->add_option("--ckpt", tv_ckpt, "Checkpoint output path");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve one puzzle and print the board");
  SamplerSettings solve_settings;
  std::string solve_puzzle;
  uint64_t solve_seed = 0;
  solve->add_option("puzzle", solve_puzzle, "Puzzle line ('0' = empty)")->required();
  solve->add_option("--seed", solve_seed, "RNG seed");
  add_sampler_options(solve, solve_settings, true);

  // eval
  auto* ev = app.add_subcommand("eval", "Benchmark solve rate on a puzzle/solution dataset");
  SamplerSettings eval_settings;
  std::string eval_data, eval_csv, eval_json;
  uint64_t eval_seed = 0;
  int eval_samples = 1, eval_threads = 1;
  ev->add_option("--data", eval_data, "Pairs dataset")->required();
  ev->add_option("--seed", eval_seed, "RNG seed");
  ev->add_option("--samples", eval_samples, "Candidates per puzzle (best-of-k)");
  ev->add_option("--threads", eval_threads, "Worker threads");
  ev->add_option("--csv", eval_csv, "CSV report path");
  ev->add_option("--json", eval_json, "JSON report path");
  add_sampler_options(ev, eval_settings, true);

  // sedd-sample
  auto* ss = app.add_subcommand("sedd-sample", "Sample boards with the continuous-time sampler");
  SamplerSettings ss_settings;
  ss_settings.kind = "sedd";
  std::string ss_puzzle;
  int ss_count = 1;
  uint64_t ss_seed = 0;
  ss->add_option("--puzzle", ss_puzzle, "Optional puzzle line to infill");
  ss->add_option("--count", ss_count, "Boards to sample");
  ss->add_option("--seed", ss_seed, "RNG seed");
  add_sampler_options(ss, ss_settings, false);

  // report
  auto* rp = app.add_subcommand("report", "Merge CSV report summaries");
  std::vector<std::string> rp_inputs;
  std::string rp_out = "merged.csv";
  rp->add_option("inputs", rp_inputs, "Input CSV reports")->required();
  rp->add_option("--out", rp_out, "Merged CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!g.config_path.empty()) {
      g.config = load_kv_file(g.config_path);
      for (CLI::App* sub : {gen, td, tv, solve, ev, ss}) {
        if (sub->parsed()) apply_sampler_config(sub, g.config);
      }
      if (ev->parsed()) {
        if (auto* o = ev->get_option_no_throw("--seed")) apply_kv(g.config, "sampler.seed", o);
        if (auto* o = ev->get_option_no_throw("--samples")) {
          apply_kv(g.config, "eval.samples", o);
        }
        if (auto* o = ev->get_option_no_throw("--threads")) {
          apply_kv(g.config, "eval.threads", o);
        }
      }
      if (solve->parsed()) {
        if (auto* o = solve->get_option_no_throw("--seed")) apply_kv(g.config, "sampler.seed", o);
      }
    }

    if (gen->parsed()) {
      return cmd_gen_data(g, gen_order, gen_count, gen_givens, gen_unique, gen_kind, gen_seed,
                          gen_out);
    }
    if (td->parsed()) {
      DenoiserConfig dcfg = DenoiserConfig::defaults_for_order(td_order);
      if (td_embed > 0) dcfg.embed_dim = td_embed;
      if (td_layers > 0) dcfg.layers = td_layers;
      if (td_heads > 0) dcfg.heads = td_heads;
      if (td_ffn > 0) dcfg.ffn_dim = td_ffn;
      if (td_T > 0) dcfg.max_t = td_T;
      dcfg.dropout = td_dropout;
      dcfg.seed = td_seed;
      TrainConfig tcfg;
      tcfg.batch_size = td_batch;
      tcfg.total_steps = td_steps;
      tcfg.lr = td_lr;
      tcfg.warmup_steps = td_warmup;
      tcfg.eval_interval = td_eval_interval;
      tcfg.checkpoint_path = g.resolve(td_ckpt);
      tcfg.metrics_path = td_metrics.empty() ? "" : g.resolve(td_metrics);
      const Dataset data = load_dataset(g.resolve(td_data), DatasetKind::kSolutions);
      TrainResult result;
      train_denoiser(data, dcfg, tcfg, schedule_for(td_order, dcfg.max_t), &result);
      std::printf("final loss %.6f, eval accuracy %.4f, checkpoint %s\n", result.final_loss,
                  result.eval_accuracy, td_ckpt.c_str());
      return 0;
    }
    if (tv->parsed()) {
      ValueNetConfig vcfg;
      vcfg.order = tv_order;
      vcfg.hidden_dim = tv_hidden;
      vcfg.seed = tv_seed;
      CorruptionConfig ccfg;
      ccfg.max_cells = tv_max_cells;
      ccfg.seed = tv_seed;
      TrainConfig tcfg;
      tcfg.batch_size = tv_batch;
      tcfg.total_steps = tv_steps;
      tcfg.lr = tv_lr;
      tcfg.checkpoint_path = g.resolve(tv_ckpt);
      const Dataset data = load_dataset(g.resolve(tv_data), DatasetKind::kSolutions);
      TrainResult result;
      train_value_net(data, ccfg, vcfg, tcfg, &result);
      std::printf("final loss %.6f, checkpoint %s\n", result.final_loss, tv_ckpt.c_str());
      return 0;
    }
    if (solve->parsed()) return cmd_solve(g, solve_settings, solve_puzzle, solve_seed);
    if (ev->parsed()) {
      return cmd_eval(g, eval_settings, eval_data, eval_seed, eval_samples, eval_threads,
                      eval_csv, eval_json);
    }
    if (ss->parsed()) {
      const int order = ss_puzzle.empty() ? 2 : parse_board(ss_puzzle).order;
      std::optional<Board> puzzle;
      if (!ss_puzzle.empty()) puzzle = parse_board(ss_puzzle);
      const auto ckpt = load_checkpoint(g.resolve(ss_settings.checkpoint));
      auto model =
          std::make_shared<const DenoiserModel<float>>(denoiser_from_checkpoint(ckpt));
      if (model->cfg.order != order) throw ConfigError("denoiser checkpoint order mismatch");
      const RateSchedule rate =
          ss_settings.sigma_kind == "geometric"
              ? RateSchedule::geometric(0.1, ss_settings.sigma, ss_settings.sedd.horizon)
              : RateSchedule::constant(ss_settings.sigma);
      const Schedule discrete = make_linear_mask_schedule(model->cfg.max_t);
      const RatioModel ratios = denoiser_ratios(model, discrete, rate);
      SeddStats stats;
      for (int i = 0; i < ss_count; ++i) {
        Rng rng = derive_rng(ss_seed, static_cast<uint64_t>(i));
        const Board out =
            sedd_sample(ratios, rate, ss_settings.sedd, order, puzzle, rng, &stats);
        std::printf("%s\n", format_board(out).c_str());
      }
      std::fprintf(stderr, "steps %ld, clamped stay probabilities %ld\n", stats.steps,
                   stats.clamp_events);
      return 0;
    }
    if (rp->parsed()) {
      merge_reports_csv(rp_inputs, g.resolve(rp_out));
      std::printf("merged %zu reports into %s\n", rp_inputs.size(), rp_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
