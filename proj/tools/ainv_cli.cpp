// Command-line front end: dataset generation, training, lambda sweeps,
// classical baselines, gradient verification, and checkpoint evaluation.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ainv/experiments.hpp"
#include "ainv/ops.hpp"

namespace fs = std::filesystem;
using namespace ainv;

namespace {

Dataset load_normalized(const std::string& path) {
  Dataset ds = read_dataset(path);
  normalize_dataset(ds);
  return ds;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void emit_reports(const ExperimentSpec& spec, const std::string& mode,
                  const std::vector<RepResult>& reps, bool scatter) {
  ensure_dir(spec.out_dir);
  const std::vector<ResultRow> rows = aggregate(reps);
  write_raw_csv(join(spec.out_dir, "raw.csv"), reps);
  write_results_csv(join(spec.out_dir, "results.csv"), rows);
  if (scatter) write_scatter_csv(join(spec.out_dir, "sweep_scatter.csv"), rows);
  write_manifest(join(spec.out_dir, "manifest.txt"), spec, mode);
  for (const auto& r : rows) {
    std::cout << r.method << " lambda=" << r.lambda
              << " id_val=" << r.id_val_mean << " adv_val=" << r.adv_val_mean
              << " test=" << r.test_mean << " (" << r.repetitions << " reps)\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-invariant multichannel time-series identification"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads,
                 "Eigen threads for matrix products (default 1)");

  // --- gen -----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "key = value synth config file");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string train_data, train_mode = "loso", train_out = "out",
              train_config;
  int train_session = 0;
  double train_lambda = 0.0;
  uint64_t train_seed = 1;
  TrainConfig train_cfg;
  train_cmd->add_option("--data", train_data, "dataset path")->required();
  train_cmd->add_option("--mode", train_mode, "loso|within")
      ->check(CLI::IsMember({"loso", "within"}));
  train_cmd->add_option("--test-session", train_session,
                        "held-out (loso) or target (within) session");
  train_cmd->add_option("--lambda", train_lambda, "adversarial loss weight");
  train_cmd->add_option("--seed", train_seed, "run seed");
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->add_option("--config", train_config,
                        "key = value training config file");
  train_cmd->add_option("--batch-size", train_cfg.batch_size, "batch size");
  train_cmd->add_option("--max-passes", train_cfg.max_passes,
                        "maximum training-set passes");
  train_cmd->add_option("--patience", train_cfg.patience,
                        "early-stopping patience in passes");
  train_cmd->add_option("--lr", train_cfg.lr, "Adam learning rate");

  // --- sweep ---------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "LOSO lambda sweep");
  std::string sweep_data, sweep_out = "out", sweep_config;
  std::vector<double> sweep_lambdas{0, 0.005, 0.01, 0.02, 0.05, 0.2};
  int sweep_session = 0, sweep_reps = 10, sweep_jobs = 1;
  uint64_t sweep_seed = 1;
  TrainConfig sweep_cfg;
  sweep->add_option("--data", sweep_data, "dataset path")->required();
  sweep->add_option("--lambdas", sweep_lambdas, "lambda grid")->delimiter(',');
  sweep->add_option("--test-session", sweep_session, "held-out session");
  sweep->add_option("--reps", sweep_reps, "repetitions per lambda");
  sweep->add_option("--seed", sweep_seed, "base seed");
  sweep->add_option("--jobs", sweep_jobs, "parallel repetitions");
  sweep->add_option("--out", sweep_out, "output directory");
  sweep->add_option("--config", sweep_config, "training config file");
  sweep->add_option("--batch-size", sweep_cfg.batch_size, "batch size");
  sweep->add_option("--max-passes", sweep_cfg.max_passes, "maximum passes");
  sweep->add_option("--patience", sweep_cfg.patience, "early-stop patience");
  sweep->add_option("--lr", sweep_cfg.lr, "Adam learning rate");

  // --- baseline ------------------------------------------------------------
  auto* baseline = app.add_subcommand("baseline", "Classical LOSO baselines");
  std::string base_data, base_method = "spectral", base_out = "out";
  int base_session = 0, base_reps = 1, base_jobs = 1;
  uint64_t base_seed_v = 1;
  baseline->add_option("--data", base_data, "dataset path")->required();
  baseline->add_option("--method", base_method, "spectral|pca")
      ->check(CLI::IsMember({"spectral", "pca"}));
  baseline->add_option("--test-session", base_session, "held-out session");
  baseline->add_option("--reps", base_reps, "repetitions (split seeds)");
  baseline->add_option("--seed", base_seed_v, "base seed");
  baseline->add_option("--jobs", base_jobs, "parallel repetitions");
  baseline->add_option("--out", base_out, "output directory");

  // --- gradcheck -----------------------------------------------------------
  app.add_subcommand("gradcheck",
                     "Finite-difference verification of all layer gradients");

  // --- eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  std::string eval_ckpt, eval_data;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset path")->required();

  CLI11_PARSE(app, argc, argv);
  set_compute_threads(threads);

  try {
    if (gen->parsed()) {
      SynthConfig config;
      if (!gen_config.empty())
        config = synth_config_from_kv(parse_kv_file(gen_config));
      const Dataset ds = synth_generate(config);
      write_dataset(gen_out, ds);
      std::cout << "wrote " << ds.size() << " epochs (S=" << config.subjects
                << ", R=" << config.sessions << ", C=" << config.channels
                << ", T=" << config.samples << ") to " << gen_out << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (!train_config.empty())
        apply_train_overrides(train_cfg, parse_kv_file(train_config));
      const Dataset ds = load_normalized(train_data);
      ensure_dir(train_out);

      Model best;
      TrainHistory history;
      if (train_mode == "within") {
        if (train_lambda != 0.0)
          throw ConfigError("within-session training is non-adversarial");
        const WithinSessionSplit split =
            split_within_session(ds, train_session, train_seed);
        Model model = build_model(EncoderConfig{ds.header.channels,
                                                ds.header.samples},
                                  ds.header.subjects, 0, train_seed);
        train_cfg.lambda = 0.0;
        train_cfg.seed = train_seed;
        TrainResult res = train(std::move(model), split.train, split.val,
                                train_cfg);
        const EvalResult test =
            evaluate(res.best, split.test, EvalTarget::kIdentifier);
        std::cout << "within-session test accuracy " << test.accuracy << "\n";
        best = std::move(res.best);
        history = std::move(res.history);
        save_model(join(train_out, "model.ainv"), best);
      } else {
        const LosoSplit split = split_loso(ds, train_session, train_seed);
        const int r_train = static_cast<int>(split.session_label_map.size());
        if (r_train < 2)
          throw ConfigError("loso training needs >= 2 training sessions");
        Model model = build_model(EncoderConfig{ds.header.channels,
                                                ds.header.samples},
                                  ds.header.subjects, r_train, train_seed);
        train_cfg.lambda = train_lambda;
        train_cfg.seed = train_seed;
        TrainResult res = train(std::move(model), split.train, split.val,
                                train_cfg, &split.session_label_map);
        const EvalResult id_val =
            evaluate(res.best, split.val, EvalTarget::kIdentifier);
        const EvalResult adv_val = evaluate(
            res.best, split.val, EvalTarget::kAdversary, &split.session_label_map);
        const EvalResult test =
            evaluate(res.best, split.test, EvalTarget::kIdentifier);
        std::cout << "loso id_val=" << id_val.accuracy
                  << " adv_val=" << adv_val.accuracy
                  << " test=" << test.accuracy << "\n";
        best = std::move(res.best);
        history = std::move(res.history);
        save_model(join(train_out, "model.ainv"), best,
                   &split.session_label_map);
      }
      write_history_csv(join(train_out, "history.csv"), history);
      return 0;
    }

    if (sweep->parsed()) {
      if (!sweep_config.empty())
        apply_train_overrides(sweep_cfg, parse_kv_file(sweep_config));
      ExperimentSpec spec;
      spec.dataset_path = sweep_data;
      spec.test_session = sweep_session;
      spec.lambdas = sweep_lambdas;
      spec.train = sweep_cfg;
      spec.repetitions = sweep_reps;
      spec.base_seed = sweep_seed;
      spec.out_dir = sweep_out;
      spec.jobs = sweep_jobs;
      const Dataset ds = load_normalized(sweep_data);
      const std::vector<RepResult> reps = run_loso(spec, ds);
      emit_reports(spec, "sweep", reps, /*scatter=*/true);
      return 0;
    }

    if (baseline->parsed()) {
      ExperimentSpec spec;
      spec.dataset_path = base_data;
      spec.test_session = base_session;
      spec.repetitions = base_reps;
      spec.base_seed = base_seed_v;
      spec.out_dir = base_out;
      spec.jobs = base_jobs;
      const Dataset ds = load_normalized(base_data);
      const std::vector<RepResult> reps = run_baselines(
          spec, ds,
          base_method == "pca" ? BaselineMethod::kPca : BaselineMethod::kSpectral);
      emit_reports(spec, "baseline-" + base_method, reps, /*scatter=*/false);
      return 0;
    }

    if (app.get_subcommand("gradcheck")->parsed())
      return cmd_gradcheck(std::cout);

    if (eval_cmd->parsed()) {
      LoadedModel loaded = load_model(eval_ckpt);
      const Dataset ds = load_normalized(eval_data);
      const EvalResult id =
          evaluate(loaded.model, ds, EvalTarget::kIdentifier);
      std::cout << "identifier accuracy=" << id.accuracy
                << " mean_ce=" << id.mean_ce << "\n";
      if (loaded.model.adversary && !loaded.session_label_map.empty()) {
        bool coverable = true;
        for (const auto& rec : ds.records)
          if (!loaded.session_label_map.count(rec.session)) {
            coverable = false;
            break;
          }
        if (coverable) {
          const EvalResult adv = evaluate(loaded.model, ds,
                                          EvalTarget::kAdversary,
                                          &loaded.session_label_map);
          std::cout << "adversary accuracy=" << adv.accuracy
                    << " mean_ce=" << adv.mean_ce << "\n";
        } else {
          std::cout << "adversary skipped: dataset contains sessions outside "
                       "the training label map\n";
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
