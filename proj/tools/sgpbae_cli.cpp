#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sgpbae/commands.hpp"

namespace {

using namespace sgpbae;

int guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ChainCountTooSmall& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NoAuxColumns& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const MissingCheckpoint& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::runtime_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

// Auxiliary-input file: header row naming the inputs, one row per query.
RowMat parse_x_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header in " + path);
  const Eigen::Index dims =
      1 + static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    Eigen::Index got = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(std::stod(cell));
      ++got;
    }
    if (got != dims) throw ParseError("ragged row in " + path);
    ++rows;
  }
  RowMat x(rows, dims);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index d = 0; d < dims; ++d)
      x(i, d) = values[static_cast<std::size_t>(i * dims + d)];
  return x;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian autoencoders with sparse Gaussian-process latent priors"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "sample the posterior and write a checkpoint");
  std::string config_path, data_path, out_path;
  std::int64_t seed_override = -1;
  int chains_override = 0;
  train_cmd->add_option("--config", config_path, "key=value config file")->required();
  train_cmd->add_option("--data", data_path, "training data CSV")->required();
  train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
  train_cmd->add_option("--seed", seed_override, "override the config seed");
  train_cmd->add_option("--chains", chains_override, "override the chain count");
  train_cmd->callback([&]() {
    RunConfig config = RunConfig::parse_file(config_path);
    if (seed_override >= 0) {
      config.training.seed = static_cast<std::uint64_t>(seed_override);
    }
    if (chains_override > 0) config.chains = chains_override;
    const Dataset data = load_csv(data_path, config.data);
    const TrainOutcome outcome = run_train(config, data, out_path);
    std::cout << "checkpoints:";
    for (const auto& p : outcome.checkpoint_paths) std::cout << ' ' << p;
    std::cout << "\nreport: " << outcome.report_path << "\n";
  });

  // ---- generate ----
  auto* gen_cmd = app.add_subcommand("generate", "conditional generation at new inputs");
  std::string ckpt_path, x_inline, x_file, gen_out;
  int group = 0;
  std::int64_t gen_seed = 0;
  gen_cmd->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
  gen_cmd->add_option("--x", x_inline, "comma list of 1-d auxiliary inputs");
  gen_cmd->add_option("--x-file", x_file, "CSV of auxiliary inputs (header row)");
  gen_cmd->add_option("--group", group, "latent GP instance to condition on");
  gen_cmd->add_option("--seed", gen_seed, "rng seed");
  gen_cmd->add_option("--out", gen_out, "output CSV")->required();
  gen_cmd->callback([&]() {
    RowMat x;
    if (!x_file.empty()) {
      x = parse_x_file(x_file);
    } else if (!x_inline.empty()) {
      std::istringstream ss(x_inline);
      std::string cell;
      std::vector<double> values;
      while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
      x = RowMat(static_cast<Eigen::Index>(values.size()), 1);
      for (std::size_t i = 0; i < values.size(); ++i)
        x(static_cast<Eigen::Index>(i), 0) = values[i];
    } else {
      throw ConfigError("generate needs --x or --x-file");
    }
    run_generate(ckpt_path, x, group, static_cast<std::uint64_t>(gen_seed), gen_out);
    std::cout << "wrote " << gen_out << "\n";
  });

  // ---- impute ----
  auto* imp_cmd = app.add_subcommand("impute", "fill missing entries of a dataset");
  std::string imp_ckpt, imp_data, imp_truth, imp_out;
  std::int64_t imp_seed = 0;
  imp_cmd->add_option("--checkpoint", imp_ckpt, "trained checkpoint")->required();
  imp_cmd->add_option("--data", imp_data, "dataset CSV with missing cells")->required();
  imp_cmd->add_option("--truth", imp_truth, "complete CSV for scoring");
  imp_cmd->add_option("--seed", imp_seed, "rng seed");
  imp_cmd->add_option("--out", imp_out, "filled dataset CSV")->required();
  imp_cmd->callback([&]() {
    const Checkpoint ckpt = load_checkpoint(imp_ckpt);
    const RunConfig embedded = RunConfig::parse_string(ckpt.config_echo);
    const Dataset data = load_csv(imp_data, embedded.data);
    Dataset truth;
    const bool have_truth = !imp_truth.empty();
    if (have_truth) truth = load_csv(imp_truth, embedded.data);
    const ImputeOutcome outcome =
        run_impute(imp_ckpt, data, have_truth ? &truth : nullptr,
                   static_cast<std::uint64_t>(imp_seed), imp_out);
    if (!outcome.any_missing) {
      std::cout << "no missing entries; nothing to impute\n";
      return;
    }
    std::cout << "wrote " << outcome.filled_csv << "\n";
    if (!outcome.report.empty()) std::cout << outcome.report;
  });

  // ---- diagnose ----
  auto* diag_cmd = app.add_subcommand("diagnose", "scale-reduction diagnostic over chains");
  std::vector<std::string> diag_ckpts;
  std::string diag_data, diag_out = "diagnose";
  Eigen::Index diag_dims = 256;
  diag_cmd->add_option("--checkpoints", diag_ckpts, "two or more chain checkpoints")
      ->required()
      ->expected(-2);
  diag_cmd->add_option("--data", diag_data, "dataset CSV for probe inputs")->required();
  diag_cmd->add_option("--out", diag_out, "output prefix");
  diag_cmd->add_option("--max-dims", diag_dims, "cap on traced dimensions");
  diag_cmd->callback([&]() {
    const Checkpoint first = load_checkpoint(diag_ckpts.front());
    const RunConfig embedded = RunConfig::parse_string(first.config_echo);
    const Dataset data = load_csv(diag_data, embedded.data);
    const DiagnoseOutcome outcome =
        run_diagnose(diag_ckpts, data, diag_dims, diag_out);
    std::cout << outcome.report;
  });

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "write synthetic datasets");
  std::string synth_kind, synth_out;
  int synth_n = 10;
  std::int64_t synth_seed = 0;
  double synth_lengthscale = 2.0, synth_missing = 0.3;
  int synth_pgm = 0;
  synth_cmd->add_option("kind", synth_kind, "moving-ball | rotated-glyphs | correlated-gp")
      ->required();
  synth_cmd->add_option("--n", synth_n, "videos / angles / rows");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--out", synth_out, "output prefix")->required();
  synth_cmd->add_option("--lengthscale", synth_lengthscale, "GP lengthscale");
  synth_cmd->add_option("--missing-fraction", synth_missing, "correlated-gp only");
  synth_cmd->add_option("--pgm", synth_pgm, "dump this many frames as PGM");
  synth_cmd->callback([&]() {
    CsvSpec csv;
    if (synth_kind == "moving-ball") {
      MovingBallConfig cfg;
      cfg.n_videos = synth_n;
      cfg.gp_lengthscale = synth_lengthscale;
      cfg.seed = static_cast<std::uint64_t>(synth_seed);
      const MovingBall mb = generate_moving_ball(cfg);
      csv.aux_columns = {"t"};
      csv.group_column = "video";
      save_csv(mb.data, synth_out + "_data.csv", csv);
      // ground-truth trajectories for scoring
      std::ofstream truth(synth_out + "_truth.csv");
      truth << "video,t,x,y\n";
      char buf[40];
      for (std::size_t v = 0; v < mb.trajectories.size(); ++v) {
        const auto& traj = mb.trajectories[v];
        for (Eigen::Index t = 0; t < traj.rows(); ++t) {
          truth << v << ',' << (t + 1);
          std::snprintf(buf, sizeof(buf), "%.17g", traj(t, 0));
          truth << ',' << buf;
          std::snprintf(buf, sizeof(buf), "%.17g", traj(t, 1));
          truth << ',' << buf << "\n";
        }
      }
      for (int f = 0; f < synth_pgm && f < mb.data.size(); ++f) {
        write_pgm(synth_out + "_frame" + std::to_string(f) + ".pgm",
                  mb.data.y.row(f).transpose(), cfg.frame_size);
      }
      std::cout << "wrote " << synth_out << "_data.csv and "
                << synth_out << "_truth.csv\n";
    } else if (synth_kind == "rotated-glyphs") {
      const Dataset d = generate_rotated_glyphs(
          synth_n, static_cast<std::uint64_t>(synth_seed));
      csv.aux_columns = {"angle"};
      save_csv(d, synth_out + "_data.csv", csv);
      for (int f = 0; f < synth_pgm && f < d.size(); ++f) {
        write_pgm(synth_out + "_frame" + std::to_string(f) + ".pgm",
                  d.y.row(f).transpose(), 32);
      }
      std::cout << "wrote " << synth_out << "_data.csv\n";
    } else if (synth_kind == "correlated-gp") {
      CorrelatedGpConfig cfg;
      cfg.n = synth_n;
      cfg.lengthscale = synth_lengthscale;
      cfg.missing_fraction = synth_missing;
      cfg.seed = static_cast<std::uint64_t>(synth_seed);
      const CorrelatedGp cg = generate_correlated_outputs(cfg);
      csv.aux_columns = {"t"};
      save_csv(cg.data, synth_out + "_data.csv", csv);
      Dataset full = cg.data;
      full.y = cg.truth;
      full.mask.setOnes();
      save_csv(full, synth_out + "_truth.csv", csv);
      std::cout << "wrote " << synth_out << "_data.csv and "
                << synth_out << "_truth.csv\n";
    } else {
      throw ConfigError("unknown synth kind '" + synth_kind + "'");
    }
  });

  int usage_rc = kExitOk;
  const int rc = guarded([&]() {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      usage_rc = code == 0 ? kExitOk : kExitConfig;
    }
  });
  return rc != kExitOk ? rc : usage_rc;
}
