#include "sgpbae/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace sgpbae {

namespace {

std::string chain_path(const std::string& base, int chain, int n_chains) {
  if (n_chains == 1) return base;
  const auto dot = base.rfind('.');
  if (dot == std::string::npos || base.find('/', dot) != std::string::npos) {
    return base + "_chain" + std::to_string(chain);
  }
  return base.substr(0, dot) + "_chain" + std::to_string(chain) +
         base.substr(dot);
}

}  // namespace

int thread_cap() {
  if (const char* env = std::getenv("SGPBAE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

TrainOutcome run_train(const RunConfig& config, const Dataset& data,
                       const std::string& out_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_chains = config.chains;

  std::vector<TrainResult> results(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));

  auto worker = [&](int chain) {
    try {
      TrainConfig tc = config.training;
      tc.seed = config.training.seed + static_cast<std::uint64_t>(chain);
      results[static_cast<std::size_t>(chain)] = train(data, config.model, tc);
    } catch (...) {
      errors[static_cast<std::size_t>(chain)] = std::current_exception();
    }
  };

  const int cap = std::max(1, thread_cap());
  for (int begin = 0; begin < n_chains; begin += cap) {
    std::vector<std::thread> pool;
    const int end = std::min(n_chains, begin + cap);
    for (int c = begin; c < end; ++c) pool.emplace_back(worker, c);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  TrainOutcome outcome;
  bool any_aborted = false;
  std::size_t total_samples = 0;
  for (int c = 0; c < n_chains; ++c) {
    const TrainResult& res = results[static_cast<std::size_t>(c)];
    Checkpoint ckpt;
    ckpt.spec = res.spec;
    ckpt.box = res.inducing_box;
    ckpt.encoder = res.encoder;
    ckpt.samples = res.samples;
    ckpt.config_echo = config.echo;
    const std::string path = chain_path(out_path, c, n_chains);
    save_checkpoint(ckpt, path);
    outcome.checkpoint_paths.push_back(path);
    any_aborted = any_aborted || res.aborted;
    total_samples += res.samples.size();
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  outcome.report_path = out_path + ".report";
  std::ofstream report(outcome.report_path);
  if (!report) throw IoError("cannot write " + outcome.report_path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "final_energy=%.17g\n",
                results[0].final_energy);
  report << buf;
  report << "samples=" << total_samples << "\n";
  report << "chains=" << n_chains << "\n";
  std::snprintf(buf, sizeof(buf), "wall_seconds=%.3f\n", wall);
  report << buf;
  report << "aborted=" << (any_aborted ? 1 : 0) << "\n";

  if (any_aborted) {
    throw NonFiniteGradient("a chain aborted; last-good checkpoint written");
  }
  return outcome;
}

void run_generate(const std::string& checkpoint_path,
                  const Eigen::Ref<const RowMat>& x_star, int group,
                  std::uint64_t seed, const std::string& out_csv) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Rng rng(seed);
  const Generated gen = generate(ckpt.samples, ckpt.spec, ckpt.box, x_star,
                                 group, rng);
  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot write " + out_csv);
  out << "x0";
  for (Eigen::Index d = 1; d < x_star.cols(); ++d) out << ",x" << d;
  for (Eigen::Index p = 0; p < gen.mean.cols(); ++p) out << ",mean" << p;
  for (Eigen::Index p = 0; p < gen.variance.cols(); ++p) out << ",var" << p;
  out << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < x_star.rows(); ++i) {
    for (Eigen::Index d = 0; d < x_star.cols(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", x_star(i, d));
      out << (d ? "," : "") << buf;
    }
    for (Eigen::Index p = 0; p < gen.mean.cols(); ++p) {
      std::snprintf(buf, sizeof(buf), "%.17g", gen.mean(i, p));
      out << ',' << buf;
    }
    for (Eigen::Index p = 0; p < gen.variance.cols(); ++p) {
      std::snprintf(buf, sizeof(buf), "%.17g", gen.variance(i, p));
      out << ',' << buf;
    }
    out << "\n";
  }
}

ImputeOutcome run_impute(const std::string& checkpoint_path,
                         const Dataset& data, const Dataset* truth,
                         std::uint64_t seed, const std::string& out_csv) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ImputeOutcome outcome;
  Rng rng(seed);
  Imputation imp;
  try {
    imp = impute(ckpt.samples, ckpt.spec, ckpt.encoder, data, rng);
  } catch (const NoMissing&) {
    outcome.any_missing = false;
    return outcome;
  }

  // filled dataset: observed entries kept, missing entries replaced
  Dataset filled = data;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.data_dim(); ++j) {
      if (data.mask(i, j) == 0.0) filled.y(i, j) = imp.mean(i, j);
    }
  }
  filled.mask.setOnes();
  CsvSpec spec;
  spec.aux_columns = data.aux_names;
  save_csv(filled, out_csv, spec);
  outcome.filled_csv = out_csv;

  if (truth != nullptr) {
    RowMat missing_mask = RowMat::Ones(data.size(), data.data_dim()) - data.mask;
    const Metrics m = metrics(imp.mean, imp.stddev.cwiseProduct(imp.stddev),
                              truth->y, missing_mask);
    outcome.report = metrics_report(m);
  }
  return outcome;
}

DiagnoseOutcome run_diagnose(const std::vector<std::string>& checkpoint_paths,
                             const Dataset& data, Eigen::Index max_dims,
                             const std::string& out_prefix) {
  if (checkpoint_paths.size() < 2) {
    throw ChainCountTooSmall("diagnose needs at least 2 chains");
  }
  std::vector<Checkpoint> ckpts;
  for (const auto& path : checkpoint_paths) ckpts.push_back(load_checkpoint(path));

  // deterministic probe rows spread over the first group
  const auto groups = data.rows_by_group();
  const auto& rows = groups.front();
  const Eigen::Index n_probe = std::min<Eigen::Index>(
      8, static_cast<Eigen::Index>(rows.size()));
  std::vector<Eigen::Index> probe;
  for (Eigen::Index i = 0; i < n_probe; ++i) {
    probe.push_back(rows[static_cast<std::size_t>(
        i * static_cast<Eigen::Index>(rows.size()) / n_probe)]);
  }
  RowMat x_probe(n_probe, data.aux_dim());
  RowMat y_probe(n_probe, data.data_dim());
  for (Eigen::Index i = 0; i < n_probe; ++i) {
    x_probe.row(i) = data.x.row(probe[static_cast<std::size_t>(i)]);
    y_probe.row(i) = data.y
                         .row(probe[static_cast<std::size_t>(i)])
                         .cwiseProduct(data.mask.row(probe[static_cast<std::size_t>(i)]));
  }

  const Eigen::Index p = data.data_dim();
  const Eigen::Index stride =
      std::max<Eigen::Index>(1, n_probe * p / std::max<Eigen::Index>(1, max_dims));

  std::size_t min_draws = ckpts.front().samples.size();
  for (const auto& c : ckpts) min_draws = std::min(min_draws, c.samples.size());
  if (min_draws < 2) throw std::invalid_argument("chains carry fewer than 2 draws");

  ChainSet cs;
  for (const auto& ckpt : ckpts) {
    std::vector<Eigen::VectorXd> draws;
    Rng rng(1234);  // deterministic; mean-mode prediction uses no draws
    for (std::size_t s = 0; s < min_draws; ++s) {
      const auto& sample = ckpt.samples[s];
      RowMat decoded;
      if (ckpt.spec.has_sparse_gp()) {
        RowMat current = x_probe;
        for (std::size_t l = 0; l + 1 < sample.gp_layers.size(); ++l) {
          const SparseGPPrior prior =
              prior_from_sample(sample, ckpt.spec, ckpt.box, l, 0);
          current = fitc_moments(prior, current).mean;
        }
        const SparseGPPrior last = prior_from_sample(
            sample, ckpt.spec, ckpt.box, sample.gp_layers.size() - 1, 0);
        const RowMat z = predict_latent(last, current, rng, PredictMode::Mean);
        decoded = decoder_from_sample(sample, ckpt.spec).net.forward(z);
      } else {
        const RowMat eps = RowMat::Zero(n_probe, ckpt.encoder.seed_dim);
        const RowMat z = encode(ckpt.encoder, y_probe, eps);
        decoded = decoder_from_sample(sample, ckpt.spec).net.forward(z);
      }
      Eigen::VectorXd flat(decoded.size() / stride +
                           ((decoded.size() % stride) ? 1 : 0));
      Eigen::Index at = 0;
      for (Eigen::Index k = 0; k < decoded.size(); k += stride) {
        flat[at++] = decoded.data()[k];
      }
      draws.push_back(flat);
    }
    RowMat chain(static_cast<Eigen::Index>(draws.size()), draws[0].size());
    for (std::size_t d = 0; d < draws.size(); ++d) {
      chain.row(static_cast<Eigen::Index>(d)) = draws[d].transpose();
    }
    cs.chains.push_back(std::move(chain));
  }

  DiagnoseOutcome outcome;
  const Eigen::VectorXd r = rhat(cs);
  outcome.median_rhat = median(r);
  outcome.trace_csv = out_prefix + "_traces.csv";
  export_traces(cs, outcome.trace_csv);

  char buf[128];
  std::snprintf(buf, sizeof(buf), "median_rhat=%.17g\nmax_rhat=%.17g\ndims=%lld\nchains=%zu\n",
                outcome.median_rhat, r.maxCoeff(),
                static_cast<long long>(r.size()), ckpts.size());
  outcome.report = buf;
  std::ofstream report(out_prefix + "_rhat.report");
  if (!report) throw IoError("cannot write " + out_prefix + "_rhat.report");
  report << outcome.report;
  return outcome;
}

}  // namespace sgpbae
