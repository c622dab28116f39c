#include "sgpbae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace sgpbae {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* b = value.data();
  auto [p, ec] = std::from_chars(b, b + value.size(), out);
  if (ec != std::errc() || p != b + value.size()) {
    throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  const char* b = value.data();
  auto [p, ec] = std::from_chars(b, b + value.size(), out);
  if (ec != std::errc() || p != b + value.size()) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
  }
  return out;
}

std::vector<Eigen::Index> to_index_list(const std::string& key,
                                        const std::string& value) {
  std::vector<Eigen::Index> out;
  if (trim(value).empty()) return out;
  std::istringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    out.push_back(static_cast<Eigen::Index>(to_int(key, trim(part))));
  }
  return out;
}

std::vector<std::string> to_name_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

RunConfig RunConfig::parse_string(const std::string& text) {
  RunConfig cfg;
  cfg.echo = text;

  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        " is not key=value: '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'");
    kv[key] = value;
  }

  auto take = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::pair<bool, std::string>{false, ""};
    std::pair<bool, std::string> out{true, it->second};
    kv.erase(it);
    return out;
  };

  if (auto [ok, v] = take("model.kind"); ok) {
    if (v == "bae") cfg.model.kind = ModelKind::Bae;
    else if (v == "gp-bae") cfg.model.kind = ModelKind::GpBae;
    else if (v == "sgp-bae") cfg.model.kind = ModelKind::SgpBae;
    else if (v == "dsgp-bae") cfg.model.kind = ModelKind::DeepSgpBae;
    else throw ConfigError("key 'model.kind' must be one of bae, gp-bae, sgp-bae, dsgp-bae");
  }
  if (auto [ok, v] = take("model.latent_dim"); ok)
    cfg.model.latent_dim = static_cast<Eigen::Index>(to_int("model.latent_dim", v));
  if (auto [ok, v] = take("model.decoder_hidden"); ok)
    cfg.model.decoder_hidden = to_index_list("model.decoder_hidden", v);
  if (auto [ok, v] = take("model.encoder_hidden"); ok)
    cfg.model.encoder_hidden = to_index_list("model.encoder_hidden", v);
  if (auto [ok, v] = take("model.activation"); ok) {
    if (v == "tanh") cfg.model.activation = Activation::Tanh;
    else if (v == "relu") cfg.model.activation = Activation::Relu;
    else if (v == "elu") cfg.model.activation = Activation::Elu;
    else throw ConfigError("key 'model.activation' must be tanh, relu, or elu");
  }
  if (auto [ok, v] = take("model.beta"); ok) cfg.model.beta = to_double("model.beta", v);
  if (auto [ok, v] = take("model.weight_prior_var"); ok)
    cfg.model.weight_prior_var = to_double("model.weight_prior_var", v);

  if (auto [ok, v] = take("gp.kernel"); ok) {
    if (v == "rbf_ard") cfg.model.gp.kernel.tag = KernelKind::RbfArd;
    else if (v == "periodic_1d") cfg.model.gp.kernel.tag = KernelKind::Periodic1d;
    else throw ConfigError("key 'gp.kernel' must be rbf_ard or periodic_1d");
  }
  if (auto [ok, v] = take("gp.period"); ok)
    cfg.model.gp.kernel.period = to_double("gp.period", v);
  if (auto [ok, v] = take("gp.num_inducing"); ok)
    cfg.model.gp.num_inducing = static_cast<Eigen::Index>(to_int("gp.num_inducing", v));
  if (auto [ok, v] = take("gp.sigma2"); ok)
    cfg.model.gp.sigma2 = to_double("gp.sigma2", v);
  if (auto [ok, v] = take("gp.lengthscale_prior_mean_log"); ok)
    cfg.model.gp.lengthscale_prior.mean_log = to_double("gp.lengthscale_prior_mean_log", v);
  if (auto [ok, v] = take("gp.lengthscale_prior_var_log"); ok)
    cfg.model.gp.lengthscale_prior.var_log = to_double("gp.lengthscale_prior_var_log", v);
  if (auto [ok, v] = take("gp.variance_prior_mean_log"); ok)
    cfg.model.gp.variance_prior.mean_log = to_double("gp.variance_prior_mean_log", v);
  if (auto [ok, v] = take("gp.variance_prior_var_log"); ok)
    cfg.model.gp.variance_prior.var_log = to_double("gp.variance_prior_var_log", v);
  if (auto [ok, v] = take("gp.box_expand"); ok)
    cfg.model.gp.box_expand = to_double("gp.box_expand", v);
  if (auto [ok, v] = take("gp.hidden_widths"); ok)
    cfg.model.gp.hidden_widths = to_index_list("gp.hidden_widths", v);
  if (auto [ok, v] = take("gp.fixed_lengthscales"); ok) {
    const auto parts = to_name_list(v);
    cfg.model.gp.fixed_params.log_lengthscales.resize(
        static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) {
      cfg.model.gp.fixed_params.log_lengthscales[static_cast<Eigen::Index>(i)] =
          std::log(to_double("gp.fixed_lengthscales", parts[i]));
    }
  }
  if (auto [ok, v] = take("gp.fixed_variance"); ok)
    cfg.model.gp.fixed_params.log_variance =
        std::log(to_double("gp.fixed_variance", v));

  if (auto [ok, v] = take("sghmc.step_size"); ok)
    cfg.training.sghmc.step_size = to_double("sghmc.step_size", v);
  if (auto [ok, v] = take("sghmc.momentum"); ok)
    cfg.training.sghmc.momentum_decay = to_double("sghmc.momentum", v);
  if (auto [ok, v] = take("sghmc.burn_in"); ok)
    cfg.training.sghmc.n_burn_in = to_int("sghmc.burn_in", v);
  if (auto [ok, v] = take("sghmc.num_samples"); ok)
    cfg.training.sghmc.n_samples = to_int("sghmc.num_samples", v);
  if (auto [ok, v] = take("sghmc.thinning"); ok)
    cfg.training.sghmc.thinning = to_int("sghmc.thinning", v);
  if (auto [ok, v] = take("sghmc.noise_floor"); ok)
    cfg.training.sghmc.noise_floor = to_double("sghmc.noise_floor", v);
  if (auto [ok, v] = take("sghmc.vhat_floor"); ok)
    cfg.training.sghmc.vhat_floor = to_double("sghmc.vhat_floor", v);
  if (auto [ok, v] = take("sghmc.grad_clip"); ok)
    cfg.training.sghmc.grad_clip = to_double("sghmc.grad_clip", v);

  if (auto [ok, v] = take("train.batch_size"); ok)
    cfg.training.batch_size = static_cast<Eigen::Index>(to_int("train.batch_size", v));
  if (auto [ok, v] = take("train.k_steps"); ok)
    cfg.training.k_steps = static_cast<Eigen::Index>(to_int("train.k_steps", v));
  if (auto [ok, v] = take("train.j_steps"); ok)
    cfg.training.j_steps = static_cast<Eigen::Index>(to_int("train.j_steps", v));
  if (auto [ok, v] = take("train.adam_lr"); ok)
    cfg.training.adam_lr = to_double("train.adam_lr", v);
  if (auto [ok, v] = take("train.pretrain_steps"); ok)
    cfg.training.pretrain_steps =
        static_cast<Eigen::Index>(to_int("train.pretrain_steps", v));
  if (auto [ok, v] = take("train.pretrain_lr"); ok)
    cfg.training.pretrain_lr = to_double("train.pretrain_lr", v);

  if (auto [ok, v] = take("seed"); ok)
    cfg.training.seed = static_cast<std::uint64_t>(to_int("seed", v));
  if (auto [ok, v] = take("chains"); ok)
    cfg.chains = static_cast<int>(to_int("chains", v));

  if (auto [ok, v] = take("data.aux_cols"); ok) cfg.data.aux_columns = to_name_list(v);
  if (auto [ok, v] = take("data.group_col"); ok) cfg.data.group_column = v;
  if (auto [ok, v] = take("data.missing_token"); ok) cfg.data.missing_token = v;

  if (!kv.empty()) {
    throw ConfigError("unknown key '" + kv.begin()->first + "'");
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(model.latent_dim >= 1, "key 'model.latent_dim' must be >= 1");
  require(model.beta > 0.0, "key 'model.beta' must be positive");
  require(model.weight_prior_var > 0.0,
          "key 'model.weight_prior_var' must be positive");
  require(model.gp.kernel.period > 0.0, "key 'gp.period' must be positive");
  require(model.gp.num_inducing >= 1, "key 'gp.num_inducing' must be >= 1");
  require(model.gp.sigma2 > 0.0, "key 'gp.sigma2' must be positive");
  require(model.gp.lengthscale_prior.var_log > 0.0,
          "key 'gp.lengthscale_prior_var_log' must be positive");
  require(model.gp.variance_prior.var_log > 0.0,
          "key 'gp.variance_prior_var_log' must be positive");
  require(model.gp.box_expand >= 0.0, "key 'gp.box_expand' must be >= 0");
  for (auto w : model.decoder_hidden)
    require(w >= 1, "key 'model.decoder_hidden' entries must be >= 1");
  for (auto w : model.encoder_hidden)
    require(w >= 1, "key 'model.encoder_hidden' entries must be >= 1");
  for (auto w : model.gp.hidden_widths)
    require(w >= 1, "key 'gp.hidden_widths' entries must be >= 1");

  require(training.sghmc.step_size > 0.0,
          "key 'sghmc.step_size' must be positive");
  require(training.sghmc.momentum_decay > 0.0 &&
              training.sghmc.momentum_decay < 1.0,
          "key 'sghmc.momentum' must lie in (0, 1)");
  require(training.sghmc.n_burn_in >= 0, "key 'sghmc.burn_in' must be >= 0");
  require(training.sghmc.n_samples >= 1,
          "key 'sghmc.num_samples' must be >= 1");
  require(training.sghmc.thinning >= 1, "key 'sghmc.thinning' must be >= 1");
  require(training.sghmc.noise_floor >= 0.0,
          "key 'sghmc.noise_floor' must be >= 0");
  require(training.sghmc.vhat_floor >= 0.0,
          "key 'sghmc.vhat_floor' must be >= 0");
  require(training.sghmc.grad_clip >= 0.0,
          "key 'sghmc.grad_clip' must be >= 0");
  require(training.batch_size >= 0, "key 'train.batch_size' must be >= 0");
  require(training.k_steps >= 1, "key 'train.k_steps' must be >= 1");
  require(training.j_steps >= 0, "key 'train.j_steps' must be >= 0");
  require(training.adam_lr > 0.0, "key 'train.adam_lr' must be positive");
  require(training.pretrain_steps >= 0,
          "key 'train.pretrain_steps' must be >= 0");
  require(training.pretrain_lr > 0.0,
          "key 'train.pretrain_lr' must be positive");
  require(chains >= 1, "key 'chains' must be >= 1");
}

}  // namespace sgpbae
