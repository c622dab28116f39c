#include "sgpbae/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sgpbae {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace {

constexpr char kMagic[4] = {'S', 'G', 'P', 'B'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream out;

  explicit Writer(const std::string& path)
      : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw IoError("cannot write " + path);
  }
  void bytes(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void reals(const double* p, Eigen::Index n) {
    bytes(p, static_cast<std::size_t>(n) * 8);
  }
};

struct Reader {
  std::ifstream in;
  std::string path;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw MissingCheckpoint("cannot open checkpoint " + p);
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("truncated checkpoint " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  void reals(double* p, Eigen::Index n) {
    bytes(p, static_cast<std::size_t>(n) * 8);
  }
};

void write_mlp(Writer& w, const Mlp& mlp) {
  w.u64(mlp.widths.size());
  for (auto width : mlp.widths) w.u64(static_cast<std::uint64_t>(width));
  Eigen::VectorXd flat(mlp.param_count());
  mlp.flatten(flat);
  w.reals(flat.data(), flat.size());
}

Mlp read_mlp(Reader& r, Activation act) {
  const std::uint64_t n = r.u64();
  std::vector<Eigen::Index> widths(n);
  for (auto& width : widths) width = static_cast<Eigen::Index>(r.u64());
  Mlp mlp = Mlp::build(widths, act);
  Eigen::VectorXd flat(mlp.param_count());
  r.reals(flat.data(), flat.size());
  mlp.unflatten(flat);
  return mlp;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.spec.kind));
  w.u32(static_cast<std::uint32_t>(ckpt.spec.activation));
  w.f64(ckpt.spec.beta);
  w.f64(ckpt.spec.weight_prior_var);
  w.f64(ckpt.spec.gp.sigma2);
  w.u64(static_cast<std::uint64_t>(ckpt.spec.latent_dim));
  w.u64(static_cast<std::uint64_t>(ckpt.spec.data_dim));
  w.u64(static_cast<std::uint64_t>(ckpt.spec.aux_dim));

  w.u64(ckpt.spec.decoder_hidden.size());
  for (auto width : ckpt.spec.decoder_hidden) w.u64(static_cast<std::uint64_t>(width));
  w.u64(ckpt.spec.encoder_hidden.size());
  for (auto width : ckpt.spec.encoder_hidden) w.u64(static_cast<std::uint64_t>(width));

  w.u32(static_cast<std::uint32_t>(ckpt.spec.gp.kernel.tag));
  w.f64(ckpt.spec.gp.kernel.period);
  w.u64(static_cast<std::uint64_t>(ckpt.spec.gp.num_inducing));
  w.f64(ckpt.spec.gp.lengthscale_prior.mean_log);
  w.f64(ckpt.spec.gp.lengthscale_prior.var_log);
  w.f64(ckpt.spec.gp.variance_prior.mean_log);
  w.f64(ckpt.spec.gp.variance_prior.var_log);
  w.u64(ckpt.spec.gp.hidden_widths.size());
  for (auto width : ckpt.spec.gp.hidden_widths) w.u64(static_cast<std::uint64_t>(width));

  w.u64(static_cast<std::uint64_t>(ckpt.box.lo.size()));
  w.reals(ckpt.box.lo.data(), ckpt.box.lo.size());
  w.reals(ckpt.box.hi.data(), ckpt.box.hi.size());

  // encoder weights first, then per-sample decoder weights, theta, S, u
  w.u64(static_cast<std::uint64_t>(ckpt.encoder.seed_dim));
  write_mlp(w, ckpt.encoder.net);

  w.u64(ckpt.samples.size());
  for (const auto& sample : ckpt.samples) {
    w.u64(static_cast<std::uint64_t>(sample.snapshot_id));
    w.u64(static_cast<std::uint64_t>(sample.decoder_params.size()));
    w.reals(sample.decoder_params.data(), sample.decoder_params.size());
    w.u64(sample.gp_layers.size());
    for (const auto& layer : sample.gp_layers) {
      w.u64(static_cast<std::uint64_t>(layer.params.log_lengthscales.size()));
      w.reals(layer.params.log_lengthscales.data(),
              layer.params.log_lengthscales.size());
      w.f64(layer.params.log_variance);
      w.u64(static_cast<std::uint64_t>(layer.s.rows()));
      w.u64(static_cast<std::uint64_t>(layer.s.cols()));
      w.reals(layer.s.data(), layer.s.size());
      w.u64(layer.u.size());
      for (const auto& u : layer.u) {
        w.u64(static_cast<std::uint64_t>(u.rows()));
        w.u64(static_cast<std::uint64_t>(u.cols()));
        w.reals(u.data(), u.size());
      }
    }
  }

  w.u64(ckpt.config_echo.size());
  w.bytes(ckpt.config_echo.data(), ckpt.config_echo.size());
  if (!w.out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("bad magic in " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.spec.kind = static_cast<ModelKind>(r.u32());
  ckpt.spec.activation = static_cast<Activation>(r.u32());
  ckpt.spec.beta = r.f64();
  ckpt.spec.weight_prior_var = r.f64();
  ckpt.spec.gp.sigma2 = r.f64();
  ckpt.spec.latent_dim = static_cast<Eigen::Index>(r.u64());
  ckpt.spec.data_dim = static_cast<Eigen::Index>(r.u64());
  ckpt.spec.aux_dim = static_cast<Eigen::Index>(r.u64());

  ckpt.spec.decoder_hidden.resize(r.u64());
  for (auto& width : ckpt.spec.decoder_hidden) width = static_cast<Eigen::Index>(r.u64());
  ckpt.spec.encoder_hidden.resize(r.u64());
  for (auto& width : ckpt.spec.encoder_hidden) width = static_cast<Eigen::Index>(r.u64());

  ckpt.spec.gp.kernel.tag = static_cast<KernelKind::Tag>(r.u32());
  ckpt.spec.gp.kernel.period = r.f64();
  ckpt.spec.gp.num_inducing = static_cast<Eigen::Index>(r.u64());
  ckpt.spec.gp.lengthscale_prior.mean_log = r.f64();
  ckpt.spec.gp.lengthscale_prior.var_log = r.f64();
  ckpt.spec.gp.variance_prior.mean_log = r.f64();
  ckpt.spec.gp.variance_prior.var_log = r.f64();
  ckpt.spec.gp.hidden_widths.resize(r.u64());
  for (auto& width : ckpt.spec.gp.hidden_widths) width = static_cast<Eigen::Index>(r.u64());

  const Eigen::Index box_dim = static_cast<Eigen::Index>(r.u64());
  ckpt.box.lo.resize(box_dim);
  ckpt.box.hi.resize(box_dim);
  r.reals(ckpt.box.lo.data(), box_dim);
  r.reals(ckpt.box.hi.data(), box_dim);

  ckpt.encoder.seed_dim = static_cast<Eigen::Index>(r.u64());
  ckpt.encoder.net = read_mlp(r, ckpt.spec.activation);

  const std::uint64_t n_samples = r.u64();
  ckpt.samples.resize(n_samples);
  for (auto& sample : ckpt.samples) {
    sample.snapshot_id = static_cast<std::int64_t>(r.u64());
    sample.decoder_params.resize(static_cast<Eigen::Index>(r.u64()));
    r.reals(sample.decoder_params.data(), sample.decoder_params.size());
    sample.gp_layers.resize(r.u64());
    for (auto& layer : sample.gp_layers) {
      layer.params.log_lengthscales.resize(static_cast<Eigen::Index>(r.u64()));
      r.reals(layer.params.log_lengthscales.data(),
              layer.params.log_lengthscales.size());
      layer.params.log_variance = r.f64();
      const Eigen::Index rows = static_cast<Eigen::Index>(r.u64());
      const Eigen::Index cols = static_cast<Eigen::Index>(r.u64());
      layer.s.resize(rows, cols);
      r.reals(layer.s.data(), layer.s.size());
      layer.u.resize(r.u64());
      for (auto& u : layer.u) {
        const Eigen::Index ur = static_cast<Eigen::Index>(r.u64());
        const Eigen::Index uc = static_cast<Eigen::Index>(r.u64());
        u.resize(ur, uc);
        r.reals(u.data(), u.size());
      }
    }
  }

  ckpt.config_echo.resize(r.u64());
  if (!ckpt.config_echo.empty()) {
    r.bytes(ckpt.config_echo.data(), ckpt.config_echo.size());
  }
  return ckpt;
}

}  // namespace sgpbae
