#include "sgpbae/autoencoder.hpp"
#include <cstdlib>
#include <cstdio>

#include <algorithm>
#include <cmath>

#include "sgpbae/linalg.hpp"

namespace sgpbae {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kDeepVarFloor = 1e-12;

ExprGraph::NodeId activation_graph(ExprGraph& g, Activation act,
                                   ExprGraph::NodeId x) {
  switch (act) {
    case Activation::Tanh:
      return g.tanh(x);
    case Activation::Relu:
      return g.relu(x);
    case Activation::Elu:
      return g.elu(x);
  }
  return x;
}

void apply_activation(Activation act, RowMat& m) {
  switch (act) {
    case Activation::Tanh:
      m.array() = m.array().tanh();
      break;
    case Activation::Relu:
      m.array() = m.array().max(0.0);
      break;
    case Activation::Elu:
      m.array() = (m.array() > 0.0).select(m.array(), m.array().exp() - 1.0);
      break;
  }
}

// Plain Lloyd iterations; deterministic given the rng.
RowMat kmeans_centers(const Eigen::Ref<const RowMat>& x, Eigen::Index k,
                      Rng& rng) {
  const Eigen::Index n = x.rows();
  RowMat centers(k, x.cols());
  if (n == 0) throw std::invalid_argument("kmeans on empty data");
  for (Eigen::Index i = 0; i < k; ++i) {
    centers.row(i) = x.row(static_cast<Eigen::Index>(rng.integer(static_cast<std::uint64_t>(n))));
  }
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 20; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = (x.row(i) - centers.row(0)).squaredNorm();
      for (Eigen::Index c = 1; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      RowMat sum = RowMat::Zero(1, x.cols());
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] == c) {
          sum += x.row(i);
          ++count;
        }
      }
      if (count > 0) centers.row(c) = sum / static_cast<double>(count);
    }
  }
  // spread duplicate centers so K_SS stays factorizable
  for (Eigen::Index c = 1; c < k; ++c) {
    for (Eigen::Index c2 = 0; c2 < c; ++c2) {
      if ((centers.row(c) - centers.row(c2)).norm() < 1e-9) {
        for (Eigen::Index d = 0; d < centers.cols(); ++d) {
          centers(c, d) += 1e-3 * rng.normal();
        }
      }
    }
  }
  return centers;
}

}  // namespace

// ---------------------------------------------------------------- Mlp

Mlp Mlp::build(std::vector<Eigen::Index> widths, Activation act) {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs >= 2 widths");
  Mlp m;
  m.widths = std::move(widths);
  m.activation = act;
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    m.layers.push_back({RowMat::Zero(m.widths[l], m.widths[l + 1]),
                        Eigen::VectorXd::Zero(m.widths[l + 1])});
  }
  return m;
}

void Mlp::init_weights(Rng& rng) {
  for (auto& layer : layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.w.rows()));
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j)
        layer.w(i, j) = scale * rng.normal();
    layer.b.setZero();
  }
}

Eigen::Index Mlp::param_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers) n += layer.w.size() + layer.b.size();
  return n;
}

void Mlp::flatten(Eigen::Ref<Eigen::VectorXd> out) const {
  Eigen::Index at = 0;
  for (const auto& layer : layers) {
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j)
        out[at++] = layer.w(i, j);
    for (Eigen::Index j = 0; j < layer.b.size(); ++j) out[at++] = layer.b[j];
  }
}

void Mlp::unflatten(const Eigen::Ref<const Eigen::VectorXd>& in) {
  Eigen::Index at = 0;
  for (auto& layer : layers) {
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j)
        layer.w(i, j) = in[at++];
    for (Eigen::Index j = 0; j < layer.b.size(); ++j) layer.b[j] = in[at++];
  }
}

RowMat Mlp::forward(const Eigen::Ref<const RowMat>& input) const {
  if (input.cols() != widths.front()) {
    throw ShapeMismatch("mlp input width mismatch");
  }
  RowMat h = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    RowMat pre = h * layers[l].w;
    pre.rowwise() += layers[l].b.transpose();
    h = std::move(pre);
    if (l + 1 < layers.size()) apply_activation(activation, h);
  }
  return h;
}

std::vector<Eigen::Index> ModelSpec::gp_layer_widths() const {
  std::vector<Eigen::Index> widths = {aux_dim};
  if (kind == ModelKind::DeepSgpBae) {
    for (auto w : gp.hidden_widths) widths.push_back(w);
  }
  widths.push_back(latent_dim);
  return widths;
}

// ---------------------------------------------------- plain operations

RowMat encode(const EncoderNet& enc, const Eigen::Ref<const RowMat>& y,
              const Eigen::Ref<const RowMat>& epsilon) {
  if (y.rows() != epsilon.rows() || epsilon.cols() != enc.seed_dim) {
    throw ShapeMismatch("encoder seed shape mismatch");
  }
  RowMat joint(y.rows(), y.cols() + epsilon.cols());
  joint << y, epsilon;
  return enc.net.forward(joint);
}

double decoder_log_likelihood(const DecoderNet& dec,
                              const Eigen::Ref<const RowMat>& z,
                              const Eigen::Ref<const RowMat>& y,
                              const Eigen::Ref<const RowMat>& mask) {
  if (y.rows() != z.rows() || y.rows() != mask.rows() || y.cols() != mask.cols()) {
    throw ShapeMismatch("decoder likelihood shapes disagree");
  }
  const RowMat decoded = dec.net.forward(z);
  const double var = 1.0 / dec.beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (mask(i, j) == 0.0) continue;
      const double d = y(i, j) - decoded(i, j);
      total += -0.5 * (kLog2Pi + std::log(var) + d * d / var);
    }
  }
  return total;
}

double encoder_distill_loss(const EncoderNet& enc,
                            const Eigen::Ref<const RowMat>& y,
                            const Eigen::Ref<const RowMat>& epsilon,
                            const Eigen::Ref<const RowMat>& labels) {
  return (encode(enc, y, epsilon) - labels).squaredNorm();
}

Batch Batch::gather(const Dataset& data, const std::vector<Eigen::Index>& rows) {
  std::vector<Eigen::Index> idx = rows;
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    const int ga = data.group.empty() ? 0 : data.group[static_cast<std::size_t>(a)];
    const int gb = data.group.empty() ? 0 : data.group[static_cast<std::size_t>(b)];
    return ga != gb ? ga < gb : a < b;
  });
  Batch batch;
  const Eigen::Index b = static_cast<Eigen::Index>(idx.size());
  batch.indices = std::move(idx);
  batch.y = RowMat(b, data.data_dim());
  batch.x = RowMat(b, data.aux_dim());
  batch.mask = RowMat(b, data.data_dim());
  batch.latent = RowMat::Zero(b, 1);
  batch.group.resize(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index r = batch.indices[static_cast<std::size_t>(i)];
    batch.mask.row(i) = data.mask.row(r);
    batch.y.row(i) = data.y.row(r).cwiseProduct(data.mask.row(r));
    batch.x.row(i) = data.x.row(r);
    batch.group[static_cast<std::size_t>(i)] =
        data.group.empty() ? 0 : data.group[static_cast<std::size_t>(r)];
  }
  return batch;
}

// ------------------------------------------------------ position layout

namespace {

struct Entry {
  Eigen::Index offset = 0, rows = 0, cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

struct GpSegments {
  Entry log_ls, log_var, s;
  std::vector<Entry> u;  // per group
};

struct PositionLayout {
  std::vector<Entry> decoder;  // W0, b0, W1, b1, ...
  std::vector<GpSegments> gp;
  Entry latent;
  Eigen::Index total = 0;

  static PositionLayout build(const ModelSpec& spec, Eigen::Index n_groups,
                              Eigen::Index batch_size) {
    PositionLayout lay;
    Eigen::Index at = 0;
    auto push = [&at](Eigen::Index r, Eigen::Index c) {
      Entry e{at, r, c};
      at += r * c;
      return e;
    };
    std::vector<Eigen::Index> dec_widths = {spec.latent_dim};
    for (auto w : spec.decoder_hidden) dec_widths.push_back(w);
    dec_widths.push_back(spec.data_dim);
    for (std::size_t l = 0; l + 1 < dec_widths.size(); ++l) {
      lay.decoder.push_back(push(dec_widths[l], dec_widths[l + 1]));
      lay.decoder.push_back(push(1, dec_widths[l + 1]));
    }
    if (spec.has_sparse_gp()) {
      const auto widths = spec.gp_layer_widths();
      for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        GpSegments segs;
        segs.log_ls = push(1, widths[l]);
        segs.log_var = push(1, 1);
        segs.s = push(spec.gp.num_inducing, widths[l]);
        for (Eigen::Index gidx = 0; gidx < n_groups; ++gidx) {
          segs.u.push_back(push(spec.gp.num_inducing, widths[l + 1]));
        }
        lay.gp.push_back(std::move(segs));
      }
    }
    lay.latent = push(batch_size, spec.latent_dim);
    lay.total = at;
    return lay;
  }
};

Eigen::Map<RowMat> seg_view(Eigen::VectorXd& v, const Entry& e) {
  return {v.data() + e.offset, e.rows, e.cols};
}

Tensor seg_tensor(const Eigen::VectorXd& v, const Entry& e) {
  return Tensor({e.rows, e.cols}, v.segment(e.offset, e.size()));
}

// batch rows are sorted by group; contiguous [begin, end) per present group
struct GroupSlice {
  int gid;
  Eigen::Index begin, size;
};

std::vector<GroupSlice> slice_groups(const Batch& batch) {
  std::vector<GroupSlice> out;
  Eigen::Index i = 0;
  const Eigen::Index n = static_cast<Eigen::Index>(batch.group.size());
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && batch.group[static_cast<std::size_t>(j)] ==
                        batch.group[static_cast<std::size_t>(i)]) {
      ++j;
    }
    out.push_back({batch.group[static_cast<std::size_t>(i)], i, j - i});
    i = j;
  }
  return out;
}

// -------------------------------------------------- graph energy builder

struct LeafBinding {
  ExprGraph::NodeId node;
  Entry entry;
};

class EnergyGraph {
 public:
  EnergyGraph(const ModelSpec& spec, const PositionLayout& layout,
              const UniformBox& box, Eigen::Index n_total,
              Eigen::Index n_groups)
      : spec_(spec), layout_(layout), box_(box), n_total_(n_total),
        n_groups_(n_groups) {}

  // Dense GP-BAE prior pieces, fixed through training.
  void cache_dense_gp(const Dataset& data) {
    const auto groups = data.rows_by_group();
    for (const auto& rows : groups) {
      RowMat xg(static_cast<Eigen::Index>(rows.size()), data.aux_dim());
      for (std::size_t i = 0; i < rows.size(); ++i) xg.row(static_cast<Eigen::Index>(i)) = data.x.row(rows[i]);
      RowMat k = kernel_matrix(spec_.gp.kernel, spec_.gp.fixed_params, xg, xg);
      auto chol = cholesky_with_jitter(k);
      dense_chol_.push_back(chol.l);
      dense_logdet_.push_back(2.0 * chol.l.diagonal().array().log().sum());
    }
  }

  struct Result {
    double value = 0.0;
    Eigen::VectorXd grad;
    EnergyBreakdown breakdown;
  };

  // Pre-drawn hidden-layer noise so jitter retries see identical samples.
  std::vector<RowMat> draw_deep_noise(const Batch& batch, Rng* rng) const {
    std::vector<RowMat> eps;
    if (spec_.kind != ModelKind::DeepSgpBae) return eps;
    const auto widths = spec_.gp_layer_widths();
    const std::size_t hidden_layers = widths.size() >= 3 ? widths.size() - 2 : 0;
    for (std::size_t l = 0; l < hidden_layers; ++l) {
      const Eigen::Index w = widths[l + 1];
      eps.push_back(rng ? rng->normal_matrix(batch.y.rows(), w)
                        : RowMat::Zero(batch.y.rows(), w));
    }
    return eps;
  }

  Result evaluate(const Eigen::VectorXd& position, const Batch& batch,
                  const std::vector<RowMat>& deep_noise) {
    double mult = 1.0;
    for (int attempt = 0; attempt <= kJitterDoublings; ++attempt) {
      try {
        return build(position, batch, deep_noise, mult);
      } catch (const NotPositiveDefinite&) {
        if (attempt == kJitterDoublings) throw;
        mult *= 2.0;
      }
    }
    throw NotPositiveDefinite("unreachable");
  }

 private:
  Result build(const Eigen::VectorXd& position, const Batch& batch,
               const std::vector<RowMat>& deep_noise, double jitter_mult) {
    ExprGraph g;
    std::vector<LeafBinding> bindings;
    auto leaf = [&](const Entry& e) {
      const auto id = g.parameter(seg_tensor(position, e));
      bindings.push_back({id, e});
      return id;
    };

    // decoder parameter leaves + Gaussian prior
    std::vector<ExprGraph::NodeId> dec_nodes;
    ExprGraph::NodeId psi = g.constant(0.0);
    for (const auto& e : layout_.decoder) {
      const auto id = leaf(e);
      dec_nodes.push_back(id);
      auto prior_var = g.broadcast(g.constant(spec_.weight_prior_var), e.rows, e.cols);
      auto zero = g.broadcast(g.constant(0.0), e.rows, e.cols);
      psi = g.add(psi, g.sum(g.gaussian_logpdf(id, zero, prior_var)));
    }

    // sparse GP leaves, priors, shared cholesky per layer
    struct GpNodes {
      ExprGraph::NodeId log_ls, log_var, s, chol;
      std::vector<ExprGraph::NodeId> u;
    };
    std::vector<GpNodes> gp_nodes;
    if (spec_.has_sparse_gp()) {
      for (const auto& segs : layout_.gp) {
        GpNodes nodes;
        nodes.log_ls = leaf(segs.log_ls);
        nodes.log_var = leaf(segs.log_var);
        nodes.s = leaf(segs.s);
        for (const auto& ue : segs.u) nodes.u.push_back(leaf(ue));
        nodes.chol = gp_chol_kss_graph(g, spec_.gp.kernel, nodes.s,
                                       nodes.log_ls, nodes.log_var, jitter_mult);
        psi = g.add(psi, log_prior_hyper_graph(g, nodes.log_ls, nodes.log_var,
                                               spec_.gp.lengthscale_prior,
                                               spec_.gp.variance_prior));
        for (auto u : nodes.u) {
          psi = g.add(psi, log_prior_inducing_graph(g, nodes.chol, u));
        }
        gp_nodes.push_back(std::move(nodes));
      }
      // constant uniform-box density over the first-layer inducing inputs
      psi = g.add(psi, g.constant(static_cast<double>(spec_.gp.num_inducing) *
                                  box_.log_density_per_row()));
    }

    const Eigen::Index b = batch.y.rows();
    const double scale =
        b == 0 ? 0.0
               : static_cast<double>(n_total_) / static_cast<double>(b);
    const auto slices = slice_groups(batch);

    ExprGraph::NodeId latent_ll = g.constant(0.0);
    ExprGraph::NodeId like_ll = g.constant(0.0);
    for (const auto& slice : slices) {
      // latent leaf for this group's rows
      Entry zent{layout_.latent.offset + slice.begin * spec_.latent_dim,
                 slice.size, spec_.latent_dim};
      const auto z = leaf(zent);

      // latent prior
      if (spec_.kind == ModelKind::Bae) {
        auto zero = g.broadcast(g.constant(0.0), slice.size, spec_.latent_dim);
        auto one = g.broadcast(g.constant(1.0), slice.size, spec_.latent_dim);
        latent_ll = g.add(latent_ll, g.sum(g.gaussian_logpdf(z, zero, one)));
      } else if (spec_.kind == ModelKind::GpBae) {
        const auto& l = dense_chol_[static_cast<std::size_t>(slice.gid)];
        auto lc = g.constant(Tensor::from_matrix(l));
        auto w = g.triangular_solve(lc, z);
        auto quad = g.scale(g.sum(g.square(w)), -0.5);
        const double c = static_cast<double>(spec_.latent_dim);
        const double norm = -0.5 * c *
            (dense_logdet_[static_cast<std::size_t>(slice.gid)] +
             static_cast<double>(slice.size) * kLog2Pi);
        latent_ll = g.add(latent_ll, g.add_scalar(quad, norm));
      } else {
        RowMat xg = batch.x.middleRows(slice.begin, slice.size);
        ExprGraph::NodeId current = g.constant(Tensor::from_matrix(xg));
        const std::size_t n_layers = gp_nodes.size();
        for (std::size_t l = 0; l + 1 < n_layers; ++l) {
          const auto& nodes = gp_nodes[l];
          auto fitc = fitc_moments_graph(g, spec_.gp.kernel, current, nodes.s,
                                         nodes.log_ls, nodes.log_var,
                                         nodes.chol,
                                         nodes.u[static_cast<std::size_t>(slice.gid)]);
          const Eigen::Index width = g.value(fitc.mean).cols();
          auto sd = g.exp(g.scale(
              g.log(g.add_scalar(fitc.var, kDeepVarFloor)), 0.5));
          RowMat eps_rows = deep_noise[l].middleRows(slice.begin, slice.size);
          auto eps = g.constant(Tensor::from_matrix(eps_rows));
          current = g.add(fitc.mean,
                          g.mul(eps, g.broadcast(sd, slice.size, width)));
        }
        const auto& last = gp_nodes.back();
        auto fitc = fitc_moments_graph(g, spec_.gp.kernel, current, last.s,
                                       last.log_ls, last.log_var, last.chol,
                                       last.u[static_cast<std::size_t>(slice.gid)]);
        auto var = g.add_scalar(fitc.var, spec_.gp.sigma2);
        latent_ll = g.add(latent_ll,
                          g.sum(g.gaussian_logpdf(
                              z, fitc.mean,
                              g.broadcast(var, slice.size, spec_.latent_dim))));
      }

      // decoder likelihood over the observed entries
      ExprGraph::NodeId h = z;
      const std::size_t n_dec_layers = dec_nodes.size() / 2;
      for (std::size_t l = 0; l < n_dec_layers; ++l) {
        auto pre = g.add(g.matmul(h, dec_nodes[2 * l]),
                         g.broadcast(dec_nodes[2 * l + 1], slice.size,
                                     layout_.decoder[2 * l + 1].cols));
        h = (l + 1 == n_dec_layers) ? pre
                                    : activation_graph(g, spec_.activation, pre);
      }
      RowMat yg = batch.y.middleRows(slice.begin, slice.size);
      RowMat mg = batch.mask.middleRows(slice.begin, slice.size);
      auto yc = g.constant(Tensor::from_matrix(yg));
      auto mc = g.constant(Tensor::from_matrix(mg));
      auto var = g.broadcast(g.constant(1.0 / spec_.beta), slice.size,
                             spec_.data_dim);
      like_ll = g.add(like_ll, g.sum(g.mul(mc, g.gaussian_logpdf(yc, h, var))));
    }

    auto data_term = g.scale(g.add(latent_ll, like_ll), scale);
    auto root = g.neg(g.add(psi, data_term));

    auto [value, grads] = g.evaluate_with_gradients(root);
    Result out;
    out.value = value;
    out.grad = Eigen::VectorXd::Zero(layout_.total);
    for (const auto& bind : bindings) {
      const auto it = grads.find(bind.node);
      if (it == grads.end()) continue;
      out.grad.segment(bind.entry.offset, bind.entry.size()) = it->second.data();
    }
    out.breakdown.psi_prior = g.scalar_value(psi);
    out.breakdown.latent_prior = scale * g.scalar_value(latent_ll);
    out.breakdown.likelihood = scale * g.scalar_value(like_ll);
    return out;
  }

  const ModelSpec& spec_;
  const PositionLayout& layout_;
  const UniformBox& box_;
  Eigen::Index n_total_;
  Eigen::Index n_groups_;
  std::vector<RowMat> dense_chol_;
  std::vector<double> dense_logdet_;
};

// encoder distillation loss graph; returns loss value and flat gradient
std::pair<double, Eigen::VectorXd> encoder_loss_grad(
    const EncoderNet& enc, const Eigen::Ref<const RowMat>& y,
    const Eigen::Ref<const RowMat>& epsilon,
    const Eigen::Ref<const RowMat>& labels) {
  ExprGraph g;
  RowMat joint(y.rows(), y.cols() + epsilon.cols());
  joint << y, epsilon;
  auto h = g.constant(Tensor::from_matrix(joint));
  std::vector<ExprGraph::NodeId> leaves;
  const auto& layers = enc.net.layers;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = g.parameter(Tensor::from_matrix(layers[l].w));
    auto bias = g.parameter(Tensor::row(layers[l].b));
    leaves.push_back(w);
    leaves.push_back(bias);
    auto pre = g.add(g.matmul(h, w), g.broadcast(bias, y.rows(), layers[l].b.size()));
    h = (l + 1 == layers.size()) ? pre
                                 : activation_graph(g, enc.net.activation, pre);
  }
  auto root = g.sum(g.square(g.sub(h, g.constant(Tensor::from_matrix(RowMat(labels))))));
  auto [value, grads] = g.evaluate_with_gradients(root);

  Eigen::VectorXd flat(enc.net.param_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& gw = grads.at(leaves[2 * l]);
    flat.segment(at, gw.size()) = gw.data();
    at += gw.size();
    const auto& gb = grads.at(leaves[2 * l + 1]);
    flat.segment(at, gb.size()) = gb.data();
    at += gb.size();
  }
  return {value, std::move(flat)};
}

}  // namespace

// --------------------------------------------------------- energies

double energy_bae(const Batch& batch, const DecoderNet& dec,
                  Eigen::Index n_total) {
  const double scale =
      batch.y.rows() == 0
          ? 0.0
          : static_cast<double>(n_total) / static_cast<double>(batch.y.rows());
  double psi = 0.0;
  for (const auto& layer : dec.net.layers) {
    const double v = dec.weight_prior_var;
    auto norm_sum = [&](double sq, Eigen::Index count) {
      return -0.5 * (static_cast<double>(count) * (kLog2Pi + std::log(v)) +
                     sq / v);
    };
    psi += norm_sum(layer.w.squaredNorm(), layer.w.size());
    psi += norm_sum(layer.b.squaredNorm(), layer.b.size());
  }
  const double latent =
      -0.5 * (static_cast<double>(batch.latent.size()) * kLog2Pi +
              batch.latent.squaredNorm());
  const double like =
      decoder_log_likelihood(dec, batch.latent, batch.y, batch.mask);
  return -(psi + scale * (latent + like));
}

namespace {

Eigen::VectorXd pack_position(const PositionLayout& layout,
                              const DecoderNet& dec,
                              const std::vector<GpLayerState>& gp_layers,
                              const RowMat& latent) {
  Eigen::VectorXd position = Eigen::VectorXd::Zero(layout.total);
  Eigen::VectorXd dec_flat(dec.net.param_count());
  dec.net.flatten(dec_flat);
  position.head(dec_flat.size()) = dec_flat;
  for (std::size_t l = 0; l < layout.gp.size(); ++l) {
    const auto& segs = layout.gp[l];
    const auto& state = gp_layers[l];
    seg_view(position, segs.log_ls).row(0) =
        state.params.log_lengthscales.transpose();
    position[segs.log_var.offset] = state.params.log_variance;
    seg_view(position, segs.s) = state.s;
    for (std::size_t gi = 0; gi < segs.u.size(); ++gi) {
      seg_view(position, segs.u[gi]) = state.u[gi];
    }
  }
  seg_view(position, layout.latent) = latent;
  return position;
}

}  // namespace

EnergyBreakdown energy_sgpbae_terms(const Batch& batch, const DecoderNet& dec,
                                    const std::vector<GpLayerState>& gp_layers,
                                    const ModelSpec& spec,
                                    const UniformBox& box,
                                    Eigen::Index n_total, Eigen::Index n_groups,
                                    Rng* rng) {
  ModelSpec full = spec;
  full.beta = dec.beta;
  full.weight_prior_var = dec.weight_prior_var;
  PositionLayout layout = PositionLayout::build(full, n_groups, batch.y.rows());
  const Eigen::VectorXd position =
      pack_position(layout, dec, gp_layers, batch.latent);
  EnergyGraph builder(full, layout, box, n_total, n_groups);
  auto noise = builder.draw_deep_noise(batch, rng);
  return builder.evaluate(position, batch, noise).breakdown;
}

EnergyGradients energy_sgpbae_gradients(
    const Batch& batch, const DecoderNet& dec,
    const std::vector<GpLayerState>& gp_layers, const ModelSpec& spec,
    const UniformBox& box, Eigen::Index n_total, Eigen::Index n_groups,
    Rng* rng) {
  ModelSpec full = spec;
  full.beta = dec.beta;
  full.weight_prior_var = dec.weight_prior_var;
  PositionLayout layout = PositionLayout::build(full, n_groups, batch.y.rows());
  Eigen::VectorXd position = pack_position(layout, dec, gp_layers, batch.latent);
  EnergyGraph builder(full, layout, box, n_total, n_groups);
  auto noise = builder.draw_deep_noise(batch, rng);
  auto res = builder.evaluate(position, batch, noise);

  EnergyGradients out;
  out.value = res.value;
  out.decoder = res.grad.head(dec.net.param_count());
  for (const auto& segs : layout.gp) {
    EnergyGradients::GpLayer gl;
    gl.log_lengthscales =
        res.grad.segment(segs.log_ls.offset, segs.log_ls.size());
    gl.log_variance = res.grad[segs.log_var.offset];
    gl.s = seg_view(res.grad, segs.s);
    for (const auto& ue : segs.u) gl.u.push_back(seg_view(res.grad, ue));
    out.gp.push_back(std::move(gl));
  }
  out.latent = seg_view(res.grad, layout.latent);
  return out;
}

double energy_sgpbae(const Batch& batch, const DecoderNet& dec,
                     const GpLayerState& gp, const ModelSpec& spec,
                     const UniformBox& box, Eigen::Index n_total) {
  if (!box.contains(gp.s)) return std::numeric_limits<double>::infinity();
  const int n_groups = static_cast<int>(gp.u.size());
  return energy_sgpbae_terms(batch, dec, {gp}, spec, box, n_total, n_groups)
      .total();
}

// ------------------------------------------------------------- Adam

AdamOptimizer::AdamOptimizer(double learning_rate, Eigen::Index dim)
    : lr_(learning_rate), m_(Eigen::VectorXd::Zero(dim)),
      v_(Eigen::VectorXd::Zero(dim)) {}

void AdamOptimizer::step(Eigen::Ref<Eigen::VectorXd> params,
                         const Eigen::Ref<const Eigen::VectorXd>& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_.array().matrix() +
       (1.0 - beta2_) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / bc1) /
                    ((v_.array() / bc2).sqrt() + eps_);
}

// ------------------------------------------------------------- train

TrainResult train(const Dataset& data, ModelSpec spec, TrainConfig config,
                  const std::function<void(std::int64_t)>& on_sample) {
  data.validate();
  config.sghmc.validate();
  spec.data_dim = data.data_dim();
  spec.aux_dim = data.aux_dim();
  const Eigen::Index n = data.size();
  Eigen::Index batch_size = config.batch_size == 0 ? n : config.batch_size;
  batch_size = std::min(batch_size, n);
  if (spec.kind == ModelKind::GpBae && batch_size != n) {
    throw ConfigError("the dense GP model requires full-batch training");
  }
  if (config.k_steps < 1 || config.j_steps < 0) {
    throw ConfigError("k_steps must be >= 1 and j_steps >= 0");
  }

  Rng rng(config.seed);
  const int n_groups = data.n_groups;

  EncoderNet encoder;
  encoder.seed_dim = spec.data_dim;
  std::vector<Eigen::Index> enc_widths = {spec.data_dim + encoder.seed_dim};
  for (auto w : spec.encoder_hidden) enc_widths.push_back(w);
  enc_widths.push_back(spec.latent_dim);
  encoder.net = Mlp::build(enc_widths, spec.activation);
  encoder.net.init_weights(rng);

  std::vector<Eigen::Index> dec_widths = {spec.latent_dim};
  for (auto w : spec.decoder_hidden) dec_widths.push_back(w);
  dec_widths.push_back(spec.data_dim);
  Mlp decoder = Mlp::build(dec_widths, spec.activation);
  decoder.init_weights(rng);

  UniformBox box = UniformBox::from_data(data.x, spec.gp.box_expand);

  PositionLayout layout = PositionLayout::build(spec, n_groups, batch_size);
  Eigen::VectorXd position = Eigen::VectorXd::Zero(layout.total);
  {
    Eigen::VectorXd dec_flat(decoder.param_count());
    decoder.flatten(dec_flat);
    position.head(dec_flat.size()) = dec_flat;
  }
  std::vector<UniformBox> layer_boxes;
  if (spec.has_sparse_gp()) {
    const auto widths = spec.gp_layer_widths();
    for (std::size_t l = 0; l < layout.gp.size(); ++l) {
      const auto& segs = layout.gp[l];
      seg_view(position, segs.log_ls).setZero();  // lengthscales start at 1
      position[segs.log_var.offset] = 0.0;
      if (l == 0) {
        seg_view(position, segs.s) =
            kmeans_centers(data.x, spec.gp.num_inducing, rng);
        layer_boxes.push_back(box);
      } else {
        // hidden-layer inputs are roughly unit-scale function values
        seg_view(position, segs.s) =
            rng.normal_matrix(spec.gp.num_inducing, widths[l]);
        UniformBox hidden_box;
        hidden_box.lo = Eigen::VectorXd::Constant(widths[l], -6.0);
        hidden_box.hi = Eigen::VectorXd::Constant(widths[l], 6.0);
        layer_boxes.push_back(hidden_box);
      }
      for (const auto& ue : segs.u) seg_view(position, ue).setZero();
    }
  }

  EnergyGraph builder(spec, layout, box, n, n_groups);
  if (spec.kind == ModelKind::GpBae) builder.cache_dense_gp(data);

  SamplerState state = SamplerState::init(position);
  AdamOptimizer adam(config.adam_lr, encoder.net.param_count());
  Eigen::VectorXd enc_flat(encoder.net.param_count());
  encoder.net.flatten(enc_flat);

  TrainResult result;
  result.spec = spec;
  result.inducing_box = box;

  const std::int64_t want = config.sghmc.n_samples;
  double last_energy = 0.0;
  std::int64_t collected = 0;

  auto snapshot = [&]() {
    PosteriorSample sample;
    sample.snapshot_id = collected;
    sample.decoder_params = state.position.head(decoder.param_count());
    for (const auto& segs : layout.gp) {
      GpLayerState gl;
      gl.params.log_lengthscales =
          seg_view(state.position, segs.log_ls).row(0).transpose();
      gl.params.log_variance = state.position[segs.log_var.offset];
      gl.s = seg_view(state.position, segs.s);
      for (const auto& ue : segs.u) gl.u.push_back(seg_view(state.position, ue));
      sample.gp_layers.push_back(std::move(gl));
    }
    result.samples.push_back(std::move(sample));
  };

  try {
    std::vector<Eigen::Index> all_rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all_rows[static_cast<std::size_t>(i)] = i;

    // With a full batch the latent rows never leave the sampler, so they
    // persist across outer iterations; re-amortization through the encoder
    // only happens when subsampled rows re-enter a batch.
    const bool full_batch = batch_size == n;
    bool latents_initialized = false;

    // MAP warm start: Adam on the same energy, encoder distilled alongside.
    if (config.pretrain_steps > 0) {
      AdamOptimizer map_adam(config.pretrain_lr, layout.total);
      Eigen::Index done = 0;
      while (done < config.pretrain_steps) {
        const std::vector<Eigen::Index> rows =
            full_batch ? all_rows
                       : rng.sample_without_replacement(n, batch_size);
        Batch batch = Batch::gather(data, rows);
        RowMat eps = rng.normal_matrix(batch_size, encoder.seed_dim);
        if (!full_batch || !latents_initialized) {
          batch.latent = encode(encoder, batch.y, eps);
          seg_view(state.position, layout.latent) = batch.latent;
          latents_initialized = true;
        }

        auto deep_noise = builder.draw_deep_noise(batch, &rng);
        for (Eigen::Index k = 0; k < config.k_steps && done < config.pretrain_steps;
             ++k, ++done) {
          auto res = builder.evaluate(state.position, batch, deep_noise);
          if (!res.grad.allFinite()) {
            throw NonFiniteGradient("non-finite gradient during warm start");
          }
          map_adam.step(state.position, res.grad);
          last_energy = res.value;
        }
        batch.latent = seg_view(state.position, layout.latent);
        const RowMat labels = batch.latent;
        for (Eigen::Index j = 0; j < config.j_steps; ++j) {
          encoder.net.unflatten(enc_flat);
          auto [loss, grad] = encoder_loss_grad(encoder, batch.y, eps, labels);
          (void)loss;
          adam.step(enc_flat, grad);
        }
        encoder.net.unflatten(enc_flat);
      }
      state.velocity.setZero();
    }

    while (collected < want) {
      const std::vector<Eigen::Index> rows =
          full_batch ? all_rows : rng.sample_without_replacement(n, batch_size);
      Batch batch = Batch::gather(data, rows);

      RowMat eps = rng.normal_matrix(batch_size, encoder.seed_dim);
      if (!full_batch || !latents_initialized) {
        batch.latent = encode(encoder, batch.y, eps);
        seg_view(state.position, layout.latent) = batch.latent;
        state.velocity.segment(layout.latent.offset, layout.latent.size()).setZero();
        latents_initialized = true;
      } else {
        batch.latent = seg_view(state.position, layout.latent);
      }

      auto deep_noise = builder.draw_deep_noise(batch, &rng);
      GradFn grad_fn = [&](const Eigen::VectorXd& pos) {
        auto res = builder.evaluate(pos, batch, deep_noise);
        last_energy = res.value;
        if (std::getenv("SGPBAE_DEBUG") && state.step_count % 25 == 0) {
          std::fprintf(stderr,
                       "[dbg] step %lld U %.4g |pos| %.3g |grad| %.3g vhat %.2g/%.2g |v| %.3g\n",
                       static_cast<long long>(state.step_count), res.value,
                       pos.cwiseAbs().maxCoeff(), res.grad.cwiseAbs().maxCoeff(),
                       state.v_hat.minCoeff(), state.v_hat.maxCoeff(),
                       state.velocity.cwiseAbs().maxCoeff());
        }
        return res.grad;
      };

      for (Eigen::Index k = 0; k < config.k_steps && collected < want; ++k) {
        state.in_burn_in = state.step_count < config.sghmc.n_burn_in;
        if (spec.kind == ModelKind::DeepSgpBae && k > 0) {
          deep_noise = builder.draw_deep_noise(batch, &rng);
        }
        sghmc_step(state, grad_fn, config.sghmc, rng);
        // keep inducing inputs inside their uniform support
        for (std::size_t l = 0; l < layout.gp.size(); ++l) {
          const auto& e = layout.gp[l].s;
          const auto& lbox = layer_boxes[l];
          for (Eigen::Index r = 0; r < e.rows; ++r) {
            for (Eigen::Index c2 = 0; c2 < e.cols; ++c2) {
              const Eigen::Index at = e.offset + r * e.cols + c2;
              double v = state.position[at];
              const double lo = lbox.lo[c2], hi = lbox.hi[c2];
              if (v < lo) {
                state.position[at] = std::min(2.0 * lo - v, hi);
                state.velocity[at] = -state.velocity[at];
              } else if (v > hi) {
                state.position[at] = std::max(2.0 * hi - v, lo);
                state.velocity[at] = -state.velocity[at];
              }
            }
          }
        }
        const std::int64_t post = state.step_count - config.sghmc.n_burn_in;
        if (post > 0 && post % config.sghmc.thinning == 0 && collected < want) {
          snapshot();
          ++collected;
          if (on_sample) on_sample(collected);
        }
      }

      batch.latent = seg_view(state.position, layout.latent);
      const RowMat labels = batch.latent;
      for (Eigen::Index j = 0; j < config.j_steps; ++j) {
        encoder.net.unflatten(enc_flat);
        auto [loss, grad] = encoder_loss_grad(encoder, batch.y, eps, labels);
        (void)loss;
        adam.step(enc_flat, grad);
      }
      encoder.net.unflatten(enc_flat);
    }
  } catch (const NonFiniteGradient& err) {
    result.aborted = true;
    result.abort_reason = err.what();
  } catch (const NotPositiveDefinite& err) {
    // the chain wandered into an unfactorizable covariance even after
    // jitter escalation; stop and keep the samples collected so far
    result.aborted = true;
    result.abort_reason = err.what();
  }

  encoder.net.unflatten(enc_flat);
  result.encoder = encoder;
  result.final_energy = last_energy;
  return result;
}

// ------------------------------------------------- posterior consumers

SparseGPPrior prior_from_sample(const PosteriorSample& sample,
                                const ModelSpec& spec, const UniformBox& box,
                                std::size_t layer, int group) {
  const auto& gl = sample.gp_layers.at(layer);
  SparseGPPrior prior;
  prior.kind = spec.gp.kernel;
  prior.params = gl.params;
  prior.inducing.s = gl.s;
  prior.inducing.u = gl.u.at(static_cast<std::size_t>(group));
  prior.sigma2 = spec.gp.sigma2;
  prior.inducing_input_prior = box;
  return prior;
}

DecoderNet decoder_from_sample(const PosteriorSample& sample,
                               const ModelSpec& spec) {
  DecoderNet dec;
  std::vector<Eigen::Index> widths = {spec.latent_dim};
  for (auto w : spec.decoder_hidden) widths.push_back(w);
  widths.push_back(spec.data_dim);
  dec.net = Mlp::build(widths, spec.activation);
  dec.net.unflatten(sample.decoder_params);
  dec.beta = spec.beta;
  dec.weight_prior_var = spec.weight_prior_var;
  return dec;
}

Generated generate(const std::vector<PosteriorSample>& samples,
                   const ModelSpec& spec, const UniformBox& box,
                   const Eigen::Ref<const RowMat>& x_star, int group,
                   Rng& rng) {
  if (samples.empty()) throw EmptyPosterior("no posterior samples");
  if (!spec.has_sparse_gp()) {
    throw std::invalid_argument("conditional generation needs a sparse GP prior");
  }
  const Eigen::Index b = x_star.rows();
  RowMat sum = RowMat::Zero(b, spec.data_dim);
  RowMat sumsq = RowMat::Zero(b, spec.data_dim);
  for (const auto& sample : samples) {
    RowMat current = x_star;
    for (std::size_t l = 0; l + 1 < sample.gp_layers.size(); ++l) {
      const SparseGPPrior prior = prior_from_sample(sample, spec, box, l, group);
      const FitcMoments m = fitc_moments(prior, current);
      RowMat eps = rng.normal_matrix(m.mean.rows(), m.mean.cols());
      current = m.mean + (eps.array().colwise() * m.var.array().sqrt()).matrix();
    }
    const SparseGPPrior last = prior_from_sample(
        sample, spec, box, sample.gp_layers.size() - 1, group);
    const RowMat z = predict_latent(last, current, rng, PredictMode::Sample);
    const DecoderNet dec = decoder_from_sample(sample, spec);
    const RowMat y = dec.net.forward(z);
    sum += y;
    sumsq += y.cwiseProduct(y);
  }
  const double count = static_cast<double>(samples.size());
  Generated out;
  out.mean = sum / count;
  out.variance =
      (sumsq / count - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  return out;
}

Imputation impute(const std::vector<PosteriorSample>& samples,
                  const ModelSpec& spec, const EncoderNet& encoder,
                  const Dataset& data, Rng& rng) {
  if (samples.empty()) throw EmptyPosterior("no posterior samples");
  if (data.mask.minCoeff() > 0.0) {
    throw NoMissing("dataset has no missing entries to impute");
  }
  const Eigen::Index n = data.size();
  RowMat zero_filled = data.y.cwiseProduct(data.mask);
  RowMat sum = RowMat::Zero(n, data.data_dim());
  RowMat sumsq = RowMat::Zero(n, data.data_dim());
  for (const auto& sample : samples) {
    const RowMat eps = rng.normal_matrix(n, encoder.seed_dim);
    const RowMat z = encode(encoder, zero_filled, eps);
    const DecoderNet dec = decoder_from_sample(sample, spec);
    const RowMat y = dec.net.forward(z);
    sum += y;
    sumsq += y.cwiseProduct(y);
  }
  const double count = static_cast<double>(samples.size());
  Imputation out;
  out.mean = sum / count;
  const RowMat var =
      (sumsq / count - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0).array() +
      1.0 / spec.beta;
  out.stddev = var.cwiseSqrt();
  return out;
}

}  // namespace sgpbae
