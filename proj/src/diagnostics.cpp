#include "sgpbae/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgpbae/errors.hpp"

namespace sgpbae {

void ChainSet::validate() const {
  if (num_chains() < 2) throw ChainCountTooSmall("need at least 2 chains");
  if (num_draws() < 2) throw std::invalid_argument("need at least 2 draws");
  for (const auto& c : chains) {
    if (c.rows() != num_draws() || c.cols() != num_dims()) {
      throw ShapeMismatch("chains must share draws and dimensions");
    }
  }
}

Eigen::VectorXd rhat(const ChainSet& cs) {
  cs.validate();
  const Eigen::Index m = cs.num_chains();
  const Eigen::Index n = cs.num_draws();
  const Eigen::Index dims = cs.num_dims();

  Eigen::VectorXd out(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    Eigen::VectorXd means(m), vars(m);
    for (Eigen::Index c = 0; c < m; ++c) {
      const Eigen::VectorXd col = cs.chains[static_cast<std::size_t>(c)].col(d);
      const double mu = col.mean();
      means[c] = mu;
      vars[c] = (col.array() - mu).square().sum() / static_cast<double>(n - 1);
    }
    const double w = vars.mean();
    if (w == 0.0) {
      throw DegenerateChains("zero within-chain variance in dimension " +
                             std::to_string(d));
    }
    const double grand = means.mean();
    const double b = static_cast<double>(n) *
                     (means.array() - grand).square().sum() /
                     static_cast<double>(m - 1);
    const double nn = static_cast<double>(n);
    out[d] = std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
  }
  return out;
}

double median(Eigen::VectorXd values) {
  if (values.size() == 0) throw EmptySelection("median of nothing");
  std::sort(values.data(), values.data() + values.size());
  const Eigen::Index n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Metrics metrics(const Eigen::Ref<const RowMat>& pred_mean,
                const Eigen::Ref<const RowMat>& pred_var,
                const Eigen::Ref<const RowMat>& truth,
                const Eigen::Ref<const RowMat>& mask) {
  if (pred_mean.rows() != truth.rows() || pred_mean.cols() != truth.cols() ||
      mask.rows() != truth.rows() || mask.cols() != truth.cols() ||
      pred_var.rows() != truth.rows() || pred_var.cols() != truth.cols()) {
    throw ShapeMismatch("metric inputs disagree in shape");
  }
  double count = 0.0, se = 0.0, ae = 0.0, nll = 0.0;
  double truth_sum = 0.0, truth_sq = 0.0;
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      if (mask(i, j) == 0.0) continue;
      const double err = pred_mean(i, j) - truth(i, j);
      se += err * err;
      ae += std::abs(err);
      const double v = pred_var(i, j);
      nll += 0.5 * (std::log(2.0 * M_PI * v) + err * err / v);
      truth_sum += truth(i, j);
      truth_sq += truth(i, j) * truth(i, j);
      count += 1.0;
    }
  }
  if (count == 0.0) throw EmptySelection("no entries selected by the mask");
  Metrics m;
  m.mse = se / count;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / count;
  m.nll = nll / count;
  const double truth_mean = truth_sum / count;
  const double truth_var = truth_sq / count - truth_mean * truth_mean;
  if (truth_var <= 0.0) {
    throw ZeroTruthVariance("constant truth cannot be standardized");
  }
  m.smse = m.mse / truth_var;
  return m;
}

void export_traces(const ChainSet& cs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "chain,draw,dim,value\n";
  char buf[40];
  for (Eigen::Index c = 0; c < cs.num_chains(); ++c) {
    const auto& chain = cs.chains[static_cast<std::size_t>(c)];
    for (Eigen::Index d = 0; d < chain.rows(); ++d) {
      for (Eigen::Index k = 0; k < chain.cols(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", chain(d, k));
        out << c << ',' << d << ',' << k << ',' << buf << '\n';
      }
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

ChainSet load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "chain,draw,dim,value") {
    throw ParseError("bad trace header in " + path);
  }
  struct Cell {
    Eigen::Index chain, draw, dim;
    double value;
  };
  std::vector<Cell> cells;
  Eigen::Index max_chain = -1, max_draw = -1, max_dim = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string part;
    Cell cell{};
    std::getline(ss, part, ',');
    cell.chain = std::stoll(part);
    std::getline(ss, part, ',');
    cell.draw = std::stoll(part);
    std::getline(ss, part, ',');
    cell.dim = std::stoll(part);
    std::getline(ss, part, ',');
    const char* b = part.data();
    auto [p, ec] = std::from_chars(b, b + part.size(), cell.value);
    if (ec != std::errc()) throw ParseError("bad trace value: " + part);
    (void)p;
    max_chain = std::max(max_chain, cell.chain);
    max_draw = std::max(max_draw, cell.draw);
    max_dim = std::max(max_dim, cell.dim);
    cells.push_back(cell);
  }
  ChainSet cs;
  cs.chains.assign(static_cast<std::size_t>(max_chain + 1),
                   RowMat::Zero(max_draw + 1, max_dim + 1));
  for (const auto& cell : cells) {
    cs.chains[static_cast<std::size_t>(cell.chain)](cell.draw, cell.dim) =
        cell.value;
  }
  return cs;
}

std::string metrics_report(const Metrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "rmse=%.17g\nmse=%.17g\nsmse=%.17g\nmae=%.17g\nnll=%.17g\n",
                m.rmse, m.mse, m.smse, m.mae, m.nll);
  return buf;
}

}  // namespace sgpbae
