#include "sgpbae/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "sgpbae/errors.hpp"
#include "sgpbae/kernels.hpp"
#include "sgpbae/linalg.hpp"

namespace sgpbae {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_cell(const std::string& cell, Eigen::Index row, Eigen::Index col) {
  double out = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("unparseable numeric cell at row " + std::to_string(row) +
                     ", column " + std::to_string(col) + ": '" + cell + "'");
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

void Dataset::validate() const {
  if (y.rows() != x.rows() || y.rows() != mask.rows() || y.cols() != mask.cols()) {
    throw ShapeMismatch("dataset shapes disagree");
  }
  if (!x.allFinite()) throw std::invalid_argument("X contains NaN or Inf");
  if (!y.allFinite()) throw std::invalid_argument("Y contains NaN or Inf");
  if (mask.sum() <= 0.0) throw std::invalid_argument("mask has no observed entries");
  if (!group.empty() && static_cast<Eigen::Index>(group.size()) != y.rows()) {
    throw ShapeMismatch("group labels do not cover every row");
  }
  for (int gid : group) {
    if (gid < 0 || gid >= n_groups) {
      throw std::invalid_argument("group id out of range");
    }
  }
}

std::vector<std::vector<Eigen::Index>> Dataset::rows_by_group() const {
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(n_groups));
  for (Eigen::Index i = 0; i < size(); ++i) {
    const int gid = group.empty() ? 0 : group[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(gid)].push_back(i);
  }
  return out;
}

Eigen::VectorXd render_ball_frame(int frame_size, double cx, double cy,
                                  double radius) {
  Eigen::VectorXd frame(frame_size * frame_size);
  for (int r = 0; r < frame_size; ++r) {
    for (int c = 0; c < frame_size; ++c) {
      const double dx = static_cast<double>(c) - cx;
      const double dy = static_cast<double>(r) - cy;
      const double dist = std::sqrt(dx * dx + dy * dy);
      // 1-pixel anti-aliased rim via coverage fraction.
      frame[r * frame_size + c] = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
    }
  }
  return frame;
}

std::vector<RowMat> sample_ball_trajectories(const MovingBallConfig& cfg,
                                             int n_videos) {
  const int t_len = cfg.frames_per_video;
  Rng rng(cfg.seed);

  KernelParams params;
  params.log_lengthscales = Eigen::VectorXd::Constant(1, std::log(cfg.gp_lengthscale));
  params.log_variance = 0.0;
  RowMat times(t_len, 1);
  for (int t = 0; t < t_len; ++t) times(t, 0) = t + 1.0;
  RowMat k = kernel_matrix(KernelKind::rbf_ard(), params, times, times);
  // Sample through the eigendecomposition: no jitter noise, so extreme
  // lengthscales give exactly constant paths.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(k)};
  const Eigen::MatrixXd root =
      es.eigenvectors() *
      es.eigenvalues().array().max(0.0).sqrt().matrix().asDiagonal();

  std::vector<RowMat> raw(static_cast<std::size_t>(n_videos));
  double lo[2] = {1e300, 1e300};
  double hi[2] = {-1e300, -1e300};
  for (int v = 0; v < n_videos; ++v) {
    RowMat traj(t_len, 2);
    traj.col(0) = root * rng.normal_vector(t_len);
    traj.col(1) = root * rng.normal_vector(t_len);
    for (int axis = 0; axis < 2; ++axis) {
      lo[axis] = std::min(lo[axis], traj.col(axis).minCoeff());
      hi[axis] = std::max(hi[axis], traj.col(axis).maxCoeff());
    }
    raw[static_cast<std::size_t>(v)] = std::move(traj);
  }

  // One affine map per axis over the whole dataset, onto the frame interior
  // [radius + 1, frame - radius - 2].
  const double px_lo = cfg.ball_radius_px + 1.0;
  const double px_hi = cfg.frame_size - cfg.ball_radius_px - 2.0;
  for (int axis = 0; axis < 2; ++axis) {
    const double width = hi[axis] - lo[axis];
    for (auto& traj : raw) {
      if (width < 1e-12) {
        traj.col(axis).setConstant(0.5 * (px_lo + px_hi));
      } else {
        traj.col(axis) = ((traj.col(axis).array() - lo[axis]) / width) *
                             (px_hi - px_lo) +
                         px_lo;
      }
    }
  }
  return raw;
}

MovingBall generate_moving_ball(const MovingBallConfig& cfg) {
  if (cfg.frame_size < 2 * cfg.ball_radius_px + 2) {
    throw std::invalid_argument("frame too small for the ball radius");
  }
  MovingBall out;
  out.trajectories = sample_ball_trajectories(cfg, cfg.n_videos);

  const int t_len = cfg.frames_per_video;
  const Eigen::Index n = static_cast<Eigen::Index>(cfg.n_videos) * t_len;
  const Eigen::Index p = static_cast<Eigen::Index>(cfg.frame_size) * cfg.frame_size;
  Dataset& d = out.data;
  d.x = RowMat(n, 1);
  d.y = RowMat(n, p);
  d.mask = RowMat::Ones(n, p);
  d.group.resize(static_cast<std::size_t>(n));
  d.n_groups = cfg.n_videos;
  for (int v = 0; v < cfg.n_videos; ++v) {
    const RowMat& traj = out.trajectories[static_cast<std::size_t>(v)];
    for (int t = 0; t < t_len; ++t) {
      const Eigen::Index row = static_cast<Eigen::Index>(v) * t_len + t;
      d.x(row, 0) = t + 1.0;
      d.y.row(row) = render_ball_frame(cfg.frame_size, traj(t, 0), traj(t, 1),
                                       cfg.ball_radius_px);
      d.group[static_cast<std::size_t>(row)] = v;
    }
  }
  d.aux_names = {"t"};
  d.names.resize(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    d.names[static_cast<std::size_t>(j)] = "px" + std::to_string(j);
  }
  return out;
}

namespace {

struct GlyphShape {
  // Components in frame-centered coordinates, deterministic in the seed.
  double bar_half_len, bar_half_width;
  double disc_x, disc_y, disc_r;
  double dot_x, dot_y, dot_r;

  explicit GlyphShape(std::uint64_t seed) {
    Rng rng(seed);
    bar_half_len = 7.0 + rng.uniform(-1.0, 1.0);
    bar_half_width = 2.0 + 0.5 * rng.uniform(-1.0, 1.0);
    disc_x = 5.0 + rng.uniform(-1.0, 1.0);
    disc_y = -4.5 + rng.uniform(-1.0, 1.0);
    disc_r = 4.0 + 0.5 * rng.uniform(-1.0, 1.0);
    dot_x = -4.5 + rng.uniform(-1.0, 1.0);
    dot_y = 5.5 + rng.uniform(-1.0, 1.0);
    dot_r = 2.5 + 0.5 * rng.uniform(-1.0, 1.0);
  }

  double sdf(double x, double y) const {
    const double bar = std::hypot(std::max(std::abs(x) - bar_half_len, 0.0),
                                  std::max(std::abs(y) - bar_half_width, 0.0)) -
                       std::min(std::max(std::abs(x) - bar_half_len,
                                         std::abs(y) - bar_half_width),
                                0.0);
    const double disc = std::hypot(x - disc_x, y - disc_y) - disc_r;
    const double dot = std::hypot(x - dot_x, y - dot_y) - dot_r;
    return std::min({bar, disc, dot});
  }
};

}  // namespace

Dataset generate_rotated_glyphs(int n_angles, std::uint64_t shape_seed) {
  if (n_angles < 4) throw std::invalid_argument("need at least 4 angles");
  const int size = 32;
  const GlyphShape shape(shape_seed);
  Dataset d;
  d.x = RowMat(n_angles, 1);
  d.y = RowMat(n_angles, size * size);
  d.mask = RowMat::Ones(n_angles, size * size);
  const double center = (size - 1) / 2.0;
  for (int a = 0; a < n_angles; ++a) {
    const double angle = 2.0 * M_PI * a / n_angles;
    d.x(a, 0) = angle;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double px = c - center;
        const double py = r - center;
        // rotate the sampling point back into glyph coordinates
        const double gx = ca * px + sa * py;
        const double gy = -sa * px + ca * py;
        d.y(a, r * size + c) = std::clamp(0.5 - shape.sdf(gx, gy), 0.0, 1.0);
      }
    }
  }
  d.aux_names = {"angle"};
  d.names.resize(static_cast<std::size_t>(size * size));
  for (std::size_t j = 0; j < d.names.size(); ++j) d.names[j] = "px" + std::to_string(j);
  return d;
}

CorrelatedGp generate_correlated_outputs(const CorrelatedGpConfig& cfg) {
  Rng rng(cfg.seed);
  const Eigen::Index n = cfg.n;
  const Eigen::Index p = cfg.outputs;

  RowMat times(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    times(i, 0) = 20.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  KernelParams params;
  params.log_lengthscales = Eigen::VectorXd::Constant(1, std::log(cfg.lengthscale));
  params.log_variance = 0.0;
  RowMat k = kernel_matrix(KernelKind::rbf_ard(), params, times, times);
  const RowMat l = cholesky_with_jitter(k).l;

  RowMat latents(n, 2);
  latents.col(0) = l * rng.normal_vector(n);
  latents.col(1) = l * rng.normal_vector(n);
  RowMat mixing(2, p);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < p; ++j) mixing(i, j) = rng.normal();

  CorrelatedGp out;
  out.truth = latents * mixing;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      out.truth(i, j) += cfg.output_noise * rng.normal();

  Dataset& d = out.data;
  d.x = times;
  d.y = out.truth;
  d.mask = RowMat::Ones(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (rng.uniform() < cfg.missing_fraction) {
        d.mask(i, j) = 0.0;
        d.y(i, j) = 0.0;
      }
    }
  }
  d.aux_names = {"t"};
  d.names.resize(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) d.names[static_cast<std::size_t>(j)] = "y" + std::to_string(j);
  return out;
}

Dataset load_csv(const std::string& path, const CsvSpec& spec) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row in " + path);
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<Eigen::Index> aux_idx;
  for (const auto& name : spec.aux_columns) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw NoAuxColumns("auxiliary column '" + name + "' not in header");
    }
    aux_idx.push_back(it - header.begin());
  }
  if (aux_idx.empty()) throw NoAuxColumns("no auxiliary columns designated");

  Eigen::Index group_idx = -1;
  if (!spec.group_column.empty()) {
    auto it = std::find(header.begin(), header.end(), spec.group_column);
    if (it == header.end()) {
      throw ParseError("group column '" + spec.group_column + "' not in header");
    }
    group_idx = it - header.begin();
  }

  std::vector<Eigen::Index> y_idx;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(header.size()); ++j) {
    if (j != group_idx &&
        std::find(aux_idx.begin(), aux_idx.end(), j) == aux_idx.end()) {
      y_idx.push_back(j);
    }
  }

  std::vector<std::vector<std::string>> rows;
  Eigen::Index row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }

  Dataset d;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  d.x = RowMat(n, static_cast<Eigen::Index>(aux_idx.size()));
  d.y = RowMat(n, static_cast<Eigen::Index>(y_idx.size()));
  d.mask = RowMat::Ones(n, static_cast<Eigen::Index>(y_idx.size()));
  for (auto j : aux_idx) d.aux_names.push_back(header[static_cast<std::size_t>(j)]);
  for (auto j : y_idx) d.names.push_back(header[static_cast<std::size_t>(j)]);

  std::map<long long, int> group_ids;
  if (group_idx >= 0) d.group.resize(static_cast<std::size_t>(n));

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cells = rows[static_cast<std::size_t>(i)];
    for (std::size_t a = 0; a < aux_idx.size(); ++a) {
      d.x(i, static_cast<Eigen::Index>(a)) =
          parse_cell(cells[static_cast<std::size_t>(aux_idx[a])], i + 1, aux_idx[a]);
    }
    for (std::size_t yj = 0; yj < y_idx.size(); ++yj) {
      const std::string& cell = cells[static_cast<std::size_t>(y_idx[yj])];
      if (cell.empty() || cell == spec.missing_token) {
        d.mask(i, static_cast<Eigen::Index>(yj)) = 0.0;
        d.y(i, static_cast<Eigen::Index>(yj)) = 0.0;
      } else {
        d.y(i, static_cast<Eigen::Index>(yj)) = parse_cell(cell, i + 1, y_idx[yj]);
      }
    }
    if (group_idx >= 0) {
      const long long raw = static_cast<long long>(
          parse_cell(cells[static_cast<std::size_t>(group_idx)], i + 1, group_idx));
      auto [it, inserted] =
          group_ids.emplace(raw, static_cast<int>(group_ids.size()));
      d.group[static_cast<std::size_t>(i)] = it->second;
      (void)inserted;
    }
  }
  d.n_groups = group_idx >= 0 ? std::max<int>(1, static_cast<int>(group_ids.size())) : 1;
  d.validate();
  return d;
}

void save_csv(const Dataset& data, const std::string& path, const CsvSpec& spec) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const bool grouped = !data.group.empty() && data.n_groups > 1;
  const std::string group_name =
      spec.group_column.empty() ? "group" : spec.group_column;
  const std::string missing =
      spec.missing_token.empty() ? "NaN" : spec.missing_token;

  if (grouped) out << group_name << ',';
  for (std::size_t a = 0; a < data.aux_names.size(); ++a) {
    out << data.aux_names[a] << ',';
  }
  for (std::size_t j = 0; j < data.names.size(); ++j) {
    out << data.names[j] << (j + 1 < data.names.size() ? "," : "");
  }
  out << '\n';

  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (grouped) out << data.group[static_cast<std::size_t>(i)] << ',';
    for (Eigen::Index a = 0; a < data.x.cols(); ++a) {
      out << format_double(data.x(i, a)) << ',';
    }
    for (Eigen::Index j = 0; j < data.y.cols(); ++j) {
      if (data.mask(i, j) == 0.0) {
        out << missing;
      } else {
        out << format_double(data.y(i, j));
      }
      if (j + 1 < data.y.cols()) out << ',';
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_pgm(const std::string& path,
               const Eigen::Ref<const Eigen::VectorXd>& frame, int frame_size) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "P2\n" << frame_size << ' ' << frame_size << "\n255\n";
  for (int r = 0; r < frame_size; ++r) {
    for (int c = 0; c < frame_size; ++c) {
      const double v = std::clamp(frame[r * frame_size + c], 0.0, 1.0);
      out << static_cast<int>(std::lround(v * 255.0))
          << (c + 1 < frame_size ? ' ' : '\n');
    }
  }
}

}  // namespace sgpbae
