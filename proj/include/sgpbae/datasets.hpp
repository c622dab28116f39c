#pragma once

#include <string>
#include <vector>

#include "sgpbae/rng.hpp"
#include "sgpbae/tensor.hpp"

namespace sgpbae {

// High-dimensional observations Y indexed by low-dimensional auxiliary
// inputs X, with an observation mask (true entries stored as 1.0).
// Rows may be partitioned into groups (e.g. one video per group); each
// group carries its own latent GP instance.
struct Dataset {
  RowMat x;     // N x D
  RowMat y;     // N x P
  RowMat mask;  // N x P, 1 = observed, 0 = missing (stored as zero)
  std::vector<std::string> aux_names;
  std::vector<std::string> names;
  std::vector<int> group;  // per-row group id; empty means one group
  int n_groups = 1;

  Eigen::Index size() const { return y.rows(); }
  Eigen::Index aux_dim() const { return x.cols(); }
  Eigen::Index data_dim() const { return y.cols(); }
  void validate() const;
  std::vector<std::vector<Eigen::Index>> rows_by_group() const;
};

struct MovingBallConfig {
  int n_videos = 35;
  int frames_per_video = 30;
  int frame_size = 32;
  double gp_lengthscale = 2.0;
  double ball_radius_px = 3.0;
  std::uint64_t seed = 0;
};

struct MovingBall {
  Dataset data;                    // X = within-video timestamps, one group per video
  std::vector<RowMat> trajectories;  // per video: frames x 2 pixel coordinates
};

// Two independent GP draws per video over timestamps 1..T, mapped affinely
// into the frame interior and rendered as an anti-aliased disc.
MovingBall generate_moving_ball(const MovingBallConfig& cfg);

// Raw trajectory draws in pixel coordinates without rendering; cheap enough
// for statistical checks over thousands of videos.
std::vector<RowMat> sample_ball_trajectories(const MovingBallConfig& cfg,
                                             int n_videos);

// Single anti-aliased disc frame, flattened row-major, intensities in [0,1].
Eigen::VectorXd render_ball_frame(int frame_size, double cx, double cy,
                                  double radius);

// A fixed asymmetric glyph rotated at angles evenly spaced in [0, 2pi);
// X = angle, Y = flattened 32x32 frame.
Dataset generate_rotated_glyphs(int n_angles, std::uint64_t shape_seed);

struct CorrelatedGpConfig {
  int n = 200;
  int outputs = 2;
  double lengthscale = 1.5;
  double output_noise = 0.05;
  double missing_fraction = 0.3;
  std::uint64_t seed = 0;
};

struct CorrelatedGp {
  Dataset data;  // mask reflects the missing entries, masked Y stored as 0
  RowMat truth;  // complete observations before masking
};

// Multi-output series driven by shared latent GP draws through a random
// mixing matrix; used by the imputation studies.
CorrelatedGp generate_correlated_outputs(const CorrelatedGpConfig& cfg);

struct CsvSpec {
  std::vector<std::string> aux_columns;
  std::string group_column;  // empty = ungrouped
  std::string missing_token = "NaN";
};

// Header row required. Designated columns become X, the rest become Y;
// cells equal to the missing token (or empty) clear the mask and store 0.
Dataset load_csv(const std::string& path, const CsvSpec& spec);
void save_csv(const Dataset& data, const std::string& path,
              const CsvSpec& spec = {});

// Grayscale dump for eyeballing frames.
void write_pgm(const std::string& path,
               const Eigen::Ref<const Eigen::VectorXd>& frame, int frame_size);

}  // namespace sgpbae
