#pragma once

// Offline trajectory datasets: synthetic generators for the two study
// problems (periodic scalar series with trend, decelerating curved landing
// approaches observed by a range/bearing sensor), seeded splits with
// normalization statistics, and a bit-exact CSV interchange format.

#include <cstdint>
#include <string>
#include <vector>

#include "ebrns/mat.hpp"

namespace ebrns {

struct TrajectorySample {
  int id = 0;
  std::vector<Mat> x;  // K ground-truth states, n_x x 1 each
  std::vector<Mat> z;  // K measurements, n_z x 1 each
};

struct Dataset {
  std::vector<TrajectorySample> samples;
  int n_x = 0, n_z = 0, k_len = 0;
};

struct SplitDataset {
  Dataset train, validation, test;
  Mat norm_scale;  // n_x x 1 per-dimension max-abs over the train states
};

// Hourly scalar series over k_len steps: daily sinusoid (period 24 steps,
// amplitude U[5,15], phase U[0,2pi)), linear trend with slope U[-0.2,0.2]
// per step, plus an AR(1) disturbance (coefficient 0.9, innovation std 0.5,
// started from its stationary law). Measurements add N(0, sigma_v^2).
// Per-sample generators are derived as seed ^ id.
Dataset gen_temperature(int count, int k_len, double sigma_v, std::uint64_t seed);

// Planar landing approaches: quadratic Bezier arc from a randomized start
// (range 40-80 km, bearing within +-50 degrees of the approach axis) to a
// point within ~1 km of the fixed destination (15 km, 0), traversed in
// (k_len-1)*dt seconds with a cubic-smoothstep speed profile whose start/end
// speeds keep the 120:70 ratio and whose scale matches the arc length.
// States are [px, py, vx, vy] with velocities the exact path tangents;
// measurements are range/azimuth plus N(0, diag(sigma_range^2,
// sigma_azimuth^2)) noise (azimuth in radians). All positions keep px > 0.
Dataset gen_landing(int count, int k_len, double dt, double sigma_range, double sigma_azimuth,
                    std::uint64_t seed);

// Seeded shuffle then contiguous split. Sizes are floor(count * proportion)
// with the remainder assigned to train; proportions must sum to 1 within
// 1e-9 and every split must end up non-empty (ConfigError otherwise).
// Normalization statistics come from the train split only.
SplitDataset split_dataset(const Dataset& data, double p_train, double p_val, double p_test,
                           std::uint64_t seed);

// CSV interchange. Header: sample_id,k,x_1..x_{n_x},z_1..z_{n_z}; rows
// sorted by (sample_id, k); values printed with 17 significant digits so a
// write-then-read round trip is bit-exact for finite values. Malformed rows
// raise ParseError with the line number; samples of differing lengths raise
// ParseError naming both sample ids.
void write_csv(const std::string& path, const Dataset& data);
Dataset read_csv(const std::string& path);

}  // namespace ebrns
