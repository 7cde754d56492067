#include "ebrns/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ebrns/errors.hpp"
#include "ebrns/model.hpp"
#include "ebrns/rng.hpp"

namespace ebrns {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
}

// --- landing-path geometry --------------------------------------------------

struct Bezier2 {
  double sx, sy, cx, cy, ex, ey;  // start, control, end

  void point(double u, double& px, double& py) const {
    const double w0 = (1.0 - u) * (1.0 - u), w1 = 2.0 * (1.0 - u) * u, w2 = u * u;
    px = w0 * sx + w1 * cx + w2 * ex;
    py = w0 * sy + w1 * cy + w2 * ey;
  }
  void deriv(double u, double& dx, double& dy) const {
    dx = 2.0 * ((1.0 - u) * (cx - sx) + u * (ex - cx));
    dy = 2.0 * ((1.0 - u) * (cy - sy) + u * (ey - cy));
  }
  double speed(double u) const {
    double dx, dy;
    deriv(u, dx, dy);
    return std::sqrt(dx * dx + dy * dy);
  }
};

// Cumulative arc length of the curve at u = i/n, i = 0..n, by Simpson's rule
// on each panel. The curve is smooth, so panel error is O(h^5) and the table
// is far more accurate than any tolerance downstream.
std::vector<double> arc_table(const Bezier2& b, int n) {
  std::vector<double> cum(n + 1, 0.0);
  const double h = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const double u0 = i * h, u1 = u0 + h;
    const double mid = 0.5 * (u0 + u1);
    const double panel = (h / 6.0) * (b.speed(u0) + 4.0 * b.speed(mid) + b.speed(u1));
    cum[i + 1] = cum[i] + panel;
  }
  return cum;
}

// Invert the cumulative table: parameter u at arc distance s.
double u_at_arc(const std::vector<double>& cum, double s) {
  const int n = static_cast<int>(cum.size()) - 1;
  if (s <= 0.0) return 0.0;
  if (s >= cum[n]) return 1.0;
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  const int i = static_cast<int>(it - cum.begin()) - 1;
  const double seg = cum[i + 1] - cum[i];
  const double frac = seg > 0.0 ? (s - cum[i]) / seg : 0.0;
  return (i + frac) / n;
}

}  // namespace

Dataset gen_temperature(int count, int k_len, double sigma_v, std::uint64_t seed) {
  if (count <= 0) throw ConfigError("gen_temperature: count must be positive");
  if (k_len < 2) throw ConfigError("gen_temperature: k_len must be >= 2");
  require_positive(sigma_v, "gen_temperature: sigma_v");

  Dataset data;
  data.n_x = 1;
  data.n_z = 1;
  data.k_len = k_len;
  data.samples.reserve(count);

  for (int id = 0; id < count; ++id) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
    const double amp = rng.uniform(5.0, 15.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double slope = rng.uniform(-0.2, 0.2);

    TrajectorySample s;
    s.id = id;
    s.x.reserve(k_len);
    s.z.reserve(k_len);
    // AR(1) disturbance d_k = 0.9 d_{k-1} + 0.5 eps_k, seeded from its
    // stationary distribution (std 0.5/sqrt(1-0.81)).
    double d = rng.normal() * (0.5 / std::sqrt(1.0 - 0.81));
    for (int k = 0; k < k_len; ++k) {
      if (k > 0) d = 0.9 * d + 0.5 * rng.normal();
      const double truth = amp * std::sin(2.0 * kPi * k / 24.0 + phase) + slope * k + d;
      s.x.push_back(Mat::filled(1, 1, truth));
      s.z.push_back(Mat::filled(1, 1, truth + sigma_v * rng.normal()));
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

Dataset gen_landing(int count, int k_len, double dt, double sigma_range, double sigma_azimuth,
                    std::uint64_t seed) {
  if (count <= 0) throw ConfigError("gen_landing: count must be positive");
  if (k_len < 2) throw ConfigError("gen_landing: k_len must be >= 2");
  require_positive(dt, "gen_landing: dt");
  require_positive(sigma_range, "gen_landing: sigma_range");
  require_positive(sigma_azimuth, "gen_landing: sigma_azimuth");

  Dataset data;
  data.n_x = 4;
  data.n_z = 2;
  data.k_len = k_len;
  data.samples.reserve(count);

  const double dest_x = 15000.0, dest_y = 0.0;
  const double t_total = (k_len - 1) * dt;

  for (int id = 0; id < count; ++id) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
    const double range0 = rng.uniform(40000.0, 80000.0);
    const double bearing = rng.uniform(-50.0, 50.0) * kPi / 180.0;
    const double lateral = rng.uniform(-0.35, 0.35);
    const double end_dx = rng.uniform(-700.0, 700.0);
    const double end_dy = rng.uniform(-700.0, 700.0);

    Bezier2 b;
    b.sx = dest_x + range0 * std::cos(bearing);
    b.sy = dest_y + range0 * std::sin(bearing);
    b.ex = dest_x + end_dx;
    b.ey = dest_y + end_dy;
    // Control point: chord midpoint pushed sideways; the convex hull of
    // {start, control, end} bounds the path, and for this parameter range it
    // stays strictly inside the px > 0 half-plane.
    const double chx = b.ex - b.sx, chy = b.ey - b.sy;
    const double chord = std::sqrt(chx * chx + chy * chy);
    const double nx = -chy / chord, ny = chx / chord;
    b.cx = 0.5 * (b.sx + b.ex) + lateral * range0 * nx;
    b.cy = 0.5 * (b.sy + b.ey) + lateral * range0 * ny;

    const std::vector<double> cum = arc_table(b, 4096);
    const double arc_len = cum.back();

    // Speed profile: cubic smoothstep between speeds with a fixed 120:70
    // ratio, scaled so the distance covered in t_total equals the arc
    // length. s(t) = v0 t + (v1-v0) T (tau^3 - tau^4/2), tau = t/T.
    const double kappa = arc_len / (0.5 * (120.0 + 70.0) * t_total);
    const double v0 = 120.0 * kappa, v1 = 70.0 * kappa;

    TrajectorySample s;
    s.id = id;
    s.x.reserve(k_len);
    s.z.reserve(k_len);
    for (int k = 0; k < k_len; ++k) {
      const double t = k * dt;
      const double tau = t / t_total;
      const double dist = v0 * t + (v1 - v0) * t_total * (tau * tau * tau * (1.0 - 0.5 * tau));
      const double speed = v0 + (v1 - v0) * (3.0 * tau * tau - 2.0 * tau * tau * tau);
      const double u = u_at_arc(cum, dist);
      double px, py, dx, dy;
      b.point(u, px, py);
      b.deriv(u, dx, dy);
      const double dnorm = std::sqrt(dx * dx + dy * dy);
      Mat x = Mat::col({px, py, speed * dx / dnorm, speed * dy / dnorm});
      Mat z = radar_measure(x);
      z(0, 0) += sigma_range * rng.normal();
      z(1, 0) += sigma_azimuth * rng.normal();
      s.x.push_back(std::move(x));
      s.z.push_back(std::move(z));
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

SplitDataset split_dataset(const Dataset& data, double p_train, double p_val, double p_test,
                           std::uint64_t seed) {
  if (std::abs(p_train + p_val + p_test - 1.0) > 1e-9)
    throw ConfigError("split_dataset: proportions must sum to 1");
  const int n = static_cast<int>(data.samples.size());
  const int n_train_floor = static_cast<int>(std::floor(p_train * n));
  const int n_val = static_cast<int>(std::floor(p_val * n));
  const int n_test = static_cast<int>(std::floor(p_test * n));
  const int n_train = n - n_val - n_test;  // floor allocation, remainder to train
  if (n_train <= 0 || n_val <= 0 || n_test <= 0)
    throw ConfigError("split_dataset: a split would be empty (" + std::to_string(n_train) + "/" +
                      std::to_string(n_val) + "/" + std::to_string(n_test) + " of " +
                      std::to_string(n) + ")");
  (void)n_train_floor;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  SplitDataset out;
  auto take = [&](Dataset& dst, int begin, int len) {
    dst.n_x = data.n_x;
    dst.n_z = data.n_z;
    dst.k_len = data.k_len;
    dst.samples.reserve(len);
    for (int i = begin; i < begin + len; ++i) dst.samples.push_back(data.samples[order[i]]);
  };
  take(out.train, 0, n_train);
  take(out.validation, n_train, n_val);
  take(out.test, n_train + n_val, n_test);

  out.norm_scale = Mat::zeros(data.n_x, 1);
  for (const TrajectorySample& s : out.train.samples)
    for (const Mat& x : s.x)
      for (int i = 0; i < data.n_x; ++i)
        out.norm_scale(i, 0) = std::max(out.norm_scale(i, 0), std::abs(x(i, 0)));
  return out;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream f(path);
  if (!f) throw IoError("write_csv: cannot open " + path);
  f << "sample_id,k";
  for (int i = 1; i <= data.n_x; ++i) f << ",x_" << i;
  for (int i = 1; i <= data.n_z; ++i) f << ",z_" << i;
  f << "\n";
  char buf[64];
  for (const TrajectorySample& s : data.samples) {
    for (int k = 0; k < data.k_len; ++k) {
      f << s.id << "," << k;
      for (int i = 0; i < data.n_x; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.x[k](i, 0));
        f << "," << buf;
      }
      for (int i = 0; i < data.n_z; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.z[k](i, 0));
        f << "," << buf;
      }
      f << "\n";
    }
  }
  if (!f) throw IoError("write_csv: write failed for " + path);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    if (!std::isfinite(v)) throw ParseError("read_csv: non-finite value at line " +
                                            std::to_string(line_no));
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("read_csv: bad number '" + s + "' at line " + std::to_string(line_no));
  }
}

int parse_int(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("read_csv: bad integer '" + s + "' at line " + std::to_string(line_no));
  }
}

}  // namespace

Dataset read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_csv: cannot open " + path);

  std::string line;
  if (!std::getline(f, line)) throw ParseError("read_csv: empty file " + path);
  std::vector<std::string> head = split_fields(line);
  if (head.size() < 4 || head[0] != "sample_id" || head[1] != "k")
    throw ParseError("read_csv: bad header at line 1 (want sample_id,k,x_1..,z_1..)");
  int n_x = 0, n_z = 0;
  std::size_t col = 2;
  while (col < head.size() && head[col] == "x_" + std::to_string(n_x + 1)) {
    ++n_x;
    ++col;
  }
  while (col < head.size() && head[col] == "z_" + std::to_string(n_z + 1)) {
    ++n_z;
    ++col;
  }
  if (n_x == 0 || n_z == 0 || col != head.size())
    throw ParseError("read_csv: bad header at line 1 (want sample_id,k,x_1..,z_1..)");

  Dataset data;
  data.n_x = n_x;
  data.n_z = n_z;

  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_fields(line);
    if (fields.size() != head.size())
      throw ParseError("read_csv: expected " + std::to_string(head.size()) + " fields, got " +
                       std::to_string(fields.size()) + " at line " + std::to_string(line_no));
    const int id = parse_int(fields[0], line_no);
    const int k = parse_int(fields[1], line_no);
    if (data.samples.empty() || data.samples.back().id != id) {
      if (!data.samples.empty() && id <= data.samples.back().id)
        throw ParseError("read_csv: sample ids out of order at line " + std::to_string(line_no));
      data.samples.push_back(TrajectorySample{id, {}, {}});
    }
    TrajectorySample& s = data.samples.back();
    if (k != static_cast<int>(s.x.size()))
      throw ParseError("read_csv: step index " + std::to_string(k) + " out of order at line " +
                       std::to_string(line_no));
    Mat x(n_x, 1), z(n_z, 1);
    for (int i = 0; i < n_x; ++i) x(i, 0) = parse_double(fields[2 + i], line_no);
    for (int i = 0; i < n_z; ++i) z(i, 0) = parse_double(fields[2 + n_x + i], line_no);
    s.x.push_back(std::move(x));
    s.z.push_back(std::move(z));
  }
  if (data.samples.empty()) throw ParseError("read_csv: no data rows in " + path);

  data.k_len = static_cast<int>(data.samples.front().x.size());
  for (const TrajectorySample& s : data.samples)
    if (static_cast<int>(s.x.size()) != data.k_len)
      throw ParseError("read_csv: length mismatch between samples " +
                       std::to_string(data.samples.front().id) + " (" +
                       std::to_string(data.k_len) + " steps) and " + std::to_string(s.id) + " (" +
                       std::to_string(s.x.size()) + " steps)");
  return data;
}

}  // namespace ebrns
