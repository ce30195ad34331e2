#include "widthlab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>

#include "widthlab/csv.hpp"
#include "widthlab/errors.hpp"

namespace widthlab {

namespace {

// Oracle seed for the cached Gegenbauer normalization Monte Carlo.
constexpr std::uint64_t kNormOracleSeed = 0x6765676e62617565ull;
constexpr int kNormOracleSamples = 1'000'000;

Vector unit_vector(Rng rng, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.next_gaussian();
  return v / v.norm();
}

std::vector<int> permutation(Rng rng, int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  // Fisher-Yates with rejection-free modulo bias left in: the bias at n <<
  // 2^64 is far below anything observable here.
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_u64() %
                                    static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

}  // namespace

Matrix sample_sphere(Rng& rng, int dim, int n) {
  Matrix x(dim, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < dim; ++i) x(i, j) = rng.next_gaussian();
    x.col(j) /= x.col(j).norm();
  }
  return x;
}

double gegenbauer_unnormalized(int k, int dim, double t) {
  const double lambda = (dim - 2) / 2.0;
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = 2.0 * lambda * t;
  for (int n = 2; n <= k; ++n) {
    const double next = (2.0 * (n + lambda - 1.0) * t * cur -
                         (n + 2.0 * lambda - 2.0) * prev) /
                        static_cast<double>(n);
    prev = cur;
    cur = next;
  }
  return cur;
}

double gegenbauer_norm_constant(int k, int dim) {
  static std::map<std::pair<int, int>, double> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(k, dim);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  // t = beta . x for x uniform on the sphere equals z_0/||z|| for Gaussian z.
  Rng rng = Rng::substream(kNormOracleSeed, "gegenbauer_norm",
                           static_cast<std::uint64_t>(k) * 1000 +
                               static_cast<std::uint64_t>(dim));
  double sum_sq = 0.0;
  Vector z(dim);
  for (int s = 0; s < kNormOracleSamples; ++s) {
    for (int i = 0; i < dim; ++i) z(i) = rng.next_gaussian();
    const double t = z(0) / z.norm();
    const double c = gegenbauer_unnormalized(k, dim, t);
    sum_sq += c * c;
  }
  const double q = std::sqrt(sum_sq / kNormOracleSamples);
  cache[key] = q;
  return q;
}

double gegenbauer_q(int k, int dim, double t) {
  if (dim < 3) throw DomainError("gegenbauer_q: dimension must be >= 3");
  if (std::abs(t) > 1.0 + 1e-12)
    throw DomainError("gegenbauer_q: |t| > 1");
  return gegenbauer_unnormalized(k, dim, t) / gegenbauer_norm_constant(k, dim);
}

Vector task_beta(const TaskSpec& task) {
  return unit_vector(Rng::substream(task.beta_seed, "task_beta"),
                     task.input_dim);
}

Matrix target_eval(const TaskSpec& task, const Matrix& x) {
  if (x.rows() != task.input_dim)
    throw DimensionError("target_eval: input dimension mismatch");
  const int n = static_cast<int>(x.cols());

  if (task.kind == TaskKind::kGegenbauerRegression) {
    const Vector beta = task_beta(task);
    Matrix y(1, n);
    for (int j = 0; j < n; ++j) {
      double t = beta.dot(x.col(j));
      t = std::clamp(t, -1.0, 1.0);
      y(0, j) = gegenbauer_q(task.degree, task.input_dim, t);
    }
    return y;
  }

  const int c = task.classes;
  std::vector<Vector> u(static_cast<std::size_t>(c)), v(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) {
    u[static_cast<std::size_t>(i)] =
        unit_vector(Rng::substream(task.teacher_seed, "teacher_u",
                                   static_cast<std::uint64_t>(i)),
                    task.input_dim);
    v[static_cast<std::size_t>(i)] =
        unit_vector(Rng::substream(task.teacher_seed, "teacher_v",
                                   static_cast<std::uint64_t>(i)),
                    task.input_dim);
  }
  Matrix y = Matrix::Zero(c, n);
  for (int j = 0; j < n; ++j) {
    int best = 0;
    double best_score = -1e300;
    for (int i = 0; i < c; ++i) {
      const double t = std::clamp(v[static_cast<std::size_t>(i)].dot(x.col(j)),
                                  -1.0, 1.0);
      const double score = u[static_cast<std::size_t>(i)].dot(x.col(j)) +
                           gegenbauer_q(2, task.input_dim, t);
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    y(best, j) = 1.0;
  }
  return y;
}

Batch online_batch(const DataStream& stream, std::int64_t step) {
  if (stream.mode != StreamMode::kOnline)
    throw WrongModeError("online_batch: stream is not online");
  Rng rng = Rng::substream(stream.data_seed, "online_batch",
                           static_cast<std::uint64_t>(step));
  Batch b;
  b.x = sample_sphere(rng, stream.task.input_dim, stream.batch_size);
  b.y = target_eval(stream.task, b.x);
  return b;
}

DataStream make_offline(const TaskSpec& task, std::uint64_t data_seed,
                        int batch_size, int dataset_size, double noise_frac,
                        std::uint64_t shuffle_seed) {
  if (dataset_size < 1)
    throw ConfigError("make_offline: dataset_size must be >= 1");
  if (noise_frac < 0.0 || noise_frac > 1.0)
    throw ConfigError("make_offline: noise_frac must be in [0, 1]");
  DataStream s;
  s.task = task;
  s.data_seed = data_seed;
  s.batch_size = batch_size;
  s.mode = StreamMode::kOffline;
  s.dataset_size = dataset_size;
  s.noise_frac = noise_frac;
  s.shuffle_seed = shuffle_seed;
  return s;
}

OfflineData build_offline_data(const DataStream& stream) {
  if (stream.mode != StreamMode::kOffline)
    throw WrongModeError("build_offline_data: stream is not offline");
  const int p = stream.dataset_size;
  OfflineData data;
  Rng rng = Rng::substream(stream.data_seed, "offline_data");
  data.x = sample_sphere(rng, stream.task.input_dim, p);
  data.y = target_eval(stream.task, data.x);
  data.is_noisy.assign(static_cast<std::size_t>(p), 0);

  const int corrupt =
      static_cast<int>(std::llround(stream.noise_frac * p));
  if (corrupt > 0) {
    const std::vector<int> order =
        permutation(Rng::substream(stream.data_seed, "noise_select"), p);
    Rng noise = Rng::substream(stream.data_seed, "noise_labels");
    for (int i = 0; i < corrupt; ++i) {
      const int idx = order[static_cast<std::size_t>(i)];
      data.is_noisy[static_cast<std::size_t>(idx)] = 1;
      if (stream.task.kind == TaskKind::kOneHotClassification) {
        const int c = static_cast<int>(
            noise.next_u64() % static_cast<std::uint64_t>(stream.task.classes));
        data.y.col(idx).setZero();
        data.y(c, idx) = 1.0;
      } else {
        data.y(0, idx) = noise.next_gaussian();
      }
    }
  }
  return data;
}

int offline_steps_per_epoch(const DataStream& stream) {
  return (stream.dataset_size + stream.batch_size - 1) / stream.batch_size;
}

std::vector<int> offline_batch_indices(const DataStream& stream,
                                       std::int64_t step) {
  if (stream.mode != StreamMode::kOffline)
    throw WrongModeError("offline_batch_indices: stream is not offline");
  const int spe = offline_steps_per_epoch(stream);
  const std::int64_t epoch = step / spe;
  const int slot = static_cast<int>(step % spe);
  const std::vector<int> order =
      permutation(Rng::substream(stream.shuffle_seed, "epoch_shuffle",
                                 static_cast<std::uint64_t>(epoch)),
                  stream.dataset_size);
  const int lo = slot * stream.batch_size;
  const int hi = std::min(lo + stream.batch_size, stream.dataset_size);
  return std::vector<int>(order.begin() + lo, order.begin() + hi);
}

Batch offline_batch(const DataStream& stream, const OfflineData& data,
                    std::int64_t step) {
  const std::vector<int> idx = offline_batch_indices(stream, step);
  Batch b;
  b.x.resize(data.x.rows(), static_cast<Eigen::Index>(idx.size()));
  b.y.resize(data.y.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.x.col(static_cast<Eigen::Index>(i)) = data.x.col(idx[i]);
    b.y.col(static_cast<Eigen::Index>(i)) = data.y.col(idx[i]);
  }
  return b;
}

void write_offline_csv(const DataStream& stream, const OfflineData& data,
                       const std::string& path) {
  CsvWriter csv(path);
  std::vector<std::string> header{"sample_id"};
  for (int i = 0; i < stream.task.input_dim; ++i)
    header.push_back("x_" + std::to_string(i));
  for (int c = 0; c < stream.task.output_dim(); ++c)
    header.push_back("y_" + std::to_string(c));
  header.emplace_back("is_noisy");
  csv.row(header);
  for (int j = 0; j < stream.dataset_size; ++j) {
    csv.field(j);
    for (int i = 0; i < stream.task.input_dim; ++i) csv.field(data.x(i, j));
    for (int c = 0; c < stream.task.output_dim(); ++c) csv.field(data.y(c, j));
    csv.field(static_cast<int>(data.is_noisy[static_cast<std::size_t>(j)]));
    csv.end_row();
  }
}

}  // namespace widthlab
