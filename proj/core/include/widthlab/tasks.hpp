#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "widthlab/linalg.hpp"
#include "widthlab/rng.hpp"

namespace widthlab {

enum class TaskKind { kGegenbauerRegression, kOneHotClassification };

/// Synthetic task on the unit sphere S^{D-1}.
///
/// Regression: y = Q_k(beta . x), a degree-k Gegenbauer polynomial of the
/// projection onto a fixed random unit vector beta, normalized to unit second
/// moment over the sphere.  Classification: one-hot argmax over `classes`
/// teacher scores s_c(x) = u_c . x + Q_2(v_c . x) with fixed random unit
/// vectors u_c, v_c.
struct TaskSpec {
  int input_dim = 5;
  TaskKind kind = TaskKind::kGegenbauerRegression;
  int degree = 2;                  // regression only
  std::uint64_t beta_seed = 1;     // regression only
  int classes = 10;                // classification only
  std::uint64_t teacher_seed = 1;  // classification only

  int output_dim() const {
    return kind == TaskKind::kGegenbauerRegression ? 1 : classes;
  }
};

/// `n` points drawn uniformly from S^{D-1}, as columns of a D x n matrix.
/// Each point is a normalized D-dimensional standard Gaussian draw.
Matrix sample_sphere(Rng& rng, int dim, int n);

/// Classical (unnormalized) Gegenbauer polynomial C_k^{(lambda)}(t) with
/// lambda = (D-2)/2, from the three-term recurrence
///   C_0 = 1,  C_1 = 2 lambda t,
///   n C_n = 2 (n + lambda - 1) t C_{n-1} - (n + 2 lambda - 2) C_{n-2}.
double gegenbauer_unnormalized(int k, int dim, double t);

/// Normalization constant q with E_{x ~ S^{D-1}}[ (C_k(beta.x)/q)^2 ] = 1.
/// Estimated once per (k, D) by a 10^6-sample Monte Carlo draw from a fixed
/// oracle seed and cached; deterministic across runs.
double gegenbauer_norm_constant(int k, int dim);

/// Unit-second-moment Gegenbauer value Q_k(t) = C_k^{(lambda)}(t) / q.
/// Throws DomainError for |t| > 1 + 1e-12 or D < 3.
double gegenbauer_q(int k, int dim, double t);

/// The task's fixed direction beta (regression), unit norm.
Vector task_beta(const TaskSpec& task);

/// Targets for the columns of X (points on the sphere), as a C x n matrix
/// (C = 1 for regression).  Throws DimensionError if rows(X) != input_dim.
Matrix target_eval(const TaskSpec& task, const Matrix& x);

enum class StreamMode { kOnline, kOffline };

/// Deterministic data source shared across every (width, seed) cell: the
/// batch at step t depends only on (data_seed, t, batch_size, mode), never on
/// the consumer.
struct DataStream {
  TaskSpec task;
  std::uint64_t data_seed = 1;
  int batch_size = 10;
  StreamMode mode = StreamMode::kOnline;
  // offline only:
  int dataset_size = 0;
  double noise_frac = 0.0;
  std::uint64_t shuffle_seed = 1;
};

struct Batch {
  Matrix x;  // D x B
  Matrix y;  // C x B
};

/// Fresh online batch at step t.  Throws WrongModeError unless mode is
/// kOnline.
Batch online_batch(const DataStream& stream, std::int64_t step);

/// Fixed offline dataset with labels corrupted on a deterministic
/// round(noise_frac * P)-element subset.  Corruption replaces the label:
/// a uniform random class for classification, an independent unit Gaussian
/// for regression.
struct OfflineData {
  Matrix x;                     // D x P
  Matrix y;                     // C x P (after corruption)
  std::vector<char> is_noisy;   // per sample
};

DataStream make_offline(const TaskSpec& task, std::uint64_t data_seed,
                        int batch_size, int dataset_size, double noise_frac,
                        std::uint64_t shuffle_seed);

OfflineData build_offline_data(const DataStream& stream);

int offline_steps_per_epoch(const DataStream& stream);

/// Dataset indices making up the batch at step t (the slice of that epoch's
/// permutation).
std::vector<int> offline_batch_indices(const DataStream& stream,
                                       std::int64_t step);

/// Batch at step t of multi-epoch training: epoch e = t / steps_per_epoch
/// visits a fresh permutation of the dataset (from shuffle_seed and e), so
/// each epoch touches every sample exactly once.  Throws WrongModeError
/// unless mode is kOffline.
Batch offline_batch(const DataStream& stream, const OfflineData& data,
                    std::int64_t step);

/// Writes the dataset as CSV with header
/// sample_id,x_0..x_{D-1},y_0..y_{C-1},is_noisy.
void write_offline_csv(const DataStream& stream, const OfflineData& data,
                       const std::string& path);

}  // namespace widthlab
