#pragma once

// Lloyd's k-means with k-means++ seeding: turns feature frames into base
// token ids.

#include <abpe/binary_io.hpp>
#include <abpe/corpus_io.hpp>
#include <abpe/error.hpp>
#include <abpe/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

namespace abpe {

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids; // k x dim, row-major, float-representable

  const double* centroid(std::size_t c) const { return centroids.data() + c * dim; }

  bool operator==(const KMeansModel&) const = default;
};

struct KMeansOptions {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

struct KMeansFit {
  KMeansModel model;
  /// Inertia of the seeding followed by the inertia after every Lloyd step.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;

  double inertia() const { return inertia_history.back(); }
};

namespace detail {

inline double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

struct Nearest {
  std::size_t index;
  double distance;
};

inline Nearest nearest_centroid(const double* point, const std::vector<double>& centroids, std::size_t k,
                                std::size_t dim) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(point, centroids.data() + c * dim, dim);
    if (d < best.distance) best = {c, d}; // strict: ties keep the lower index
  }
  return best;
}

inline double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

} // namespace detail

/// k-means++: first centre uniform, later ones drawn proportional to the
/// squared distance to the nearest centre chosen so far.
inline std::vector<double> kmeans_plus_plus(const FeatureMatrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows, dim = x.dim;
  std::vector<double> centroids;
  centroids.reserve(k * dim);
  auto push = [&](std::size_t i) { centroids.insert(centroids.end(), x.row(i), x.row(i) + dim); };

  push(rng.index(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(x.row(i), centroids.data(), dim);

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0.0) --pick; // rounding fell past the last positive weight
    } else {
      pick = rng.index(n);
    }
    push(pick);
    const double* added = centroids.data() + c * dim;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], detail::squared_distance(x.row(i), added, dim));
  }
  return centroids;
}

inline KMeansFit kmeans_fit(const FeatureMatrix& x, const KMeansOptions& opt) {
  const std::size_t n = x.rows, dim = x.dim, k = opt.k;
  if (k == 0) throw ArgumentError("kmeans: k must be >= 1");
  if (n < k) throw ArgumentError("kmeans: need at least k rows (N=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  if (opt.max_iters == 0) throw ArgumentError("kmeans: max_iters must be >= 1");
  if (!(opt.tol >= 0.0)) throw ArgumentError("kmeans: tol must be >= 0");
  for (double v : x.values)
    if (!std::isfinite(v)) throw ArgumentError("kmeans: non-finite feature value");

  Rng rng(opt.seed);
  std::vector<double> centroids = kmeans_plus_plus(x, k, rng);

  KMeansFit fit;
  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  auto assign_all = [&] {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto near = detail::nearest_centroid(x.row(i), centroids, k, dim);
      assign[i] = near.index;
      dist[i] = near.distance;
      inertia += near.distance;
    }
    return inertia;
  };

  fit.inertia_history.push_back(assign_all());
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < opt.max_iters; ++iter) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];

    // Empty cluster: move its centroid onto the point farthest from its own
    // centroid and hand that point over.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (counts[assign[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
      if (far == n) break; // every point already sits alone in its cluster
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
    }

    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* s = sums.data() + assign[i] * dim;
      const double* p = x.row(i);
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
    }
    double max_shift2 = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      double shift2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double updated = sums[c * dim + j] / static_cast<double>(counts[c]);
        const double d = updated - centroids[c * dim + j];
        shift2 += d * d;
        centroids[c * dim + j] = updated;
      }
      max_shift2 = std::max(max_shift2, shift2);
    }
    fit.inertia_history.push_back(assign_all());
    fit.iterations = iter + 1;
    if (std::sqrt(max_shift2) <= opt.tol) break;
  }

  // Stored centroids are float-representable so the f32 model file is lossless.
  for (double& c : centroids) c = detail::round_to_float(c);
  fit.inertia_history.back() = assign_all();
  fit.model = KMeansModel{k, dim, std::move(centroids)};
  return fit;
}

inline TokenSequence kmeans_assign(const KMeansModel& model, const FeatureMatrix& x) {
  if (x.dim != model.dim)
    throw ArgumentError("kmeans_assign: feature dim " + std::to_string(x.dim) + " != model dim " +
                        std::to_string(model.dim));
  TokenSequence out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    out[i] = static_cast<TokenId>(detail::nearest_centroid(x.row(i), model.centroids, model.k, model.dim).index);
  return out;
}

inline FeatureMatrix centroids_as_features(const KMeansModel& model) {
  return FeatureMatrix(model.k, model.dim, model.centroids);
}

/// Uniform subsample of min(n, rows) rows (reservoir sampling), original order kept.
inline FeatureMatrix reservoir_sample(const FeatureMatrix& x, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ArgumentError("reservoir_sample: n must be >= 1");
  if (n >= x.rows) return x;
  Rng rng(seed);
  std::vector<std::size_t> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = i;
  for (std::size_t i = n; i < x.rows; ++i) {
    const auto j = rng.index(i + 1);
    if (j < n) keep[j] = i;
  }
  std::sort(keep.begin(), keep.end());
  std::vector<double> values;
  values.reserve(n * x.dim);
  for (std::size_t i : keep) values.insert(values.end(), x.row(i), x.row(i) + x.dim);
  return FeatureMatrix(n, x.dim, std::move(values));
}

// Model file: "ABPEKMNS", u32 version, u64 k, u64 D, k*D f32.

inline constexpr std::string_view kKMeansMagic = "ABPEKMNS";
inline constexpr std::uint32_t kKMeansVersion = 1;

inline void write_kmeans(std::ostream& out, const KMeansModel& m) {
  binary::write_magic(out, kKMeansMagic);
  binary::write_le<std::uint32_t>(out, kKMeansVersion);
  binary::write_le<std::uint64_t>(out, m.k);
  binary::write_le<std::uint64_t>(out, m.dim);
  for (double c : m.centroids) binary::write_f32(out, static_cast<float>(c));
}

inline KMeansModel read_kmeans(std::istream& in, const std::string& source = "") {
  binary::Reader r(in, source);
  r.expect_magic(kKMeansMagic);
  if (const auto v = r.read_le<std::uint32_t>(); v != kKMeansVersion)
    r.fail("unsupported k-means model version " + std::to_string(v));
  KMeansModel m;
  m.k = r.read_le<std::uint64_t>();
  m.dim = r.read_le<std::uint64_t>();
  if (m.k == 0 || m.dim == 0) r.fail("k-means model needs k >= 1 and D >= 1");
  if (m.dim > (1ull << 32) || m.k > (1ull << 36) / m.dim) r.fail("implausible k-means dimensions");
  m.centroids.resize(m.k * m.dim);
  for (double& c : m.centroids) {
    c = r.read_f32();
    if (!std::isfinite(c)) r.fail("non-finite centroid value");
  }
  r.expect_end();
  return m;
}

inline void save_kmeans(const KMeansModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_kmeans(out, m);
}

inline KMeansModel load_kmeans(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_kmeans(in, path.string());
}

} // namespace abpe
