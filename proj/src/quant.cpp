#include "ncomp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ncomp/errors.hpp"

namespace ncomp {

std::uint64_t dynamic_cluster_count(std::uint64_t layer_params, std::uint64_t params_per_set,
                                    std::uint64_t base_clusters) {
  if (params_per_set < 1 || base_clusters < 1) throw ConfigError("cluster rule needs N >= 1 and C >= 1");
  if (layer_params == 0) return 0;
  return (layer_params + params_per_set - 1) / params_per_set * base_clusters;
}

std::vector<double> init_centroids_linear(double w_min, double w_max, std::size_t c) {
  if (c < 1) throw ConfigError("need at least one centroid");
  if (!(w_min <= w_max)) throw ValueError("init_centroids_linear: w_min > w_max");
  if (c == 1) return {(w_min + w_max) / 2.0};
  std::vector<double> centroids(c);
  const double step = (w_max - w_min) / static_cast<double>(c - 1);
  for (std::size_t i = 0; i < c; ++i) centroids[i] = w_min + static_cast<double>(i) * step;
  centroids.back() = w_max;
  return centroids;
}

namespace {

// Segment starts for sorted values under sorted centroids. A value belongs to
// cluster i when it is <= the midpoint between centroids i and i+1; ties at a
// midpoint are equidistant and go to the lower index.
std::vector<std::size_t> segment_starts(const std::vector<double>& sorted_values, const std::vector<double>& centroids) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> start(k + 1, 0);
  for (std::size_t i = 1; i < k; ++i) {
    const double mid = (centroids[i - 1] + centroids[i]) / 2.0;
    start[i] = static_cast<std::size_t>(
        std::upper_bound(sorted_values.begin() + static_cast<std::ptrdiff_t>(start[i - 1]), sorted_values.end(), mid) -
        sorted_values.begin());
  }
  start[k] = sorted_values.size();
  return start;
}

long double segment_sse(const std::vector<double>& sorted_values, const std::vector<std::size_t>& start,
                        const std::vector<double>& centroids) {
  long double sse = 0.0L;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    for (std::size_t j = start[i]; j < start[i + 1]; ++j) {
      const long double d = static_cast<long double>(sorted_values[j]) - centroids[i];
      sse += d * d;
    }
  }
  return sse;
}

}  // namespace

KmeansResult kmeans_1d(std::span<const double> values, std::vector<double> centroids, double tolerance,
                       int max_iterations) {
  if (values.empty()) throw ValueError("kmeans_1d: no values");
  if (centroids.empty()) throw ValueError("kmeans_1d: no centroids");
  if (tolerance < 0 || max_iterations < 1) throw ConfigError("kmeans_1d: bad tolerance or iteration limit");

  const std::size_t n = values.size();
  const std::size_t k = centroids.size();

  // Work over sorted values: assignment reduces to midpoint bisection and
  // centroid means come from prefix sums. Keeping the centroid array sorted
  // only permutes cluster identities; assignments are reported against the
  // final order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] != values[b] ? values[a] < values[b] : a < b;
  });
  std::vector<double> sorted(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = values[order[i]];
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];

  std::sort(centroids.begin(), centroids.end());

  KmeansResult result;
  std::vector<std::size_t> start = segment_starts(sorted, centroids);
  long double inertia = segment_sse(sorted, start, centroids);
  result.inertia_trace.push_back(static_cast<double>(inertia));

  for (int iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter + 1;

    // Update: means of nonempty segments; empty clusters grab the value
    // currently farthest from its segment mean.
    std::vector<double> updated(centroids);
    std::vector<std::size_t> empties;
    for (std::size_t i = 0; i < k; ++i) {
      if (start[i + 1] > start[i]) {
        updated[i] = (prefix[start[i + 1]] - prefix[start[i]]) / static_cast<double>(start[i + 1] - start[i]);
      } else {
        empties.push_back(i);
      }
    }
    bool reseeded = false;
    if (!empties.empty()) {
      std::vector<double> deviation(n, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = start[i]; j < start[i + 1]; ++j) deviation[j] = std::abs(sorted[j] - updated[i]);
      }
      std::vector<bool> taken(n, false);
      for (std::size_t e : empties) {
        std::size_t best = n;
        for (std::size_t j = 0; j < n; ++j) {
          if (!taken[j] && (best == n || deviation[j] > deviation[best])) best = j;
        }
        if (best == n || deviation[best] == 0.0) break;  // nothing left to split off
        updated[e] = sorted[best];
        taken[best] = true;
        reseeded = true;
      }
    }
    std::sort(updated.begin(), updated.end());
    centroids.swap(updated);

    start = segment_starts(sorted, centroids);
    const long double prev = inertia;
    inertia = segment_sse(sorted, start, centroids);
    result.inertia_trace.push_back(static_cast<double>(inertia));

    if (!reseeded) {
      if (prev == 0.0L || std::abs(static_cast<double>(prev - inertia)) <= tolerance * static_cast<double>(prev)) break;
    }
  }

  // Duplicate centroids leave the midpoint rule assigning to the higher
  // index; fold those back so ties always resolve to the lower one.
  std::vector<std::uint32_t> canon(k);
  for (std::size_t i = 0; i < k; ++i) {
    canon[i] = i > 0 && centroids[i] == centroids[i - 1] ? canon[i - 1] : static_cast<std::uint32_t>(i);
  }
  result.centroids = std::move(centroids);
  result.inertia = static_cast<double>(inertia);
  result.assignments.assign(n, 0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = start[i]; j < start[i + 1]; ++j) {
      result.assignments[order[j]] = canon[i];
    }
  }
  return result;
}

}  // namespace ncomp
