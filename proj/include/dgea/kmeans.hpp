#ifndef DGEA_KMEANS_HPP
#define DGEA_KMEANS_HPP

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace dgea {

    struct KMeansOptions {
        int k = 2;
        int max_iterations = 100;
        int restarts = 1;
        std::uint64_t seed = 0;
    };

    struct KMeansResult {
        std::vector<int> labels;
        Matrix centers; // k x D
        double inertia = 0.0;
    };

    namespace detail {

        inline double row_sq_dist(const Matrix& a, Index i, const Matrix& b, Index j) {
            return (a.row(i) - b.row(j)).squaredNorm();
        }

        // k-means++ seeding.
        inline Matrix kmeanspp_init(const Matrix& pts, int k, std::mt19937_64& rng) {
            const Index n = pts.rows();
            Matrix centers(k, pts.cols());
            std::uniform_int_distribution<Index> pick(0, n - 1);
            centers.row(0) = pts.row(pick(rng));
            Vector best = Vector::Constant(n, std::numeric_limits<double>::infinity());
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            for (int c = 1; c < k; ++c) {
                for (Index i = 0; i < n; ++i)
                    best(i) = std::min(best(i), row_sq_dist(pts, i, centers, c - 1));
                const double total = best.sum();
                Index chosen = 0;
                if (total > 0.0) {
                    double r = unif(rng) * total;
                    for (chosen = 0; chosen < n - 1; ++chosen) {
                        r -= best(chosen);
                        if (r <= 0.0)
                            break;
                    }
                } else {
                    chosen = pick(rng);
                }
                centers.row(c) = pts.row(chosen);
            }
            return centers;
        }

        // Ensures every cluster is nonempty by moving the point farthest from its center
        // (taken from the largest cluster) into each empty cluster.
        inline void repair_empty_clusters(const Matrix& pts, std::vector<int>& labels, Matrix& centers) {
            const int k = static_cast<int>(centers.rows());
            for (;;) {
                std::vector<Index> counts(static_cast<std::size_t>(k), 0);
                for (int l : labels)
                    ++counts[static_cast<std::size_t>(l)];
                int empty = -1;
                for (int c = 0; c < k; ++c)
                    if (counts[static_cast<std::size_t>(c)] == 0) {
                        empty = c;
                        break;
                    }
                if (empty < 0)
                    return;
                int largest = 0;
                for (int c = 1; c < k; ++c)
                    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(largest)])
                        largest = c;
                Index far = -1;
                double far_d = -1.0;
                for (Index i = 0; i < pts.rows(); ++i) {
                    if (labels[static_cast<std::size_t>(i)] != largest)
                        continue;
                    const double d = row_sq_dist(pts, i, centers, largest);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                labels[static_cast<std::size_t>(far)] = empty;
                centers.row(empty) = pts.row(far);
            }
        }

        inline KMeansResult lloyd(const Matrix& pts, Matrix centers, int max_iterations) {
            const Index n = pts.rows();
            const int k = static_cast<int>(centers.rows());
            KMeansResult res;
            res.labels.assign(static_cast<std::size_t>(n), -1);
            for (int it = 0; it < max_iterations; ++it) {
                bool changed = false;
                for (Index i = 0; i < n; ++i) {
                    int best_c = 0;
                    double best_d = row_sq_dist(pts, i, centers, 0);
                    for (int c = 1; c < k; ++c) {
                        const double d = row_sq_dist(pts, i, centers, c);
                        if (d < best_d) {
                            best_d = d;
                            best_c = c;
                        }
                    }
                    if (res.labels[static_cast<std::size_t>(i)] != best_c) {
                        res.labels[static_cast<std::size_t>(i)] = best_c;
                        changed = true;
                    }
                }
                repair_empty_clusters(pts, res.labels, centers);
                Matrix sums = Matrix::Zero(k, pts.cols());
                std::vector<Index> counts(static_cast<std::size_t>(k), 0);
                for (Index i = 0; i < n; ++i) {
                    const int l = res.labels[static_cast<std::size_t>(i)];
                    sums.row(l) += pts.row(i);
                    ++counts[static_cast<std::size_t>(l)];
                }
                for (int c = 0; c < k; ++c)
                    centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                if (!changed && it > 0)
                    break;
            }
            res.centers = std::move(centers);
            res.inertia = 0.0;
            for (Index i = 0; i < n; ++i)
                res.inertia += row_sq_dist(pts, i, res.centers, res.labels[static_cast<std::size_t>(i)]);
            return res;
        }

    } // namespace detail

    /// Seeded Lloyd k-means on the rows of `pts` with k-means++ starts; keeps the lowest-inertia restart.
    /// Every returned cluster is nonempty.
    inline KMeansResult kmeans(const Matrix& pts, const KMeansOptions& opt) {
        detail::require(opt.k >= 1 && opt.k <= pts.rows(), "kmeans: need 1 <= k <= number of points");
        detail::require(opt.restarts >= 1, "kmeans: need at least one restart");
        std::mt19937_64 rng(opt.seed);
        KMeansResult best;
        best.inertia = std::numeric_limits<double>::infinity();
        for (int r = 0; r < opt.restarts; ++r) {
            KMeansResult cur = detail::lloyd(pts, detail::kmeanspp_init(pts, opt.k, rng), opt.max_iterations);
            if (cur.inertia < best.inertia)
                best = std::move(cur);
        }
        return best;
    }

} // namespace dgea

#endif
