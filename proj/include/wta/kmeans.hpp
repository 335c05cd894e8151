#ifndef WTA_KMEANS_HPP_
#define WTA_KMEANS_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wta/error.hpp"
#include "wta/loss.hpp"
#include "wta/model.hpp"
#include "wta/optimizer.hpp"
#include "wta/rng.hpp"
#include "wta/tensor.hpp"
#include "wta/training.hpp"

namespace wta {

struct PointSet {
	std::size_t n = 0;
	std::size_t d = 0;
	std::vector<double> values; // row-major n x d

	PointSet() = default;
	PointSet(std::size_t n_, std::size_t d_) : n(n_), d(d_), values(n_ * d_, 0.0) {}

	std::span<const double> point(std::size_t i) const { return {values.data() + i * d, d}; }
	std::span<double> point(std::size_t i) { return {values.data() + i * d, d}; }
	Tensor as_tensor() const { return Tensor({n, d}, values); }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
	double s = 0.0;
	for (std::size_t t = 0; t < a.size(); ++t) {
		const double v = a[t] - b[t];
		s += v * v;
	}
	return s;
}

/// Lattice of blob means with spacing 5: (0,0), (5,0), (0,5), (10,0), (5,5), ...
inline std::vector<std::pair<double, double>> blob_centers(std::size_t blobs) {
	std::vector<std::pair<double, double>> c;
	for (std::size_t s = 0; c.size() < blobs; ++s)
		for (std::size_t x = s + 1; x-- > 0 && c.size() < blobs;)
			c.emplace_back(5.0 * static_cast<double>(x), 5.0 * static_cast<double>(s - x));
	return c;
}

/// `total` points split evenly across isotropic 2D Gaussian blobs.
inline PointSet make_blobs(Rng& rng, std::size_t blobs, std::size_t total, double sigma) {
	if (blobs < 1 || total < blobs)
		throw ConfigError("make_blobs: need 1 <= blobs <= points");
	const auto centers = blob_centers(blobs);
	PointSet p(total, 2);
	for (std::size_t i = 0; i < total; ++i) {
		const auto& c = centers[i * blobs / total];
		p.values[i * 2] = c.first + rng.normal(0.0, sigma);
		p.values[i * 2 + 1] = c.second + rng.normal(0.0, sigma);
	}
	return p;
}

struct KMeansResult {
	std::vector<double> centers; // k x d
	std::vector<std::size_t> assignment;
	double sse = 0.0;
	std::size_t iterations = 0; // of the winning restart
	std::size_t restart = 0;
	std::vector<double> history; // SSE per iteration of the winning restart
};

/// Nearest center for every point (ties to the lowest index) and the resulting SSE.
inline double assign_points(const PointSet& pts, std::span<const double> centers, std::size_t k,
							std::vector<std::size_t>& assignment) {
	assignment.resize(pts.n);
	double sse = 0.0;
	for (std::size_t i = 0; i < pts.n; ++i) {
		double best = std::numeric_limits<double>::infinity();
		for (std::size_t c = 0; c < k; ++c) {
			const double dist = squared_distance(pts.point(i), centers.subspan(c * pts.d, pts.d));
			if (dist < best) {
				best = dist;
				assignment[i] = c;
			}
		}
		sse += best;
	}
	return sse;
}

inline double within_cluster_sse(const PointSet& pts, std::span<const double> centers, std::size_t k) {
	std::vector<std::size_t> a;
	return assign_points(pts, centers, k, a);
}

namespace detail {

inline KMeansResult lloyd_once(const PointSet& pts, std::size_t k, Rng& rng, std::size_t max_iters, double tol) {
	const std::size_t d = pts.d;
	KMeansResult r;
	r.centers.resize(k * d);
	// k distinct data points, uniformly: partial Fisher-Yates.
	std::vector<std::size_t> idx(pts.n);
	for (std::size_t i = 0; i < pts.n; ++i)
		idx[i] = i;
	for (std::size_t c = 0; c < k; ++c) {
		std::swap(idx[c], idx[c + rng.uniform_int(pts.n - c)]);
		const auto p = pts.point(idx[c]);
		std::copy(p.begin(), p.end(), r.centers.begin() + static_cast<std::ptrdiff_t>(c * d));
	}

	double prev = std::numeric_limits<double>::infinity();
	for (std::size_t it = 0; it < max_iters; ++it) {
		const double sse = assign_points(pts, r.centers, k, r.assignment);
		if (sse > prev * (1.0 + 1e-12) + 1e-300)
			throw NumericError("lloyd: SSE increased from " + std::to_string(prev) + " to " + std::to_string(sse));
		r.history.push_back(sse);
		r.sse = sse;
		r.iterations = it + 1;
		if (prev - sse <= tol * prev && it > 0)
			break;
		prev = sse;

		std::vector<double> sums(k * d, 0.0);
		std::vector<std::size_t> counts(k, 0);
		for (std::size_t i = 0; i < pts.n; ++i) {
			const std::size_t c = r.assignment[i];
			++counts[c];
			for (std::size_t t = 0; t < d; ++t)
				sums[c * d + t] += pts.values[i * d + t];
		}
		for (std::size_t c = 0; c < k; ++c) {
			if (counts[c] == 0) {
				// Empty cluster: move it onto the point farthest from its own center.
				std::size_t far = 0;
				double far_d = -1.0;
				for (std::size_t i = 0; i < pts.n; ++i) {
					const std::size_t a = r.assignment[i];
					const double dist =
						squared_distance(pts.point(i), std::span<const double>(r.centers).subspan(a * d, d));
					if (dist > far_d) {
						far_d = dist;
						far = i;
					}
				}
				const auto p = pts.point(far);
				std::copy(p.begin(), p.end(), r.centers.begin() + static_cast<std::ptrdiff_t>(c * d));
				r.assignment[far] = c;
				continue;
			}
			for (std::size_t t = 0; t < d; ++t)
				r.centers[c * d + t] = sums[c * d + t] / static_cast<double>(counts[c]);
		}
	}
	return r;
}

} // namespace detail

/**
 * Best-of-`restarts` Lloyd's algorithm. Each restart starts from k distinct
 * data points drawn uniformly; the SSE is checked to be non-increasing at
 * every iteration.
 */
inline KMeansResult lloyd(const PointSet& pts, std::size_t k, Rng& rng, std::size_t restarts = 5,
						  std::size_t max_iters = 300, double tol = 1e-12) {
	if (k < 1)
		throw ConfigError("lloyd: k must be >= 1");
	if (restarts < 1)
		throw ConfigError("lloyd: restarts must be >= 1");
	if (pts.n < k)
		throw ConfigError("lloyd: " + std::to_string(pts.n) + " points cannot form " + std::to_string(k) +
						  " clusters");
	KMeansResult best;
	best.sse = std::numeric_limits<double>::infinity();
	for (std::size_t r = 0; r < restarts; ++r) {
		Rng sub = rng.derive(r);
		KMeansResult res = detail::lloyd_once(pts, k, sub, max_iters, tol);
		if (res.sse < best.sse) {
			best = std::move(res);
			best.restart = r;
		}
	}
	return best;
}

struct ConstantPass {
	HeadOutputs outputs;
};

/// K free vectors that ignore the input: WTA training with it is k-means.
class ConstantGenerator {
public:
	using Pass = ConstantPass;

	ConstantGenerator(std::size_t heads, std::size_t dim) {
		for (std::size_t k = 0; k < heads; ++k)
			centers_.emplace_back("center" + std::to_string(k), Tensor({dim}));
	}

	/// Every center at the data mean plus N(0, std^2) per coordinate.
	void init_at_mean(const PointSet& pts, Rng rng, double std = 1e-2) {
		std::vector<double> mean(pts.d, 0.0);
		for (std::size_t i = 0; i < pts.n; ++i)
			for (std::size_t t = 0; t < pts.d; ++t)
				mean[t] += pts.values[i * pts.d + t];
		for (auto& m : mean)
			m /= static_cast<double>(pts.n);
		for (auto& c : centers_)
			for (std::size_t t = 0; t < pts.d; ++t)
				c.value[t] = mean[t] + rng.normal(0.0, std);
	}

	Pass forward(const Tensor& x) const {
		const std::size_t b = x.dim(0), d = centers_.at(0).value.numel();
		std::vector<Tensor> base;
		for (const auto& c : centers_) {
			Tensor t({b, d});
			for (std::size_t n = 0; n < b; ++n)
				std::copy(c.value.data().begin(), c.value.data().end(), t.raw() + n * d);
			base.push_back(std::move(t));
		}
		return {make_head_outputs(std::move(base), false)};
	}

	void backward(const Pass&, std::span<const Tensor> base_grads) {
		for (std::size_t k = 0; k < centers_.size(); ++k) {
			const Tensor& g = base_grads[k];
			const std::size_t b = g.dim(0), d = centers_[k].value.numel();
			for (std::size_t n = 0; n < b; ++n)
				for (std::size_t t = 0; t < d; ++t)
					centers_[k].grad[t] += g[n * d + t];
		}
	}

	void zero_grads() {
		for (auto& c : centers_)
			c.zero_grad();
	}

	std::vector<Parameter*> parameter_ptrs() {
		std::vector<Parameter*> p;
		for (auto& c : centers_)
			p.push_back(&c);
		return p;
	}

	std::size_t heads() const { return centers_.size(); }

	std::vector<double> centers() const {
		std::vector<double> out;
		for (const auto& c : centers_)
			out.insert(out.end(), c.value.data().begin(), c.value.data().end());
		return out;
	}

private:
	std::vector<Parameter> centers_;
};

static_assert(HeadGenerator<ConstantGenerator>);

struct EquivalenceConfig {
	std::uint64_t steps = 2000;
	double lr = 0.05;
	double init_std = 1e-2;
	std::size_t restarts = 5;
};

struct EquivalenceReport {
	std::size_t k = 0;
	double wta_sse = 0.0;
	double lloyd_sse = 0.0;
	double ratio = 1.0;
	std::uint64_t wta_steps = 0;
	std::size_t lloyd_iterations = 0;
	std::vector<double> wta_centers;
	std::vector<double> lloyd_centers;
};

/**
 * Full-batch WTA training of a ConstantGenerator with MSE (x = y = the
 * points), compared against best-of-restarts Lloyd's on the same data.
 */
inline EquivalenceReport constant_generator_equivalence(const PointSet& pts, std::size_t k, const Rng& rng,
														const EquivalenceConfig& ec = {}) {
	if (pts.n < k)
		throw ConfigError("constant_generator_equivalence: fewer points than clusters");
	TrainConfig cfg;
	cfg.heads = k;
	cfg.combine = false;
	cfg.loss = LossKind::mse();
	cfg.optimizer.kind = OptimizerKind::Adam;
	cfg.optimizer.lr = ec.lr;
	cfg.steps = ec.steps;
	cfg.batch_size = pts.n;
	cfg.validate();

	ConstantGenerator gen(k, pts.d);
	gen.init_at_mean(pts, rng.derive(1), ec.init_std);
	Optimizer opt(cfg.optimizer);
	Batch batch{pts.as_tensor(), pts.as_tensor(), {}};
	for (std::size_t i = 0; i < pts.n; ++i)
		batch.ids.push_back(i);
	for (std::uint64_t s = 0; s < cfg.steps; ++s)
		train_step(gen, batch, cfg, opt, s);

	EquivalenceReport r;
	r.k = k;
	r.wta_steps = cfg.steps;
	r.wta_centers = gen.centers();
	r.wta_sse = within_cluster_sse(pts, r.wta_centers, k);
	Rng lr = rng.derive(2);
	const KMeansResult km = lloyd(pts, k, lr, ec.restarts);
	r.lloyd_sse = km.sse;
	r.lloyd_iterations = km.iterations;
	r.lloyd_centers = km.centers;
	if (r.lloyd_sse > 0.0)
		r.ratio = r.wta_sse / r.lloyd_sse;
	else
		r.ratio = r.wta_sse == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
	return r;
}

} // namespace wta

#endif // WTA_KMEANS_HPP_
