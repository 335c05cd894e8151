#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <wta/error.hpp>
#include <wta/kmeans.hpp>

using namespace wta;

namespace {

PointSet three_blobs(std::uint64_t seed) {
	Rng rng(seed);
	return make_blobs(rng, 3, 300, 0.1);
}

} // namespace

TEST(Blobs, LatticeCenters) {
	const auto c = blob_centers(3);
	ASSERT_EQ(c.size(), 3u);
	EXPECT_EQ(c[0], (std::pair<double, double>{0.0, 0.0}));
	EXPECT_EQ(c[1], (std::pair<double, double>{5.0, 0.0}));
	EXPECT_EQ(c[2], (std::pair<double, double>{0.0, 5.0}));
}

TEST(Lloyd, SingleClusterIsMean) {
	Rng rng(1);
	PointSet p = make_blobs(rng, 2, 50, 1.0);
	double mx = 0.0, my = 0.0;
	for (std::size_t i = 0; i < p.n; ++i) {
		mx += p.values[2 * i];
		my += p.values[2 * i + 1];
	}
	mx /= 50.0;
	my /= 50.0;
	double var = 0.0;
	for (std::size_t i = 0; i < p.n; ++i)
		var += (p.values[2 * i] - mx) * (p.values[2 * i] - mx) + (p.values[2 * i + 1] - my) * (p.values[2 * i + 1] - my);
	Rng r(2);
	const KMeansResult km = lloyd(p, 1, r);
	EXPECT_NEAR(km.centers[0], mx, 1e-12);
	EXPECT_NEAR(km.centers[1], my, 1e-12);
	EXPECT_NEAR(km.sse, var, 1e-9);
}

TEST(Lloyd, OneClusterPerPoint) {
	Rng rng(3);
	const PointSet p = make_blobs(rng, 1, 12, 1.0);
	Rng r(4);
	EXPECT_EQ(lloyd(p, 12, r).sse, 0.0);
}

TEST(Lloyd, RecoversSeparatedBlobs) {
	const PointSet p = three_blobs(11);
	Rng r(5);
	const KMeansResult km = lloyd(p, 3, r);
	// Per-blob averages are the ground-truth means; points are grouped in order.
	std::array<std::array<double, 2>, 3> truth{};
	for (std::size_t i = 0; i < p.n; ++i) {
		truth[i / 100][0] += p.values[2 * i] / 100.0;
		truth[i / 100][1] += p.values[2 * i + 1] / 100.0;
	}
	std::array<std::size_t, 3> perm{0, 1, 2};
	double best = 1e300;
	do {
		double worst = 0.0;
		for (std::size_t b = 0; b < 3; ++b)
			worst = std::max(worst, std::hypot(km.centers[2 * perm[b]] - truth[b][0],
											   km.centers[2 * perm[b] + 1] - truth[b][1]));
		best = std::min(best, worst);
	} while (std::next_permutation(perm.begin(), perm.end()));
	EXPECT_LE(best, 0.1);
	const auto c = blob_centers(3);
	for (std::size_t b = 0; b < 3; ++b)
		EXPECT_NEAR(std::hypot(truth[b][0] - c[b].first, truth[b][1] - c[b].second), 0.0, 0.1);
}

TEST(Lloyd, SseNonIncreasingAndAssignmentsNearest) {
	Rng g(6);
	const PointSet p = make_blobs(g, 5, 200, 2.0);
	Rng r(7);
	const KMeansResult km = lloyd(p, 4, r, 3);
	for (std::size_t t = 1; t < km.history.size(); ++t)
		EXPECT_LE(km.history[t], km.history[t - 1] * (1.0 + 1e-12));
	std::vector<std::size_t> a;
	assign_points(p, km.centers, 4, a);
	for (std::size_t i = 0; i < p.n; ++i) {
		const double own = squared_distance(p.point(i), std::span<const double>(km.centers).subspan(a[i] * 2, 2));
		for (std::size_t c = 0; c < 4; ++c)
			EXPECT_LE(own, squared_distance(p.point(i), std::span<const double>(km.centers).subspan(c * 2, 2)));
	}
}

TEST(Lloyd, EmptyClusterReseeded) {
	// Duplicated points force empty clusters; every center must still be a data point.
	PointSet p(6, 1);
	p.values = {0.0, 0.0, 0.0, 0.0, 10.0, 10.0};
	Rng r(8);
	const KMeansResult km = lloyd(p, 3, r);
	EXPECT_EQ(km.sse, 0.0);
}

TEST(Lloyd, InvalidArguments) {
	PointSet p(2, 2);
	Rng r(0);
	EXPECT_THROW(lloyd(p, 0, r), ConfigError);
	EXPECT_THROW(lloyd(p, 3, r), ConfigError);
	EXPECT_THROW(lloyd(p, 1, r, 0), ConfigError);
}

TEST(Equivalence, SingleClusterConvex) {
	const PointSet p = three_blobs(12);
	const EquivalenceReport r = constant_generator_equivalence(p, 1, Rng(1));
	EXPECT_NEAR(r.ratio, 1.0, 1e-3);
}

TEST(Equivalence, DuplicatePoints) {
	PointSet p(20, 2);
	for (std::size_t i = 0; i < p.n; ++i) {
		p.values[2 * i] = 1.5;
		p.values[2 * i + 1] = -2.0;
	}
	for (std::size_t k : {1u, 3u}) {
		const EquivalenceReport r = constant_generator_equivalence(p, k, Rng(2));
		EXPECT_LE(r.wta_sse, 1e-8) << "k=" << k;
		EXPECT_EQ(r.lloyd_sse, 0.0);
	}
}

TEST(Equivalence, ThreeBlobsMedianRatio) {
	std::vector<double> ratios;
	for (std::uint64_t seed = 0; seed < 5; ++seed) {
		const PointSet p = three_blobs(100 + seed);
		const EquivalenceReport r = constant_generator_equivalence(p, 3, Rng(seed));
		std::cout << "seed " << seed << " wta " << r.wta_sse << " lloyd " << r.lloyd_sse << " ratio " << r.ratio
				  << "\n";
		ratios.push_back(r.ratio);
	}
	std::sort(ratios.begin(), ratios.end());
	EXPECT_LE(ratios[2], 1.05);
}
