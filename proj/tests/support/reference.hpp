// Deliberately naive implementations used as oracles by the tests.
#ifndef WTA_TESTS_REFERENCE_HPP_
#define WTA_TESTS_REFERENCE_HPP_

#include <cmath>
#include <cstddef>
#include <vector>

#include <wta/metrics.hpp>
#include <wta/rng.hpp>
#include <wta/tensor.hpp>

namespace ref {

inline wta::Tensor conv2d(const wta::Tensor& x, const wta::Tensor& w, const wta::Tensor& b, std::size_t pad,
						  std::size_t stride) {
	const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
	const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
	const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
	wta::Tensor out({n, co, oh, ow});
	for (std::size_t s = 0; s < n; ++s)
		for (std::size_t o = 0; o < co; ++o)
			for (std::size_t r = 0; r < oh; ++r)
				for (std::size_t q = 0; q < ow; ++q) {
					double acc = b[o];
					for (std::size_t c = 0; c < ci; ++c)
						for (std::size_t i = 0; i < kh; ++i)
							for (std::size_t j = 0; j < kw; ++j) {
								const long ih = static_cast<long>(r * stride + i) - static_cast<long>(pad);
								const long iw = static_cast<long>(q * stride + j) - static_cast<long>(pad);
								if (ih < 0 || iw < 0 || ih >= static_cast<long>(h) || iw >= static_cast<long>(wd))
									continue;
								acc += x.at(s, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) *
									   w.at(o, c, i, j);
							}
					out.at(s, o, r, q) = acc;
				}
	return out;
}

// Direct windowed SSIM: every window evaluated from scratch with a 2D Gaussian.
inline double ssim(const wta::Tensor& a, const wta::Tensor& b) {
	const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2), k = 11;
	const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
	std::vector<double> g(k * k);
	double gs = 0.0;
	for (std::size_t i = 0; i < k; ++i)
		for (std::size_t j = 0; j < k; ++j) {
			const double di = static_cast<double>(i) - 5.0, dj = static_cast<double>(j) - 5.0;
			g[i * k + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
			gs += g[i * k + j];
		}
	for (double& v : g)
		v /= gs;
	double total = 0.0;
	for (std::size_t ch = 0; ch < c; ++ch) {
		double s = 0.0;
		std::size_t count = 0;
		for (std::size_t r = 0; r + k <= h; ++r)
			for (std::size_t q = 0; q + k <= w; ++q) {
				double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
				for (std::size_t i = 0; i < k; ++i)
					for (std::size_t j = 0; j < k; ++j) {
						const double wt = g[i * k + j];
						const double va = a.at(ch, r + i, q + j), vb = b.at(ch, r + i, q + j);
						ma += wt * va;
						mb += wt * vb;
						saa += wt * va * va;
						sbb += wt * vb * vb;
						sab += wt * va * vb;
					}
				const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
				s += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
				++count;
			}
		total += s / static_cast<double>(count);
	}
	return total / static_cast<double>(c);
}

inline wta::Tensor random_tensor(const wta::Shape& shape, wta::Rng& rng, double lo = -1.0, double hi = 1.0) {
	wta::Tensor t(shape);
	for (double& v : t.data())
		v = rng.uniform(lo, hi);
	return t;
}

} // namespace ref

#endif
