#ifndef WTA_METRICS_HPP_
#define WTA_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wta/dataset.hpp"
#include "wta/error.hpp"
#include "wta/loss.hpp"
#include "wta/model.hpp"
#include "wta/tensor.hpp"

namespace wta {

/// PSNR in dB for unit peak; `pred` is clamped to [0,1] first.
inline double psnr(std::span<const double> pred, std::span<const double> target) {
	if (pred.size() != target.size() || pred.empty())
		throw DimensionError("psnr: " + std::to_string(pred.size()) + " vs " + std::to_string(target.size()) +
							 " values");
	double s = 0.0;
	for (std::size_t i = 0; i < pred.size(); ++i) {
		const double d = std::clamp(pred[i], 0.0, 1.0) - target[i];
		s += d * d;
	}
	return psnr_from_mse(s / static_cast<double>(pred.size()));
}

inline double psnr(const Tensor& pred, const Tensor& target) {
	require_same_shape(pred, target, "psnr");
	return psnr(pred.data(), target.data());
}

struct SsimParams {
	std::size_t window = 11;
	double sigma = 1.5;
	double k1 = 0.01;
	double k2 = 0.03;
	double data_range = 1.0;
};

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
	std::vector<double> w(size);
	const double c = static_cast<double>(size / 2);
	double s = 0.0;
	for (std::size_t i = 0; i < size; ++i) {
		const double d = static_cast<double>(i) - c;
		w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
		s += w[i];
	}
	for (auto& v : w)
		v /= s;
	return w;
}

namespace detail {

// Separable "valid" filtering of an h x w plane.
inline std::vector<double> filter_valid(const double* plane, std::size_t h, std::size_t w,
										const std::vector<double>& win) {
	const std::size_t k = win.size(), oh = h - k + 1, ow = w - k + 1;
	std::vector<double> tmp(h * ow), out(oh * ow);
	for (std::size_t r = 0; r < h; ++r)
		for (std::size_t q = 0; q < ow; ++q) {
			double s = 0.0;
			for (std::size_t t = 0; t < k; ++t)
				s += win[t] * plane[r * w + q + t];
			tmp[r * ow + q] = s;
		}
	for (std::size_t r = 0; r < oh; ++r)
		for (std::size_t q = 0; q < ow; ++q) {
			double s = 0.0;
			for (std::size_t t = 0; t < k; ++t)
				s += win[t] * tmp[(r + t) * ow + q];
			out[r * ow + q] = s;
		}
	return out;
}

inline std::array<std::size_t, 3> image_dims(const Tensor& t) {
	if (t.rank() == 2)
		return {1, t.dim(0), t.dim(1)};
	if (t.rank() == 3)
		return {t.dim(0), t.dim(1), t.dim(2)};
	throw DimensionError("expected an [H,W] or [C,H,W] image, got " + shape_str(t.shape()));
}

} // namespace detail

/**
 * Mean structural similarity with a Gaussian window over valid positions,
 * computed per channel and averaged across channels.
 */
inline double ssim(const Tensor& a, const Tensor& b, const SsimParams& p = {}) {
	require_same_shape(a, b, "ssim");
	const auto [c, h, w] = detail::image_dims(a);
	if (h < p.window || w < p.window)
		throw MetricError("ssim: image " + shape_str(a.shape()) + " smaller than the " + std::to_string(p.window) +
						  "x" + std::to_string(p.window) + " window");
	const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
	const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
	const auto win = gaussian_window(p.window, p.sigma);
	const std::size_t plane = h * w;
	std::vector<double> aa(plane), bb(plane), ab(plane);
	double total = 0.0;
	for (std::size_t ch = 0; ch < c; ++ch) {
		const double* pa = a.raw() + ch * plane;
		const double* pb = b.raw() + ch * plane;
		for (std::size_t i = 0; i < plane; ++i) {
			aa[i] = pa[i] * pa[i];
			bb[i] = pb[i] * pb[i];
			ab[i] = pa[i] * pb[i];
		}
		const auto ma = detail::filter_valid(pa, h, w, win);
		const auto mb = detail::filter_valid(pb, h, w, win);
		const auto saa = detail::filter_valid(aa.data(), h, w, win);
		const auto sbb = detail::filter_valid(bb.data(), h, w, win);
		const auto sab = detail::filter_valid(ab.data(), h, w, win);
		double s = 0.0;
		for (std::size_t i = 0; i < ma.size(); ++i) {
			const double mab = ma[i] * mb[i];
			const double va = saa[i] - ma[i] * ma[i];
			const double vb = sbb[i] - mb[i] * mb[i];
			const double cov = sab[i] - mab;
			s += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
		}
		total += s / static_cast<double>(ma.size());
	}
	return total / static_cast<double>(c);
}

/// Scores over the extended heads of a model on an evaluation set.
struct EvalReport {
	std::size_t heads = 0;
	bool combine = false;
	std::size_t images = 0;
	std::vector<std::pair<std::size_t, std::size_t>> pairs;
	std::vector<double> per_head_psnr;
	std::vector<double> per_head_ssim;
	double psnr_overall = 0.0;
	double psnr_single_head = 0.0;
	std::size_t best_head = 0;
	double ssim_overall = 0.0;
	double ssim_single_head = 0.0;
	std::vector<std::size_t> argmax_histogram;
	/// heads x heads, entry (i, j) = mean PSNR of extended head (min, max); combination mode only.
	std::vector<std::vector<double>> pair_matrix;
	double blurry_psnr = 0.0; // identity baseline: PSNR of the input itself
};

struct PerImageScores {
	std::vector<std::vector<double>> psnr; // [image][extended head]
	std::vector<std::vector<double>> ssim;
	std::vector<double> blurry_psnr;
	std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/**
 * Reduces per-image scores: overall = mean over images of the best head,
 * single-head = best per-head mean. Means are plain index-order sums, which
 * are monotone in their terms, so overall >= single-head holds exactly.
 */
template <typename Scores>
std::pair<double, double> overall_and_single(const Scores& per_image, std::vector<double>& per_head,
											 std::size_t& best) {
	const std::size_t n = per_image.size();
	if (n == 0)
		throw MetricError("no images to evaluate");
	const std::size_t k = per_image[0].size();
	per_head.assign(k, 0.0);
	double overall = 0.0;
	for (const auto& row : per_image) {
		overall += *std::max_element(row.begin(), row.end());
		for (std::size_t e = 0; e < k; ++e)
			per_head[e] += row[e];
	}
	overall /= static_cast<double>(n);
	for (auto& v : per_head)
		v /= static_cast<double>(n);
	best = static_cast<std::size_t>(std::max_element(per_head.begin(), per_head.end()) - per_head.begin());
	return {overall, per_head[best]};
}

inline void check_report_invariants(const EvalReport& r) {
	const double max_head = *std::max_element(r.per_head_psnr.begin(), r.per_head_psnr.end());
	const double min_head = *std::min_element(r.per_head_psnr.begin(), r.per_head_psnr.end());
	if (r.psnr_single_head != max_head)
		throw MetricError("psnr_single_head differs from the best per-head mean");
	if (!(r.psnr_overall >= r.psnr_single_head) || !(r.psnr_single_head >= min_head))
		throw MetricError("metric ordering violated: overall " + std::to_string(r.psnr_overall) + " single " +
						  std::to_string(r.psnr_single_head));
	if (r.per_head_psnr.size() == 1 && r.psnr_overall != r.psnr_single_head)
		throw MetricError("single-head model with overall != single-head");
	if (!(r.ssim_overall >= r.ssim_single_head))
		throw MetricError("SSIM ordering violated");
}

inline EvalReport reduce_scores(const PerImageScores& s, std::size_t heads, bool combine) {
	EvalReport r;
	r.heads = heads;
	r.combine = combine;
	r.images = s.psnr.size();
	r.pairs = s.pairs;
	std::tie(r.psnr_overall, r.psnr_single_head) = overall_and_single(s.psnr, r.per_head_psnr, r.best_head);
	std::size_t best_ssim = 0;
	std::tie(r.ssim_overall, r.ssim_single_head) = overall_and_single(s.ssim, r.per_head_ssim, best_ssim);
	r.argmax_histogram.assign(r.per_head_psnr.size(), 0);
	for (const auto& row : s.psnr)
		++r.argmax_histogram[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
	if (combine) {
		r.pair_matrix.assign(heads, std::vector<double>(heads, 0.0));
		for (std::size_t i = 0; i < heads; ++i)
			for (std::size_t j = 0; j < heads; ++j)
				r.pair_matrix[i][j] = r.per_head_psnr[pair_index(std::min(i, j), std::max(i, j), heads)];
	}
	double b = 0.0;
	for (double v : s.blurry_psnr)
		b += v;
	r.blurry_psnr = s.blurry_psnr.empty() ? 0.0 : b / static_cast<double>(s.blurry_psnr.size());
	check_report_invariants(r);
	return r;
}

struct EvalOptions {
	std::size_t limit = 0;      // 0 evaluates every image
	std::size_t batch_size = 8;
	bool with_ssim = true;
};

inline PerImageScores score_images(const Network& net, const Dataset& data, const EvalOptions& opts = {}) {
	if (data.size() == 0)
		throw ConfigError("evaluation dataset is empty");
	if (data.image_shape()[0] != net.config().channels)
		throw ConfigError("evaluation data has " + std::to_string(data.image_shape()[0]) +
						  " channels, network expects " + std::to_string(net.config().channels));
	const std::size_t n = opts.limit ? std::min(opts.limit, data.size()) : data.size();
	PerImageScores s;
	for (std::size_t start = 0; start < n; start += opts.batch_size) {
		const std::size_t end = std::min(n, start + opts.batch_size);
		std::vector<Tensor> xs;
		for (std::size_t i = start; i < end; ++i)
			xs.push_back(data.input(i));
		const ForwardPass pass = net.forward(stack(xs));
		const HeadOutputs& out = pass.outputs;
		if (s.pairs.empty())
			for (const auto& e : out.extended)
				s.pairs.emplace_back(e.i, e.j);
		for (std::size_t i = start; i < end; ++i) {
			const Tensor& y = data.label(i);
			std::vector<double> prow, srow;
			for (const auto& e : out.extended) {
				const Tensor pred = clamp(e.value.sample(i - start), 0.0, 1.0);
				prow.push_back(psnr(pred, y));
				srow.push_back(opts.with_ssim ? ssim(pred, y) : 0.0);
			}
			s.psnr.push_back(std::move(prow));
			s.ssim.push_back(std::move(srow));
			s.blurry_psnr.push_back(psnr(data.input(i), y));
		}
	}
	return s;
}

/// Overall and single-head PSNR/SSIM over the extended heads; checks metric ordering.
inline EvalReport evaluate(const Network& net, const Dataset& data, const EvalOptions& opts = {}) {
	return reduce_scores(score_images(net, data, opts), net.heads(), net.config().combine);
}

inline EvalReport pair_psnr_matrix(const Network& net, const Dataset& data, const EvalOptions& opts = {}) {
	if (!net.config().combine)
		throw ConfigError("pair_psnr_matrix requires head combination");
	return evaluate(net, data, opts);
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
	nlohmann::ordered_json j;
	j["heads"] = r.heads;
	j["combine"] = r.combine;
	j["extended_heads"] = r.per_head_psnr.size();
	j["images"] = r.images;
	j["psnr_overall"] = r.psnr_overall;
	j["psnr_single_head"] = r.psnr_single_head;
	j["best_head"] = r.best_head;
	j["ssim_overall"] = r.ssim_overall;
	j["ssim_single_head"] = r.ssim_single_head;
	j["blurry_psnr"] = r.blurry_psnr;
	auto heads = nlohmann::ordered_json::array();
	for (std::size_t e = 0; e < r.per_head_psnr.size(); ++e) {
		nlohmann::ordered_json h;
		h["i"] = r.pairs[e].first;
		h["j"] = r.pairs[e].second;
		h["psnr"] = r.per_head_psnr[e];
		h["ssim"] = r.per_head_ssim[e];
		h["argmax_count"] = r.argmax_histogram[e];
		heads.push_back(std::move(h));
	}
	j["per_head"] = std::move(heads);
	if (!r.pair_matrix.empty())
		j["pair_matrix"] = r.pair_matrix;
	return j;
}

inline void write_pair_matrix(std::ostream& os, const EvalReport& r) {
	os.precision(10);
	os << "head";
	for (std::size_t j = 0; j < r.pair_matrix.size(); ++j)
		os << "\th" << j;
	os << '\n';
	for (std::size_t i = 0; i < r.pair_matrix.size(); ++i) {
		os << 'h' << i;
		for (double v : r.pair_matrix[i])
			os << '\t' << v;
		os << '\n';
	}
}

/**
 * Sum over all unordered pairs of extended heads of |a - b|, summed over
 * channels and scaled so the maximum is 1. Input is one sample ([C,H,W] heads).
 */
inline Tensor residual_heatmap(const HeadOutputs& sample) {
	const auto& ext = sample.extended;
	if (ext.size() < 2)
		throw MetricError("residual_heatmap needs at least two extended heads");
	const auto [c, h, w] = detail::image_dims(ext[0].value);
	Tensor map({h, w});
	const std::size_t plane = h * w;
	for (std::size_t a = 0; a < ext.size(); ++a)
		for (std::size_t b = a + 1; b < ext.size(); ++b) {
			require_same_shape(ext[a].value, ext[b].value, "residual_heatmap");
			for (std::size_t ch = 0; ch < c; ++ch)
				for (std::size_t i = 0; i < plane; ++i)
					map[i] += std::abs(ext[a].value[ch * plane + i] - ext[b].value[ch * plane + i]);
		}
	const double m = max_abs(map);
	if (m > 0.0)
		for (double& v : map.data())
			v /= m;
	return map;
}

/// 0.5 + d / (2 max|d|) where d is the channel mean of a - b; uniform 0.5 when a == b.
inline Tensor signed_diff_map(const Tensor& a, const Tensor& b) {
	require_same_shape(a, b, "signed_diff_map");
	const auto [c, h, w] = detail::image_dims(a);
	const std::size_t plane = h * w;
	Tensor d({h, w});
	for (std::size_t ch = 0; ch < c; ++ch)
		for (std::size_t i = 0; i < plane; ++i)
			d[i] += a[ch * plane + i] - b[ch * plane + i];
	for (double& v : d.data())
		v /= static_cast<double>(c);
	const double m = max_abs(d);
	for (double& v : d.data())
		v = m > 0.0 ? 0.5 + v / (2.0 * m) : 0.5;
	return d;
}

/// Pearson correlation of two equally sized arrays; 0 when either is constant.
inline double correlation(std::span<const double> a, std::span<const double> b) {
	if (a.size() != b.size() || a.empty())
		throw DimensionError("correlation: length mismatch");
	double ma = 0.0, mb = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		ma += a[i];
		mb += b[i];
	}
	ma /= static_cast<double>(a.size());
	mb /= static_cast<double>(b.size());
	double sab = 0.0, saa = 0.0, sbb = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		sab += (a[i] - ma) * (b[i] - mb);
		saa += (a[i] - ma) * (a[i] - ma);
		sbb += (b[i] - mb) * (b[i] - mb);
	}
	if (saa == 0.0 || sbb == 0.0)
		return 0.0;
	return sab / std::sqrt(saa * sbb);
}

} // namespace wta

#endif // WTA_METRICS_HPP_
