#ifndef WTA_LOSS_HPP_
#define WTA_LOSS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>

#include "wta/error.hpp"
#include "wta/tensor.hpp"

namespace wta {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / mse) for unit peak, capped at 100 dB (so zero error is finite).
inline double psnr_from_mse(double mse) {
	if (mse <= 0.0)
		return kPsnrCap;
	return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

enum class LossType { MSE, Charbonnier, NegPSNR };

struct LossKind {
	LossType type = LossType::Charbonnier;
	double epsilon = 1e-3;

	static LossKind mse() { return {LossType::MSE, 0.0}; }
	static LossKind charbonnier(double eps = 1e-3) {
		if (!(eps > 0.0))
			throw ConfigError("Charbonnier epsilon must be > 0");
		return {LossType::Charbonnier, eps};
	}
	static LossKind neg_psnr() { return {LossType::NegPSNR, 0.0}; }

	friend bool operator==(const LossKind&, const LossKind&) = default;
};

inline std::string to_string(const LossKind& k) {
	switch (k.type) {
	case LossType::MSE:
		return "mse";
	case LossType::Charbonnier:
		return "charbonnier";
	case LossType::NegPSNR:
		return "neg_psnr";
	}
	return "?";
}

inline LossKind parse_loss_kind(const std::string& name, double epsilon = 1e-3) {
	if (name == "mse")
		return LossKind::mse();
	if (name == "charbonnier")
		return LossKind::charbonnier(epsilon);
	if (name == "neg_psnr" || name == "psnr")
		return LossKind::neg_psnr();
	throw ConfigError("unknown loss '" + name + "' (mse, charbonnier, neg_psnr)");
}

namespace detail {

inline double mse_span(std::span<const double> p, std::span<const double> t) {
	double s = 0.0;
	for (std::size_t i = 0; i < p.size(); ++i) {
		const double d = p[i] - t[i];
		s += d * d;
	}
	return s / static_cast<double>(p.size());
}

inline void require_same_length(std::span<const double> p, std::span<const double> t) {
	if (p.size() != t.size() || p.empty())
		throw DimensionError("loss: prediction has " + std::to_string(p.size()) + " values, target " +
							 std::to_string(t.size()));
}

} // namespace detail

/// Loss over flat, equally long views; the mean is over all elements.
inline double loss(const LossKind& kind, std::span<const double> pred, std::span<const double> target) {
	detail::require_same_length(pred, target);
	switch (kind.type) {
	case LossType::MSE:
		return detail::mse_span(pred, target);
	case LossType::Charbonnier: {
		// Accumulate the excess over epsilon so a perfect match yields epsilon exactly.
		const double e2 = kind.epsilon * kind.epsilon;
		double s = 0.0;
		for (std::size_t i = 0; i < pred.size(); ++i) {
			const double d = pred[i] - target[i];
			s += std::sqrt(d * d + e2) - kind.epsilon;
		}
		return s / static_cast<double>(pred.size()) + kind.epsilon;
	}
	case LossType::NegPSNR:
		return -psnr_from_mse(detail::mse_span(pred, target));
	}
	return 0.0;
}

inline double loss(const LossKind& kind, const Tensor& pred, const Tensor& target) {
	require_same_shape(pred, target, "loss");
	return loss(kind, pred.data(), target.data());
}

/// grad += scale * d loss / d pred
inline void loss_backward(const LossKind& kind, std::span<const double> pred, std::span<const double> target,
						  double scale, std::span<double> grad) {
	detail::require_same_length(pred, target);
	const double inv_n = 1.0 / static_cast<double>(pred.size());
	switch (kind.type) {
	case LossType::MSE:
		for (std::size_t i = 0; i < pred.size(); ++i)
			grad[i] += scale * 2.0 * (pred[i] - target[i]) * inv_n;
		return;
	case LossType::Charbonnier: {
		const double e2 = kind.epsilon * kind.epsilon;
		for (std::size_t i = 0; i < pred.size(); ++i) {
			const double d = pred[i] - target[i];
			grad[i] += scale * d / std::sqrt(d * d + e2) * inv_n;
		}
		return;
	}
	case LossType::NegPSNR: {
		const double mse = detail::mse_span(pred, target);
		if (psnr_from_mse(mse) >= kPsnrCap)
			return; // flat inside the cap
		const double coeff = 10.0 / (std::numbers::ln10 * mse);
		for (std::size_t i = 0; i < pred.size(); ++i)
			grad[i] += scale * coeff * 2.0 * (pred[i] - target[i]) * inv_n;
		return;
	}
	}
}

inline Tensor loss_backward(const LossKind& kind, const Tensor& pred, const Tensor& target) {
	require_same_shape(pred, target, "loss_backward");
	Tensor g(pred.shape());
	loss_backward(kind, pred.data(), target.data(), 1.0, g.data());
	return g;
}

} // namespace wta

#endif // WTA_LOSS_HPP_
