#ifndef WTA_CONV_HPP_
#define WTA_CONV_HPP_

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "wta/error.hpp"
#include "wta/tensor.hpp"

namespace wta {

struct Conv2dGeometry {
	std::size_t batch, in_channels, height, width;
	std::size_t out_channels, kernel_h, kernel_w;
	std::size_t padding, stride;
	std::size_t out_h, out_w;

	std::size_t patch() const noexcept { return in_channels * kernel_h * kernel_w; }
	std::size_t pixels() const noexcept { return out_h * out_w; }
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

inline Conv2dGeometry conv_geometry(const Tensor& input, const Tensor& weight, const Tensor& bias,
									std::size_t padding, std::size_t stride) {
	if (input.rank() != 4 || weight.rank() != 4)
		throw DimensionError("conv2d: expected input [N,Cin,H,W] and weight [Cout,Cin,kh,kw], got " +
							 shape_str(input.shape()) + " and " + shape_str(weight.shape()));
	if (input.dim(1) != weight.dim(1))
		throw DimensionError("conv2d: input channels of " + shape_str(input.shape()) +
							 " do not match weight " + shape_str(weight.shape()));
	if (bias.rank() != 1 || bias.dim(0) != weight.dim(0))
		throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
							 shape_str(weight.shape()));
	if (stride < 1)
		throw DimensionError("conv2d: stride must be >= 1");
	Conv2dGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
					 weight.dim(3), padding, stride, 0, 0};
	if (g.kernel_h % 2 == 0 || g.kernel_w % 2 == 0)
		throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " must have odd spatial size");
	if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w)
		throw DimensionError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
							 shape_str(input.shape()));
	g.out_h = (g.height + 2 * padding - g.kernel_h) / stride + 1;
	g.out_w = (g.width + 2 * padding - g.kernel_w) / stride + 1;
	return g;
}

// Output columns [lo, hi) whose input column ow*stride + k - pad lies inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t k, const Conv2dGeometry& g) {
	const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(g.padding);
	const auto s = static_cast<std::ptrdiff_t>(g.stride);
	const std::ptrdiff_t lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
	const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(g.width) - 1 - shift;
	const std::ptrdiff_t hi = last < 0 ? 0 : std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.out_w), last / s + 1);
	return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

// col is [patch, pixels] row-major.
inline void im2col(const double* image, const Conv2dGeometry& g, double* col) {
	const auto pad = static_cast<std::ptrdiff_t>(g.padding);
	for (std::size_t c = 0; c < g.in_channels; ++c)
		for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
			for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
				double* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * g.pixels();
				const auto [lo, hi] = valid_range(kj, g);
				const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - pad;
				for (std::size_t oh = 0; oh < g.out_h; ++oh) {
					const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
					double* dst = row + oh * g.out_w;
					if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
						std::fill(dst, dst + g.out_w, 0.0);
						continue;
					}
					const double* src = image + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
					std::fill(dst, dst + lo, 0.0);
					if (g.stride == 1)
						std::copy(src + static_cast<std::ptrdiff_t>(lo) + shift, src + static_cast<std::ptrdiff_t>(hi) + shift,
								  dst + lo);
					else
						for (std::size_t ow = lo; ow < hi; ++ow)
							dst[ow] = src[static_cast<std::ptrdiff_t>(ow * g.stride) + shift];
					std::fill(dst + hi, dst + g.out_w, 0.0);
				}
			}
}

inline void col2im_add(const double* col, const Conv2dGeometry& g, double* image) {
	const auto pad = static_cast<std::ptrdiff_t>(g.padding);
	for (std::size_t c = 0; c < g.in_channels; ++c)
		for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
			for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
				const double* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * g.pixels();
				const auto [lo, hi] = valid_range(kj, g);
				const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - pad;
				for (std::size_t oh = 0; oh < g.out_h; ++oh) {
					const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
					if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height))
						continue;
					double* dst = image + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
					const double* src = row + oh * g.out_w;
					for (std::size_t ow = lo; ow < hi; ++ow)
						dst[static_cast<std::ptrdiff_t>(ow * g.stride) + shift] += src[ow];
				}
			}
}

} // namespace detail

/**
 * Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kh,kw] plus per-channel
 * bias. Output is [N,Cout,H',W'] with H' = (H + 2p - kh)/stride + 1.
 */
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding,
							 std::size_t stride = 1) {
	const Conv2dGeometry g = detail::conv_geometry(input, weight, bias, padding, stride);
	Tensor out({g.batch, g.out_channels, g.out_h, g.out_w});
	std::vector<double> col(g.patch() * g.pixels());
	const detail::ConstRowMap w(weight.raw(), static_cast<Eigen::Index>(g.out_channels),
								static_cast<Eigen::Index>(g.patch()));
	const detail::ConstRowMap c(col.data(), static_cast<Eigen::Index>(g.patch()),
								static_cast<Eigen::Index>(g.pixels()));
	const std::size_t in_stride = g.in_channels * g.height * g.width;
	const std::size_t out_stride = g.out_channels * g.pixels();
	for (std::size_t n = 0; n < g.batch; ++n) {
		detail::im2col(input.raw() + n * in_stride, g, col.data());
		detail::RowMap o(out.raw() + n * out_stride, static_cast<Eigen::Index>(g.out_channels),
						 static_cast<Eigen::Index>(g.pixels()));
		o.noalias() = w * c;
		for (std::size_t co = 0; co < g.out_channels; ++co)
			o.row(static_cast<Eigen::Index>(co)).array() += bias[co];
	}
	ensure_finite(out, "conv2d_forward");
	return out;
}

struct Conv2dGrads {
	Tensor input;
	Tensor weight;
	Tensor bias;
};

/**
 * Accumulates the gradients of conv2d_forward into the given buffers.
 * `grad_input` may be null when the input gradient is not needed.
 */
inline void conv2d_backward_accumulate(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
									   std::size_t padding, std::size_t stride, Tensor* grad_input,
									   Tensor& grad_weight, Tensor& grad_bias) {
	const Tensor bias_shape_probe({weight.dim(0)});
	const Conv2dGeometry g = detail::conv_geometry(input, weight, bias_shape_probe, padding, stride);
	const Shape expected{g.batch, g.out_channels, g.out_h, g.out_w};
	if (grad_out.shape() != expected)
		throw DimensionError("conv2d_backward: grad_out " + shape_str(grad_out.shape()) +
							 " does not match forward output " + shape_str(expected));
	require_same_shape(grad_weight, weight, "conv2d_backward weight grad");
	if (grad_bias.shape() != Shape{g.out_channels})
		throw DimensionError("conv2d_backward: bias grad " + shape_str(grad_bias.shape()));
	if (grad_input)
		require_same_shape(*grad_input, input, "conv2d_backward input grad");

	const auto rows = static_cast<Eigen::Index>(g.out_channels);
	const auto patch = static_cast<Eigen::Index>(g.patch());
	const auto pixels = static_cast<Eigen::Index>(g.pixels());
	std::vector<double> col(g.patch() * g.pixels());
	const detail::ConstRowMap w(weight.raw(), rows, patch);
	detail::RowMap gw(grad_weight.raw(), rows, patch);
	detail::RowMatrix gcol(patch, pixels);
	const std::size_t in_stride = g.in_channels * g.height * g.width;
	const std::size_t out_stride = g.out_channels * g.pixels();
	for (std::size_t n = 0; n < g.batch; ++n) {
		const detail::ConstRowMap go(grad_out.raw() + n * out_stride, rows, pixels);
		detail::im2col(input.raw() + n * in_stride, g, col.data());
		const detail::ConstRowMap c(col.data(), patch, pixels);
		gw.noalias() += go * c.transpose();
		// Fixed-order sums: Eigen's vectorized reductions peel by address, which breaks bit-reproducibility.
		for (std::size_t co = 0; co < g.out_channels; ++co) {
			const double* row = grad_out.raw() + n * out_stride + co * g.pixels();
			double s = 0.0;
			for (std::size_t i = 0; i < g.pixels(); ++i)
				s += row[i];
			grad_bias[co] += s;
		}
		if (grad_input) {
			gcol.noalias() = w.transpose() * go;
			detail::col2im_add(gcol.data(), g, grad_input->raw() + n * in_stride);
		}
	}
}

inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
								   std::size_t padding, std::size_t stride = 1) {
	Conv2dGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor({weight.dim(0)})};
	conv2d_backward_accumulate(grad_out, input, weight, padding, stride, &grads.input, grads.weight, grads.bias);
	return grads;
}

} // namespace wta

#endif // WTA_CONV_HPP_
