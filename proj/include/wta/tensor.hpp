#ifndef WTA_TENSOR_HPP_
#define WTA_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wta/error.hpp"

namespace wta {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
	return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
	std::ostringstream os;
	os << '[';
	for (std::size_t i = 0; i < shape.size(); ++i)
		os << (i ? "," : "") << shape[i];
	os << ']';
	return os.str();
}

/**
 * Dense row-major array of doubles with shape metadata.
 *
 * Images are [C,H,W], batches [N,C,H,W]. The element count always equals the
 * product of the shape.
 */
class Tensor {
public:
	Tensor() = default;

	explicit Tensor(Shape shape, double fill = 0.0)
		: shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

	Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
		if (data_.size() != shape_numel(shape_))
			throw DimensionError("tensor data length " + std::to_string(data_.size()) +
								 " does not match shape " + shape_str(shape_));
	}

	static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
	static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
	static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

	const Shape& shape() const noexcept { return shape_; }
	std::size_t rank() const noexcept { return shape_.size(); }
	std::size_t dim(std::size_t i) const { return shape_.at(i); }
	std::size_t numel() const noexcept { return data_.size(); }
	bool empty() const noexcept { return data_.empty(); }

	std::span<double> data() noexcept { return data_; }
	std::span<const double> data() const noexcept { return data_; }
	double* raw() noexcept { return data_.data(); }
	const double* raw() const noexcept { return data_.data(); }

	double& operator[](std::size_t i) noexcept { return data_[i]; }
	double operator[](std::size_t i) const noexcept { return data_[i]; }

	double& at(std::size_t c, std::size_t h, std::size_t w) {
		return data_[(c * shape_[1] + h) * shape_[2] + w];
	}
	double at(std::size_t c, std::size_t h, std::size_t w) const {
		return data_[(c * shape_[1] + h) * shape_[2] + w];
	}
	double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
		return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
	}
	double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
		return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
	}

	Tensor reshaped(Shape shape) const& {
		if (shape_numel(shape) != numel())
			throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
		return Tensor(std::move(shape), data_);
	}

	/// Slice n of the leading (batch) dimension, with that dimension dropped.
	Tensor sample(std::size_t n) const {
		if (rank() < 2 || n >= shape_[0])
			throw DimensionError("sample " + std::to_string(n) + " out of range for " + shape_str(shape_));
		Shape inner(shape_.begin() + 1, shape_.end());
		const std::size_t stride = shape_numel(inner);
		return Tensor(std::move(inner),
					  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(n * stride),
										  data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride)));
	}

	std::span<const double> sample_span(std::size_t n) const {
		const std::size_t stride = numel() / shape_[0];
		return std::span<const double>(data_).subspan(n * stride, stride);
	}
	std::span<double> sample_span(std::size_t n) {
		const std::size_t stride = numel() / shape_[0];
		return std::span<double>(data_).subspan(n * stride, stride);
	}

	void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

	bool all_finite() const noexcept {
		return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
	}

	friend bool operator==(const Tensor&, const Tensor&) = default;

private:
	Shape shape_;
	std::vector<double> data_;
};

/// Stacks equally shaped tensors along a new leading dimension.
inline Tensor stack(std::span<const Tensor> items) {
	if (items.empty())
		throw DimensionError("stack of zero tensors");
	Shape shape{items.size()};
	shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
	std::vector<double> data;
	data.reserve(shape_numel(shape));
	for (const Tensor& t : items) {
		if (t.shape() != items[0].shape())
			throw DimensionError("stack shape mismatch: " + shape_str(items[0].shape()) + " vs " +
								 shape_str(t.shape()));
		data.insert(data.end(), t.data().begin(), t.data().end());
	}
	return Tensor(std::move(shape), std::move(data));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
	if (a.shape() != b.shape())
		throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
							 shape_str(b.shape()));
}

inline const Tensor& ensure_finite(const Tensor& t, const char* op) {
	if (!t.all_finite())
		throw NumericError(std::string(op) + ": non-finite value produced");
	return t;
}

namespace detail {

template <typename F>
Tensor map(const Tensor& a, const char* op, F f) {
	Tensor out(a.shape());
	for (std::size_t i = 0; i < a.numel(); ++i)
		out[i] = f(a[i]);
	ensure_finite(out, op);
	return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
	require_same_shape(a, b, op);
	Tensor out(a.shape());
	for (std::size_t i = 0; i < a.numel(); ++i)
		out[i] = f(a[i], b[i]);
	ensure_finite(out, op);
	return out;
}

} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
	return detail::zip(a, b, "add", [](double x, double y) { return x + y; });
}

inline Tensor subtract(const Tensor& a, const Tensor& b) {
	return detail::zip(a, b, "subtract", [](double x, double y) { return x - y; });
}

inline Tensor multiply(const Tensor& a, const Tensor& b) {
	return detail::zip(a, b, "multiply", [](double x, double y) { return x * y; });
}

inline Tensor scale(const Tensor& a, double s) {
	return detail::map(a, "scale", [s](double x) { return x * s; });
}

inline Tensor clamp(const Tensor& a, double lo, double hi) {
	return detail::map(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

inline double sum(const Tensor& a) {
	double s = 0.0;
	for (double v : a.data())
		s += v;
	return s;
}

inline double mean(const Tensor& a) {
	if (a.empty())
		throw DimensionError("mean of empty tensor");
	return sum(a) / static_cast<double>(a.numel());
}

/// Derivative of mean(a) with respect to every element.
inline Tensor mean_backward(const Shape& shape, double grad_out) {
	return Tensor::full(shape, grad_out / static_cast<double>(shape_numel(shape)));
}

inline Tensor relu_forward(const Tensor& a) {
	return detail::map(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; });
}

/// Gradient of relu at the pre-activation `input`; zero at and below 0.
inline Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
	return detail::zip(grad_out, input, "relu_backward", [](double g, double x) { return x > 0.0 ? g : 0.0; });
}

/// a += s * b
inline void axpy(Tensor& a, const Tensor& b, double s = 1.0) {
	require_same_shape(a, b, "axpy");
	double* pa = a.raw();
	const double* pb = b.raw();
	const std::size_t n = a.numel();
	for (std::size_t i = 0; i < n; ++i)
		pa[i] += s * pb[i];
}

inline double max_abs(const Tensor& a) {
	double m = 0.0;
	for (double v : a.data())
		m = std::max(m, std::abs(v));
	return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
	require_same_shape(a, b, "max_abs_diff");
	double m = 0.0;
	for (std::size_t i = 0; i < a.numel(); ++i)
		m = std::max(m, std::abs(a[i] - b[i]));
	return m;
}

inline double l2_norm(const Tensor& a) {
	double s = 0.0;
	for (double v : a.data())
		s += v * v;
	return std::sqrt(s);
}

/// A trainable tensor with its gradient buffer and a stable name.
struct Parameter {
	std::string id;
	Tensor value;
	Tensor grad;

	Parameter() = default;
	Parameter(std::string name, Tensor v) : id(std::move(name)), value(std::move(v)), grad(value.shape()) {}

	void zero_grad() noexcept { grad.fill(0.0); }
};

} // namespace wta

#endif // WTA_TENSOR_HPP_
