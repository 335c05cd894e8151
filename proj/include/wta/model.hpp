#ifndef WTA_MODEL_HPP_
#define WTA_MODEL_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wta/conv.hpp"
#include "wta/error.hpp"
#include "wta/rng.hpp"
#include "wta/tensor.hpp"

namespace wta {

struct NetworkConfig {
	std::size_t heads = 1;      // K
	std::size_t channels = 3;   // C
	std::size_t depth = 4;      // residual blocks
	std::size_t width = 16;     // trunk channels
	bool combine = false;

	void validate() const {
		if (heads < 1)
			throw ConfigError("network needs at least one head");
		if (channels < 1 || width < 1)
			throw ConfigError("network channels and width must be positive");
	}

	friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Number of outputs the assignment and evaluation operate on.
constexpr std::size_t extended_head_count(std::size_t heads, bool combine) noexcept {
	return combine ? heads * (heads + 1) / 2 : heads;
}

/// Position of pair (i, j), i <= j, in the row-major upper-triangle order.
constexpr std::size_t pair_index(std::size_t i, std::size_t j, std::size_t heads) noexcept {
	return i * heads - i * (i - 1) / 2 + (j - i);
}

struct ExtendedHead {
	std::size_t i = 0;
	std::size_t j = 0;
	Tensor value;

	bool diagonal() const noexcept { return i == j; }
};

/**
 * Candidate outputs for a batch. `base` holds the K head tensors; `extended`
 * holds the outputs assignment runs over: all pairs i <= j when combining,
 * otherwise the base heads tagged (i, i).
 */
struct HeadOutputs {
	std::vector<Tensor> base;
	std::vector<ExtendedHead> extended;

	std::size_t heads() const noexcept { return base.size(); }
	std::size_t extended_count() const noexcept { return extended.size(); }

	/// Outputs restricted to one batch element, each [C,H,W].
	HeadOutputs sample(std::size_t n) const {
		HeadOutputs out;
		out.base.reserve(base.size());
		for (const auto& b : base)
			out.base.push_back(b.sample(n));
		out.extended.reserve(extended.size());
		for (const auto& e : extended)
			out.extended.push_back({e.i, e.j, e.value.sample(n)});
		return out;
	}
};

/// Averages every pair (i, j), i <= j, of the base heads.
inline std::vector<ExtendedHead> combine_heads(std::span<const Tensor> base) {
	if (base.empty())
		throw ConfigError("combine_heads: no base heads");
	const std::size_t k = base.size();
	std::vector<ExtendedHead> out;
	out.reserve(extended_head_count(k, true));
	for (std::size_t i = 0; i < k; ++i)
		for (std::size_t j = i; j < k; ++j) {
			require_same_shape(base[i], base[j], "combine_heads");
			Tensor v(base[i].shape());
			const double* a = base[i].raw();
			const double* b = base[j].raw();
			for (std::size_t e = 0; e < v.numel(); ++e)
				v[e] = (a[e] + b[e]) * 0.5;
			out.push_back({i, j, std::move(v)});
		}
	return out;
}

inline HeadOutputs make_head_outputs(std::vector<Tensor> base, bool combine) {
	HeadOutputs out;
	if (combine) {
		out.extended = combine_heads(base);
	} else {
		if (base.empty())
			throw ConfigError("make_head_outputs: no base heads");
		for (std::size_t i = 0; i < base.size(); ++i)
			out.extended.push_back({i, i, base[i]});
	}
	out.base = std::move(base);
	return out;
}

/**
 * Chain rule through the pair average: an extended head (i, j) passes half of
 * its gradient to each member, or all of it when i == j. The gradient lands in
 * slot `n` of the batched base-head gradients.
 */
inline void backward_through_combination(std::size_t i, std::size_t j, std::span<const double> grad,
										 std::vector<Tensor>& base_grads, std::size_t n) {
	if (i == j) {
		auto dst = base_grads.at(i).sample_span(n);
		for (std::size_t e = 0; e < grad.size(); ++e)
			dst[e] += grad[e];
		return;
	}
	auto di = base_grads.at(i).sample_span(n);
	auto dj = base_grads.at(j).sample_span(n);
	for (std::size_t e = 0; e < grad.size(); ++e) {
		di[e] += 0.5 * grad[e];
		dj[e] += 0.5 * grad[e];
	}
}

/// Activations saved by Network::forward for the backward pass.
struct ForwardPass {
	HeadOutputs outputs;
	Tensor input;
	Tensor stem_pre;                  // conv_in(x), before relu
	std::vector<Tensor> block_inputs; // h_0 .. h_{D}
	std::vector<Tensor> block_pre;    // conv1(h_b), before relu
	std::vector<Tensor> block_act;    // relu(conv1(h_b))
};

/**
 * Multi-head residual restoration network.
 *
 *   h_0     = relu(conv_in(x))
 *   h_{b+1} = h_b + conv2_b(relu(conv1_b(h_b)))
 *   r       = conv_out(h_D)                 (K*C channels)
 *   mu_k(x) = x + r[kC : (k+1)C]
 *
 * All convolutions are 3x3, stride 1, same padding. Heads share the whole
 * trunk and differ only in their channel group of conv_out.
 */
class Network {
public:
	static constexpr std::size_t kKernel = 3;
	static constexpr std::size_t kPadding = 1;
	using Pass = ForwardPass;

	Network() = default;

	explicit Network(const NetworkConfig& config) : config_(config) {
		config_.validate();
		const std::size_t c = config_.channels, w = config_.width, k = kKernel;
		params_.emplace_back("in.weight", Tensor({w, c, k, k}));
		params_.emplace_back("in.bias", Tensor({w}));
		for (std::size_t b = 0; b < config_.depth; ++b) {
			const std::string p = "block" + std::to_string(b);
			params_.emplace_back(p + ".conv1.weight", Tensor({w, w, k, k}));
			params_.emplace_back(p + ".conv1.bias", Tensor({w}));
			params_.emplace_back(p + ".conv2.weight", Tensor({w, w, k, k}));
			params_.emplace_back(p + ".conv2.bias", Tensor({w}));
		}
		params_.emplace_back("out.weight", Tensor({config_.heads * c, w, k, k}));
		params_.emplace_back("out.bias", Tensor({config_.heads * c}));
	}

	const NetworkConfig& config() const noexcept { return config_; }
	std::size_t heads() const noexcept { return config_.heads; }
	std::size_t extended_count() const noexcept { return extended_head_count(config_.heads, config_.combine); }

	std::vector<Parameter>& parameters() noexcept { return params_; }
	const std::vector<Parameter>& parameters() const noexcept { return params_; }

	std::vector<Parameter*> parameter_ptrs() {
		std::vector<Parameter*> out;
		for (auto& p : params_)
			out.push_back(&p);
		return out;
	}

	Parameter& parameter(const std::string& id) {
		for (auto& p : params_)
			if (p.id == id)
				return p;
		throw ConfigError("no parameter named " + id);
	}
	const Parameter& parameter(const std::string& id) const { return const_cast<Network*>(this)->parameter(id); }

	Parameter& out_weight() noexcept { return params_[params_.size() - 2]; }
	Parameter& out_bias() noexcept { return params_.back(); }
	const Parameter& out_weight() const noexcept { return params_[params_.size() - 2]; }
	const Parameter& out_bias() const noexcept { return params_.back(); }

	std::size_t parameter_count() const noexcept {
		std::size_t n = 0;
		for (const auto& p : params_)
			n += p.value.numel();
		return n;
	}

	std::size_t output_layer_parameter_count() const noexcept {
		return out_weight().value.numel() + out_bias().value.numel();
	}

	void zero_grads() noexcept {
		for (auto& p : params_)
			p.zero_grad();
	}

	/// Read-only on the parameters.
	ForwardPass forward(const Tensor& x) const {
		if (x.rank() != 4)
			throw DimensionError("network input must be [N,C,H,W], got " + shape_str(x.shape()));
		if (x.dim(1) != config_.channels)
			throw ConfigError("network expects " + std::to_string(config_.channels) + " channels, input has " +
							  std::to_string(x.dim(1)));
		ForwardPass pass;
		pass.input = x;
		pass.stem_pre = conv2d_forward(x, params_[0].value, params_[1].value, kPadding);
		pass.block_inputs.push_back(relu_forward(pass.stem_pre));
		for (std::size_t b = 0; b < config_.depth; ++b) {
			const std::size_t base = 2 + 4 * b;
			Tensor pre = conv2d_forward(pass.block_inputs.back(), params_[base].value, params_[base + 1].value,
										kPadding);
			Tensor act = relu_forward(pre);
			Tensor next = conv2d_forward(act, params_[base + 2].value, params_[base + 3].value, kPadding);
			axpy(next, pass.block_inputs.back());
			pass.block_pre.push_back(std::move(pre));
			pass.block_act.push_back(std::move(act));
			pass.block_inputs.push_back(std::move(next));
		}
		// One convolution per head keeps head k bit-identical however many heads follow it.
		const std::size_t c = config_.channels;
		const Shape wshape{c, config_.width, kKernel, kKernel};
		std::vector<Tensor> base;
		for (std::size_t k = 0; k < config_.heads; ++k) {
			const auto [w0, w1] = head_weight_range(k);
			const auto [b0, b1] = head_bias_range(k);
			const auto& wv = out_weight().value.data();
			const auto& bv = out_bias().value.data();
			const Tensor w(wshape, std::vector<double>(wv.begin() + static_cast<std::ptrdiff_t>(w0),
													  wv.begin() + static_cast<std::ptrdiff_t>(w1)));
			const Tensor bias({c}, std::vector<double>(bv.begin() + static_cast<std::ptrdiff_t>(b0),
													  bv.begin() + static_cast<std::ptrdiff_t>(b1)));
			Tensor head = conv2d_forward(pass.block_inputs.back(), w, bias, kPadding);
			axpy(head, x);
			ensure_finite(head, "network forward");
			base.push_back(std::move(head));
		}
		pass.outputs = make_head_outputs(std::move(base), config_.combine);
		return pass;
	}

	/**
	 * Accumulates parameter gradients given d loss / d mu_k for every base
	 * head (each shaped like the input batch).
	 */
	void backward(const ForwardPass& pass, std::span<const Tensor> base_grads) {
		if (base_grads.size() != config_.heads)
			throw DimensionError("backward: expected " + std::to_string(config_.heads) + " head gradients, got " +
								 std::to_string(base_grads.size()));
		const Tensor& x = pass.input;
		const std::size_t n = x.dim(0), c = config_.channels;
		const std::size_t plane = x.dim(2) * x.dim(3);
		Tensor grad_residual({n, config_.heads * c, x.dim(2), x.dim(3)});
		for (std::size_t k = 0; k < config_.heads; ++k) {
			require_same_shape(base_grads[k], x, "backward head gradient");
			for (std::size_t s = 0; s < n; ++s) {
				const double* g = base_grads[k].raw() + s * c * plane;
				double* dst = grad_residual.raw() + (s * config_.heads * c + k * c) * plane;
				std::copy(g, g + c * plane, dst);
			}
		}

		Tensor grad_h(pass.block_inputs.back().shape());
		conv2d_backward_accumulate(grad_residual, pass.block_inputs.back(), out_weight().value, kPadding, 1, &grad_h,
								   out_weight().grad, out_bias().grad);
		for (std::size_t b = config_.depth; b-- > 0;) {
			const std::size_t base = 2 + 4 * b;
			Tensor grad_act(pass.block_act[b].shape());
			conv2d_backward_accumulate(grad_h, pass.block_act[b], params_[base + 2].value, kPadding, 1, &grad_act,
									   params_[base + 2].grad, params_[base + 3].grad);
			const Tensor grad_pre = relu_backward(grad_act, pass.block_pre[b]);
			// grad_h already carries the skip-connection term.
			conv2d_backward_accumulate(grad_pre, pass.block_inputs[b], params_[base].value, kPadding, 1, &grad_h,
									   params_[base].grad, params_[base + 1].grad);
		}
		const Tensor grad_stem = relu_backward(grad_h, pass.stem_pre);
		conv2d_backward_accumulate(grad_stem, x, params_[0].value, kPadding, 1, nullptr, params_[0].grad,
								   params_[1].grad);
	}

	/// Flat index range of head k inside out.weight / out.bias.
	std::pair<std::size_t, std::size_t> head_weight_range(std::size_t k) const noexcept {
		const std::size_t per = config_.channels * config_.width * kKernel * kKernel;
		return {k * per, (k + 1) * per};
	}
	std::pair<std::size_t, std::size_t> head_bias_range(std::size_t k) const noexcept {
		return {k * config_.channels, (k + 1) * config_.channels};
	}

	/// L2 norm of the output-layer gradient owned by head k.
	double head_grad_norm(std::size_t k) const {
		double s = 0.0;
		auto [w0, w1] = head_weight_range(k);
		for (std::size_t i = w0; i < w1; ++i)
			s += out_weight().grad[i] * out_weight().grad[i];
		auto [b0, b1] = head_bias_range(k);
		for (std::size_t i = b0; i < b1; ++i)
			s += out_bias().grad[i] * out_bias().grad[i];
		return std::sqrt(s);
	}

private:
	NetworkConfig config_;
	std::vector<Parameter> params_;
};

struct InitScheme {
	double output_std = 1e-2;
};

/**
 * He fan-in initialization for the trunk; small Gaussian weights for the
 * output layer so heads differ from the first step. Biases start at zero.
 *
 * Every tensor (and every head's slice of the output layer) draws from its
 * own derived stream, so networks sharing a seed share their trunk and their
 * first heads regardless of K.
 */
inline void init_params(Network& net, const Rng& rng, const InitScheme& scheme = {}) {
	auto& params = net.parameters();
	for (std::size_t p = 0; p + 2 < params.size(); ++p) {
		Tensor& v = params[p].value;
		if (v.rank() == 1) {
			v.fill(0.0);
			continue;
		}
		const double fan_in = static_cast<double>(v.dim(1) * v.dim(2) * v.dim(3));
		const double std = std::sqrt(2.0 / fan_in);
		Rng stream = rng.derive(p);
		for (double& e : v.data())
			e = stream.normal() * std;
	}
	Parameter& ow = net.out_weight();
	for (std::size_t k = 0; k < net.heads(); ++k) {
		Rng stream = rng.derive(1000 + k);
		auto [w0, w1] = net.head_weight_range(k);
		for (std::size_t i = w0; i < w1; ++i)
			ow.value[i] = stream.normal() * scheme.output_std;
	}
	net.out_bias().value.fill(0.0);
	net.zero_grads();
}

} // namespace wta

#endif // WTA_MODEL_HPP_
