#ifndef WTA_OPTIMIZER_HPP_
#define WTA_OPTIMIZER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wta/error.hpp"
#include "wta/tensor.hpp"

namespace wta {

enum class OptimizerKind { SGD, Adam };
enum class Schedule { Constant, Cosine };

struct OptimizerConfig {
	OptimizerKind kind = OptimizerKind::Adam;
	double lr = 1e-3;
	double lr_min = 1e-6;
	double beta1 = 0.9;
	double beta2 = 0.999;
	double eps = 1e-8;
	double weight_decay = 0.0;
	Schedule schedule = Schedule::Cosine;

	void validate() const {
		if (!(lr > 0.0))
			throw ConfigError("learning rate must be > 0");
		if (lr_min < 0.0 || lr_min > lr)
			throw ConfigError("lr_min must lie in [0, lr]");
		if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
			throw ConfigError("Adam betas must lie in [0, 1)");
		if (weight_decay < 0.0)
			throw ConfigError("weight decay must be >= 0");
	}
};

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }
inline std::string to_string(Schedule s) { return s == Schedule::Constant ? "constant" : "cosine"; }

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
	if (s == "sgd")
		return OptimizerKind::SGD;
	if (s == "adam")
		return OptimizerKind::Adam;
	throw ConfigError("unknown optimizer '" + s + "' (sgd, adam)");
}

inline Schedule parse_schedule(const std::string& s) {
	if (s == "constant")
		return Schedule::Constant;
	if (s == "cosine")
		return Schedule::Cosine;
	throw ConfigError("unknown schedule '" + s + "' (constant, cosine)");
}

/// Learning rate for 0-based `step` of `total` steps.
inline double learning_rate(const OptimizerConfig& cfg, std::uint64_t step, std::uint64_t total) {
	if (cfg.schedule == Schedule::Constant || total <= 1)
		return cfg.lr;
	const double progress = static_cast<double>(step) / static_cast<double>(total - 1);
	return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Plain SGD or Adam over a fixed parameter list. Weight decay is added to the gradient.
class Optimizer {
public:
	Optimizer() = default;
	explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

	const OptimizerConfig& config() const noexcept { return cfg_; }
	std::uint64_t steps_taken() const noexcept { return t_; }

	void step(std::span<Parameter* const> params, double lr) {
		if (cfg_.kind == OptimizerKind::Adam && m_.empty()) {
			for (const Parameter* p : params) {
				m_.emplace_back(p->value.shape());
				v_.emplace_back(p->value.shape());
			}
		}
		++t_;
		const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
		const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
		for (std::size_t k = 0; k < params.size(); ++k) {
			Parameter& p = *params[k];
			const std::size_t n = p.value.numel();
			double* w = p.value.raw();
			const double* g = p.grad.raw();
			if (cfg_.kind == OptimizerKind::SGD) {
				for (std::size_t i = 0; i < n; ++i)
					w[i] -= lr * (g[i] + cfg_.weight_decay * w[i]);
				continue;
			}
			double* m = m_[k].raw();
			double* v = v_[k].raw();
			for (std::size_t i = 0; i < n; ++i) {
				const double gi = g[i] + cfg_.weight_decay * w[i];
				m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
				v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
				w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
			}
		}
	}

	// Moment buffers are exposed for checkpointing.
	std::vector<Tensor>& first_moments() noexcept { return m_; }
	std::vector<Tensor>& second_moments() noexcept { return v_; }
	const std::vector<Tensor>& first_moments() const noexcept { return m_; }
	const std::vector<Tensor>& second_moments() const noexcept { return v_; }
	void set_steps_taken(std::uint64_t t) noexcept { t_ = t; }

private:
	OptimizerConfig cfg_;
	std::uint64_t t_ = 0;
	std::vector<Tensor> m_;
	std::vector<Tensor> v_;
};

} // namespace wta

#endif // WTA_OPTIMIZER_HPP_
