#ifndef WTA_TRAINING_HPP_
#define WTA_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wta/dataset.hpp"
#include "wta/error.hpp"
#include "wta/loss.hpp"
#include "wta/model.hpp"
#include "wta/optimizer.hpp"
#include "wta/rng.hpp"
#include "wta/tensor.hpp"

namespace wta {

struct TrainConfig {
	std::size_t heads = 1;
	bool combine = false;
	LossKind loss = LossKind::charbonnier();
	OptimizerConfig optimizer;
	std::uint64_t steps = 1;
	std::size_t batch_size = 8;
	std::uint64_t seed = 0;
	/// Steps a sample keeps its head before it is reassigned; 1 reassigns every step.
	std::uint64_t reassign_every = 1;
	std::uint64_t log_every = 50;
	std::uint64_t eval_every = 0; // 0 disables periodic evaluation

	void validate() const {
		if (heads < 1)
			throw ConfigError("K must be >= 1");
		if (steps < 1)
			throw ConfigError("steps must be >= 1");
		if (batch_size < 1)
			throw ConfigError("batch_size must be >= 1");
		if (reassign_every < 1)
			throw ConfigError("reassign_every must be >= 1");
		if (loss.type == LossType::Charbonnier && !(loss.epsilon > 0.0))
			throw ConfigError("Charbonnier epsilon must be > 0");
		optimizer.validate();
	}
};

struct Assignment {
	std::size_t index = 0; // position in HeadOutputs::extended
	std::size_t i = 0;
	std::size_t j = 0;
	double loss = 0.0;
	std::vector<double> losses;
};

namespace detail {

template <typename SpanOf>
Assignment assign_impl(const HeadOutputs& outputs, SpanOf span_of, std::span<const double> target,
					   const LossKind& kind, std::uint64_t step) {
	if (outputs.extended.empty())
		throw ConfigError("assign: no heads");
	Assignment a;
	a.losses.reserve(outputs.extended.size());
	a.loss = std::numeric_limits<double>::infinity();
	bool found = false;
	for (std::size_t e = 0; e < outputs.extended.size(); ++e) {
		const double l = loss(kind, span_of(e), target);
		a.losses.push_back(l);
		if (std::isfinite(l) && (!found || l < a.loss)) {
			found = true;
			a.loss = l;
			a.index = e;
		}
	}
	if (!found)
		throw DivergenceError("assign: every head has a non-finite loss", step);
	a.i = outputs.extended[a.index].i;
	a.j = outputs.extended[a.index].j;
	return a;
}

} // namespace detail

/**
 * Nearest extended head for sample `n` of a batched HeadOutputs. Ties go to
 * the lowest enumeration index; non-finite losses never win.
 */
inline Assignment assign(const HeadOutputs& outputs, std::size_t n, std::span<const double> target,
						 const LossKind& kind, std::uint64_t step = 0) {
	return detail::assign_impl(
		outputs, [&](std::size_t e) { return outputs.extended[e].value.sample_span(n); }, target, kind, step);
}

/// Single-sample form: every extended value is shaped like `target`.
inline Assignment assign(const HeadOutputs& outputs, const Tensor& target, const LossKind& kind) {
	for (const auto& e : outputs.extended)
		require_same_shape(e.value, target, "assign");
	return detail::assign_impl(
		outputs, [&](std::size_t e) { return outputs.extended[e].value.data(); }, target.data(), kind, 0);
}

struct TraceRecord {
	std::uint64_t step = 0;
	std::size_t sample = 0;
	std::size_t index = 0;
	std::size_t i = 0;
	std::size_t j = 0;
	double loss = 0.0;
	std::vector<double> losses;
};

struct AssignmentTrace {
	std::size_t extended_count = 0;
	std::vector<TraceRecord> records;

	void append(std::span<const TraceRecord> more) { records.insert(records.end(), more.begin(), more.end()); }
};

/// Fraction of assignments that went to each extended head.
inline std::vector<double> head_utilization(std::span<const TraceRecord> records, std::size_t extended_count) {
	if (records.empty())
		throw ConfigError("head_utilization: empty trace");
	std::vector<double> counts(extended_count, 0.0);
	for (const auto& r : records)
		counts.at(r.index) += 1.0;
	for (auto& c : counts)
		c /= static_cast<double>(records.size());
	return counts;
}

inline std::vector<double> head_utilization(const AssignmentTrace& trace) {
	return head_utilization(trace.records, trace.extended_count);
}

/// Tab-separated dump: step, sample, head, i, j, loss, then one column per extended head.
inline void write_trace(std::ostream& os, const AssignmentTrace& trace, bool header = true) {
	if (header) {
		os << "step\tsample\thead\ti\tj\tloss";
		for (std::size_t e = 0; e < trace.extended_count; ++e)
			os << "\tloss_" << e;
		os << '\n';
	}
	os.precision(17);
	for (const auto& r : trace.records) {
		os << r.step << '\t' << r.sample << '\t' << r.index << '\t' << r.i << '\t' << r.j << '\t' << r.loss;
		for (double l : r.losses)
			os << '\t' << l;
		os << '\n';
	}
}

/**
 * Anything that maps a batch to K candidate heads and can backpropagate
 * gradients on those heads into its parameters.
 */
template <typename G>
concept HeadGenerator = requires(G& g, const G& cg, const Tensor& x, const typename G::Pass& pass,
								 std::span<const Tensor> grads) {
	{ cg.forward(x) } -> std::same_as<typename G::Pass>;
	{ pass.outputs } -> std::convertible_to<const HeadOutputs&>;
	g.backward(pass, grads);
	g.zero_grads();
	{ g.parameter_ptrs() } -> std::same_as<std::vector<Parameter*>>;
	{ cg.heads() } -> std::convertible_to<std::size_t>;
};

struct Batch {
	Tensor x;                       // [B, ...]
	Tensor y;                       // [B, ...]
	std::vector<std::size_t> ids;   // dataset index of each row
};

struct StepResult {
	double mean_loss = 0.0;
	std::vector<TraceRecord> records;
};

/// Optional per-sample assignment memory for reassign_every > 1.
struct AssignmentCache {
	struct Entry {
		std::size_t index = 0;
		std::uint64_t stamp = 0;
		bool valid = false;
	};
	std::vector<Entry> entries;
};

/**
 * One WTA update: forward, per-sample assignment to the nearest extended
 * head, gradient of the selected head's loss only (averaged over the batch),
 * one optimizer step. Parameters are untouched when the step diverges.
 */
template <HeadGenerator G>
StepResult train_step(G& gen, const Batch& batch, const TrainConfig& cfg, Optimizer& opt, std::uint64_t step,
					  AssignmentCache* cache = nullptr) {
	const std::size_t b = batch.x.dim(0);
	if (batch.y.dim(0) != b || batch.ids.size() != b)
		throw DimensionError("train_step: batch inputs, labels and ids disagree in size");
	gen.zero_grads();
	typename G::Pass pass = [&] {
		try {
			return gen.forward(batch.x);
		} catch (const NumericError& e) {
			throw DivergenceError(e.what(), step);
		}
	}();
	const HeadOutputs& out = pass.outputs;
	const Shape& head_shape = out.base.at(0).shape();
	if (head_shape != batch.y.shape())
		throw DimensionError("train_step: heads " + shape_str(head_shape) + " vs labels " +
							 shape_str(batch.y.shape()));

	std::vector<Tensor> base_grads(out.base.size(), Tensor(head_shape));
	const std::size_t per_sample = batch.y.numel() / b;
	std::vector<double> g(per_sample);
	StepResult result;
	result.records.reserve(b);
	const double inv_b = 1.0 / static_cast<double>(b);
	for (std::size_t n = 0; n < b; ++n) {
		const auto target = batch.y.sample_span(n);
		Assignment a = assign(out, n, target, cfg.loss, step);
		if (cache && cfg.reassign_every > 1) {
			auto& entry = cache->entries.at(batch.ids[n]);
			if (entry.valid && step - entry.stamp < cfg.reassign_every) {
				a.index = entry.index;
				a.i = out.extended[a.index].i;
				a.j = out.extended[a.index].j;
				a.loss = a.losses[a.index];
			} else {
				entry = {a.index, step, true};
			}
		}
		std::fill(g.begin(), g.end(), 0.0);
		loss_backward(cfg.loss, out.extended[a.index].value.sample_span(n), target, inv_b, g);
		backward_through_combination(a.i, a.j, g, base_grads, n);
		result.mean_loss += a.loss * inv_b;
		result.records.push_back({step, batch.ids[n], a.index, a.i, a.j, a.loss, std::move(a.losses)});
	}
	gen.backward(pass, base_grads);
	std::vector<Parameter*> params = gen.parameter_ptrs();
	for (const Parameter* p : params)
		if (!p->grad.all_finite())
			throw DivergenceError("non-finite gradient in " + p->id, step);
	opt.step(params, learning_rate(cfg.optimizer, step, cfg.steps));
	return result;
}

/// Dataset index at global position `position` of the seeded epoch-wise shuffle.
class EpochSampler {
public:
	EpochSampler(std::size_t size, std::uint64_t seed) : size_(size), stream_(Rng(seed).derive(0x5eed)) {}

	std::size_t at(std::uint64_t position) {
		const std::uint64_t epoch = position / size_;
		if (!order_.size() || epoch != epoch_) {
			order_.resize(size_);
			for (std::size_t i = 0; i < size_; ++i)
				order_[i] = i;
			Rng r = stream_.derive(epoch);
			r.shuffle(std::span<std::size_t>(order_));
			epoch_ = epoch;
		}
		return order_[position % size_];
	}

private:
	std::size_t size_;
	Rng stream_;
	std::uint64_t epoch_ = 0;
	std::vector<std::size_t> order_;
};

struct MetricsRecord {
	std::uint64_t step = 0;      // number of completed steps
	double mean_loss = 0.0;      // over the logging window
	double lr = 0.0;
	std::vector<double> utilization;
	std::optional<double> psnr_overall;
	std::optional<double> psnr_single_head;
};

/// Progress of a run; together with the seed it fully determines the rest of the run.
struct TrainState {
	std::uint64_t step = 0;
	Optimizer optimizer;
};

struct EvalScores {
	double psnr_overall = 0.0;
	double psnr_single_head = 0.0;
};

struct TrainHooks {
	std::function<EvalScores(const Network&)> evaluate;
	std::function<void(const MetricsRecord&)> on_record;
	std::function<void(const Network&, const TrainState&)> on_checkpoint;
	std::function<void(const Network&, const TrainState&)> on_divergence;
	std::uint64_t checkpoint_every = 0;
	/// Stop once this many steps are complete (0 = run to cfg.steps).
	std::uint64_t stop_after = 0;
};

struct TrainResult {
	std::vector<MetricsRecord> history;
	AssignmentTrace trace;
};

inline Batch make_batch(const Dataset& data, std::span<const std::size_t> ids) {
	std::vector<Tensor> xs, ys;
	xs.reserve(ids.size());
	ys.reserve(ids.size());
	for (std::size_t id : ids) {
		xs.push_back(data.input(id));
		ys.push_back(data.label(id));
	}
	return {stack(xs), stack(ys), {ids.begin(), ids.end()}};
}

inline void check_compatible(const Network& net, const TrainConfig& cfg) {
	if (net.heads() != cfg.heads || net.config().combine != cfg.combine)
		throw ConfigError("network has K=" + std::to_string(net.heads()) +
						  " combine=" + std::to_string(net.config().combine) + " but training config has K=" +
						  std::to_string(cfg.heads) + " combine=" + std::to_string(cfg.combine));
}

/**
 * Runs steps state.step .. cfg.steps-1 (or up to hooks.stop_after). Sample
 * order depends only on (seed, position), so resuming from a saved state
 * continues the same sequence.
 */
inline TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg, TrainState& state,
						 const TrainHooks& hooks = {}) {
	cfg.validate();
	check_compatible(net, cfg);
	if (data.size() == 0)
		throw ConfigError("training dataset is empty");
	if (data.image_shape()[0] != net.config().channels)
		throw ConfigError("dataset channels do not match the network");

	TrainResult result;
	result.trace.extended_count = net.extended_count();
	EpochSampler sampler(data.size(), cfg.seed);
	AssignmentCache cache;
	if (cfg.reassign_every > 1)
		cache.entries.resize(data.size());

	const std::uint64_t last = hooks.stop_after ? std::min(hooks.stop_after, cfg.steps) : cfg.steps;
	std::size_t window_start = result.trace.records.size();
	double window_loss = 0.0;
	std::uint64_t window_steps = 0;
	std::vector<std::size_t> ids(cfg.batch_size);
	while (state.step < last) {
		const std::uint64_t step = state.step;
		for (std::size_t k = 0; k < cfg.batch_size; ++k)
			ids[k] = sampler.at(step * cfg.batch_size + k);
		const Batch batch = make_batch(data, ids);
		StepResult r;
		try {
			r = train_step(net, batch, cfg, state.optimizer, step, cfg.reassign_every > 1 ? &cache : nullptr);
		} catch (const DivergenceError&) {
			if (hooks.on_divergence)
				hooks.on_divergence(net, state);
			throw;
		}
		++state.step;
		result.trace.append(r.records);
		window_loss += r.mean_loss;
		++window_steps;

		const bool log_now = (cfg.log_every && state.step % cfg.log_every == 0) || state.step == cfg.steps;
		const bool eval_now = hooks.evaluate && ((cfg.eval_every && state.step % cfg.eval_every == 0) ||
												 state.step == cfg.steps);
		if (log_now || eval_now) {
			MetricsRecord rec;
			rec.step = state.step;
			rec.mean_loss = window_loss / static_cast<double>(window_steps);
			rec.lr = learning_rate(cfg.optimizer, step, cfg.steps);
			rec.utilization = head_utilization(
				std::span<const TraceRecord>(result.trace.records).subspan(window_start), result.trace.extended_count);
			if (eval_now) {
				const EvalScores s = hooks.evaluate(net);
				rec.psnr_overall = s.psnr_overall;
				rec.psnr_single_head = s.psnr_single_head;
			}
			if (hooks.on_record)
				hooks.on_record(rec);
			result.history.push_back(std::move(rec));
			window_start = result.trace.records.size();
			window_loss = 0.0;
			window_steps = 0;
		}
		if (hooks.on_checkpoint && hooks.checkpoint_every && state.step % hooks.checkpoint_every == 0)
			hooks.on_checkpoint(net, state);
	}
	return result;
}

} // namespace wta

#endif // WTA_TRAINING_HPP_
