#ifndef WTA_CLI_HPP_
#define WTA_CLI_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wta/checkpoint.hpp"
#include "wta/dataset.hpp"
#include "wta/error.hpp"
#include "wta/grad_check.hpp"
#include "wta/kmeans.hpp"
#include "wta/metrics.hpp"
#include "wta/model.hpp"
#include "wta/ppm.hpp"
#include "wta/training.hpp"

namespace wta::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kDiverged = 3 };

struct RunConfig {
	TrainConfig train;
	std::size_t depth = 4;
	std::size_t width = 16;
	InitScheme init;
	std::string train_data;
	std::string eval_data;
	std::string out_dir;
	std::uint64_t checkpoint_every = 250;
	std::size_t eval_limit = 0;
	bool eval_ssim = false; // periodic evaluation; the final report always has SSIM

	NetworkConfig network() const {
		NetworkConfig n;
		n.heads = train.heads;
		n.combine = train.combine;
		n.depth = depth;
		n.width = width;
		return n;
	}

	void validate() const {
		train.validate();
		network().validate();
		if (!(init.output_std >= 0.0))
			throw ConfigError("init_output_std must be >= 0");
		if (train_data.empty())
			throw ConfigError("train_data is not set");
	}
};

namespace detail {

inline std::string num(double v) { return nlohmann::json(v).dump(); }

inline bool parse_bool(const std::string& key, const std::string& v) {
	if (v == "1" || v == "true" || v == "on" || v == "yes")
		return true;
	if (v == "0" || v == "false" || v == "off" || v == "no")
		return false;
	throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& key, const std::string& v) {
	std::size_t used = 0;
	double d = 0.0;
	try {
		d = std::stod(v, &used);
	} catch (const std::exception&) {
		used = 0;
	}
	if (used == 0 || used != v.size())
		throw ConfigError(key + ": expected a number, got '" + v + "'");
	return d;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
	if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
		throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
	try {
		return std::stoull(v);
	} catch (const std::exception&) {
		throw ConfigError(key + ": integer out of range '" + v + "'");
	}
}

struct Key {
	const char* name;
	std::function<void(RunConfig&, const std::string&)> set;
	std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Key>& keys() {
	static const std::vector<Key> k = [] {
		std::vector<Key> v;
		auto uint_key = [&](const char* name, auto member) {
			v.push_back({name, [=](RunConfig& c, const std::string& s) { member(c) = parse_uint(name, s); },
						 [=](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }});
		};
		auto real_key = [&](const char* name, auto member) {
			v.push_back({name, [=](RunConfig& c, const std::string& s) { member(c) = parse_double(name, s); },
						 [=](const RunConfig& c) { return num(member(const_cast<RunConfig&>(c))); }});
		};
		uint_key("heads", [](RunConfig& c) -> std::size_t& { return c.train.heads; });
		v.push_back({"combine", [](RunConfig& c, const std::string& s) { c.train.combine = parse_bool("combine", s); },
					 [](const RunConfig& c) { return std::string(c.train.combine ? "true" : "false"); }});
		uint_key("depth", [](RunConfig& c) -> std::size_t& { return c.depth; });
		uint_key("width", [](RunConfig& c) -> std::size_t& { return c.width; });
		real_key("init_output_std", [](RunConfig& c) -> double& { return c.init.output_std; });
		v.push_back({"loss",
					 [](RunConfig& c, const std::string& s) {
						 c.train.loss = parse_loss_kind(s, c.train.loss.epsilon > 0.0 ? c.train.loss.epsilon : 1e-3);
					 },
					 [](const RunConfig& c) { return to_string(c.train.loss); }});
		v.push_back({"charbonnier_eps",
					 [](RunConfig& c, const std::string& s) { c.train.loss.epsilon = parse_double("charbonnier_eps", s); },
					 [](const RunConfig& c) { return num(c.train.loss.epsilon); }});
		v.push_back({"optimizer",
					 [](RunConfig& c, const std::string& s) { c.train.optimizer.kind = parse_optimizer_kind(s); },
					 [](const RunConfig& c) { return to_string(c.train.optimizer.kind); }});
		real_key("lr", [](RunConfig& c) -> double& { return c.train.optimizer.lr; });
		real_key("lr_min", [](RunConfig& c) -> double& { return c.train.optimizer.lr_min; });
		real_key("beta1", [](RunConfig& c) -> double& { return c.train.optimizer.beta1; });
		real_key("beta2", [](RunConfig& c) -> double& { return c.train.optimizer.beta2; });
		real_key("adam_eps", [](RunConfig& c) -> double& { return c.train.optimizer.eps; });
		real_key("weight_decay", [](RunConfig& c) -> double& { return c.train.optimizer.weight_decay; });
		v.push_back({"schedule",
					 [](RunConfig& c, const std::string& s) { c.train.optimizer.schedule = parse_schedule(s); },
					 [](const RunConfig& c) { return to_string(c.train.optimizer.schedule); }});
		uint_key("steps", [](RunConfig& c) -> std::uint64_t& { return c.train.steps; });
		uint_key("batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
		uint_key("seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
		uint_key("reassign_every", [](RunConfig& c) -> std::uint64_t& { return c.train.reassign_every; });
		uint_key("log_every", [](RunConfig& c) -> std::uint64_t& { return c.train.log_every; });
		uint_key("eval_every", [](RunConfig& c) -> std::uint64_t& { return c.train.eval_every; });
		uint_key("checkpoint_every", [](RunConfig& c) -> std::uint64_t& { return c.checkpoint_every; });
		uint_key("eval_limit", [](RunConfig& c) -> std::size_t& { return c.eval_limit; });
		v.push_back({"eval_ssim", [](RunConfig& c, const std::string& s) { c.eval_ssim = parse_bool("eval_ssim", s); },
					 [](const RunConfig& c) { return std::string(c.eval_ssim ? "true" : "false"); }});
		v.push_back({"train_data", [](RunConfig& c, const std::string& s) { c.train_data = s; },
					 [](const RunConfig& c) { return c.train_data; }});
		v.push_back({"eval_data", [](RunConfig& c, const std::string& s) { c.eval_data = s; },
					 [](const RunConfig& c) { return c.eval_data; }});
		v.push_back({"out_dir", [](RunConfig& c, const std::string& s) { c.out_dir = s; },
					 [](const RunConfig& c) { return c.out_dir; }});
		return v;
	}();
	return k;
}

inline std::string trim(const std::string& s) {
	const auto b = s.find_first_not_of(" \t\r");
	if (b == std::string::npos)
		return "";
	return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

} // namespace detail

inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
	for (const auto& k : detail::keys())
		if (key == k.name) {
			k.set(c, value);
			return;
		}
	throw ConfigError("unknown config key '" + key + "'");
}

/// `key = value` lines; `#` starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& is, const std::string& origin) {
	std::vector<std::pair<std::string, std::string>> out;
	std::string line;
	for (std::size_t n = 1; std::getline(is, line); ++n) {
		if (const auto h = line.find('#'); h != std::string::npos)
			line.erase(h);
		line = detail::trim(line);
		if (line.empty())
			continue;
		const auto eq = line.find('=');
		if (eq == std::string::npos)
			throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
		out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
	}
	return out;
}

inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
	std::ifstream is(path);
	if (!is)
		throw ConfigError("cannot read config file " + path);
	return parse_config_text(is, path);
}

/// Resolved configuration in a fixed key order; loadable again with --config.
inline std::string config_echo(const RunConfig& c) {
	std::ostringstream os;
	for (const auto& k : detail::keys())
		os << k.name << " = " << k.get(c) << '\n';
	return os.str();
}

inline std::string run_root() {
	const char* env = std::getenv("WTA_RUN_ROOT");
	return env && *env ? env : "runs";
}

inline std::string default_run_name(const RunConfig& c) {
	return "k" + std::to_string(c.train.heads) + (c.train.combine ? "c" : "") + "_s" + std::to_string(c.train.seed);
}

inline Dataset load_dataset(const std::string& path, const char* role) {
	if (path.empty())
		throw ConfigError(std::string(role) + " dataset path is empty");
	if (!fs::exists(path))
		throw ConfigError(std::string(role) + " dataset not found: " + path);
	return read_dataset(path);
}

inline nlohmann::ordered_json to_json(const MetricsRecord& r) {
	nlohmann::ordered_json j;
	j["step"] = r.step;
	j["loss"] = r.mean_loss;
	j["lr"] = r.lr;
	j["utilization"] = r.utilization;
	if (r.psnr_overall)
		j["psnr_overall"] = *r.psnr_overall;
	if (r.psnr_single_head)
		j["psnr_single_head"] = *r.psnr_single_head;
	return j;
}

namespace detail {

// Keeps the lines of a log whose leading step field satisfies `keep`.
inline void truncate_lines(const fs::path& p, const std::function<bool(const std::string&)>& keep) {
	if (!fs::exists(p))
		return;
	std::vector<std::string> lines;
	{
		std::ifstream is(p);
		for (std::string line; std::getline(is, line);)
			if (keep(line))
				lines.push_back(line);
	}
	std::ofstream os(p, std::ios::trunc);
	for (const auto& l : lines)
		os << l << '\n';
}

inline std::string step_name(std::uint64_t step) {
	std::string s = std::to_string(step);
	return "step_" + std::string(s.size() < 8 ? 8 - s.size() : 0, '0') + s + ".wtac";
}

} // namespace detail

struct TrainSession {
	std::optional<std::string> resume;  // checkpoint path; "auto" picks checkpoints/latest.wtac
	std::uint64_t stop_after = 0;
	bool quiet = false;
};

/**
 * Trains into a run directory: config.txt, checkpoints/, metrics.log
 * (JSON lines), trace.tsv and reports/final.json when eval data is set.
 */
inline int run_training(const RunConfig& cfg_in, const TrainSession& session, std::ostream& log) {
	RunConfig cfg = cfg_in;
	if (cfg.out_dir.empty())
		cfg.out_dir = (fs::path(run_root()) / default_run_name(cfg)).string();
	cfg.validate();
	const Dataset data = load_dataset(cfg.train_data, "training");
	std::optional<Dataset> eval_data;
	if (!cfg.eval_data.empty())
		eval_data = load_dataset(cfg.eval_data, "evaluation");
	if (data.image_shape()[0] != cfg.network().channels)
		throw ConfigError("training data has " + std::to_string(data.image_shape()[0]) + " channels, network expects " +
						  std::to_string(cfg.network().channels));

	const fs::path dir(cfg.out_dir);
	const fs::path ckdir = dir / "checkpoints";
	fs::create_directories(ckdir);
	fs::create_directories(dir / "reports");
	{
		std::ofstream os(dir / "config.txt", std::ios::trunc);
		os << config_echo(cfg);
		if (!os)
			throw IoError((dir / "config.txt").string(), "write failed");
	}

	Network net(cfg.network());
	TrainState state{0, Optimizer(cfg.train.optimizer)};
	const fs::path metrics_path = dir / "metrics.log";
	const fs::path trace_path = dir / "trace.tsv";
	bool fresh = true;
	if (session.resume) {
		const std::string path = *session.resume == "auto" ? (ckdir / "latest.wtac").string() : *session.resume;
		Checkpoint ck = load_checkpoint(path);
		const NetworkConfig& n = ck.net.config();
		if (n.heads != cfg.train.heads || n.combine != cfg.train.combine || n.depth != cfg.depth ||
			n.width != cfg.width)
			throw ConfigError("checkpoint " + path + " does not match the run configuration");
		if (ck.seed != cfg.train.seed)
			throw ConfigError("checkpoint seed " + std::to_string(ck.seed) + " differs from config seed " +
							  std::to_string(cfg.train.seed));
		net = std::move(ck.net);
		state.step = ck.step;
		ck.restore(state.optimizer);
		fresh = false;
		const std::uint64_t s = state.step;
		detail::truncate_lines(metrics_path, [s](const std::string& l) {
			return nlohmann::json::parse(l, nullptr, false).value("step", std::uint64_t{0}) <= s;
		});
		bool header = true;
		detail::truncate_lines(trace_path, [s, &header](const std::string& l) {
			if (header) {
				header = false;
				return true;
			}
			return std::stoull(l.substr(0, l.find('\t'))) < s;
		});
		log << "resumed " << path << " at step " << state.step << '\n';
	} else {
		init_params(net, Rng(cfg.train.seed), cfg.init);
	}

	std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
	const std::array<std::uint64_t, 2> hw{data.header.height, data.header.width};
	const Rng sampler_rng = Rng(cfg.train.seed).derive(0x5eed);
	auto save = [&](const Network& n, const TrainState& st, const fs::path& p) {
		save_checkpoint(p.string(), n, st.step, cfg.train.seed, &st.optimizer, sampler_rng, hw);
	};

	TrainHooks hooks;
	if (eval_data) {
		hooks.evaluate = [&](const Network& n) {
			EvalOptions o;
			o.limit = cfg.eval_limit;
			o.with_ssim = cfg.eval_ssim;
			const EvalReport r = evaluate(n, *eval_data, o);
			return EvalScores{r.psnr_overall, r.psnr_single_head};
		};
	}
	hooks.on_record = [&](const MetricsRecord& r) {
		metrics << to_json(r).dump() << '\n';
		metrics.flush();
		if (!session.quiet) {
			log << "step " << r.step << " loss " << r.mean_loss;
			if (r.psnr_overall)
				log << " psnr_overall " << *r.psnr_overall << " psnr_single_head " << *r.psnr_single_head;
			log << '\n';
		}
	};
	hooks.checkpoint_every = cfg.checkpoint_every;
	hooks.on_checkpoint = [&](const Network& n, const TrainState& st) {
		save(n, st, ckdir / detail::step_name(st.step));
		fs::copy_file(ckdir / detail::step_name(st.step), ckdir / "latest.wtac", fs::copy_options::overwrite_existing);
	};
	hooks.on_divergence = [&](const Network& n, const TrainState& st) { save(n, st, ckdir / "last_good.wtac"); };
	hooks.stop_after = session.stop_after;

	TrainResult result;
	try {
		result = train(net, data, cfg.train, state, hooks);
	} catch (const DivergenceError& e) {
		log << "diverged: " << e.what() << "; parameters before the failing step are in "
			<< (ckdir / "last_good.wtac").string() << '\n';
		return kDiverged;
	}
	{
		std::ofstream os(trace_path, fresh ? std::ios::trunc : std::ios::app);
		write_trace(os, result.trace, fresh);
	}
	save(net, state, ckdir / detail::step_name(state.step));
	fs::copy_file(ckdir / detail::step_name(state.step), ckdir / "latest.wtac", fs::copy_options::overwrite_existing);
	if (state.step < cfg.train.steps) {
		log << "stopped at step " << state.step << " of " << cfg.train.steps << '\n';
		return kOk;
	}
	fs::copy_file(ckdir / "latest.wtac", ckdir / "final.wtac", fs::copy_options::overwrite_existing);
	if (eval_data) {
		EvalOptions o;
		o.limit = cfg.eval_limit;
		const EvalReport r = evaluate(net, *eval_data, o);
		std::ofstream os(dir / "reports" / "final.json", std::ios::trunc);
		os << to_json(r).dump(2) << '\n';
		log << "final psnr_overall " << r.psnr_overall << " psnr_single_head " << r.psnr_single_head << " (input "
			<< r.blurry_psnr << ")\n";
	}
	log << "run directory " << dir.string() << '\n';
	return kOk;
}

inline void check_eval_compatible(const Checkpoint& ck, const Dataset& d) {
	const Shape s = d.image_shape();
	if (s[0] != ck.net.config().channels)
		throw ConfigError("checkpoint expects " + std::to_string(ck.net.config().channels) + " channels, data has " +
						  std::to_string(s[0]));
	if (ck.image_hw[0] && (ck.image_hw[0] != s[1] || ck.image_hw[1] != s[2]))
		throw ConfigError("checkpoint was trained on " + std::to_string(ck.image_hw[0]) + "x" +
						  std::to_string(ck.image_hw[1]) + " images, data is " + std::to_string(s[1]) + "x" +
						  std::to_string(s[2]));
}

/// Residual heatmap, input, label and a signed diff of the two best heads for the first `count` images.
inline void write_heatmaps(const Network& net, const Dataset& d, std::size_t count, const fs::path& dir) {
	fs::create_directories(dir);
	const std::size_t n = std::min(count, d.size());
	for (std::size_t i = 0; i < n; ++i) {
		const ForwardPass pass = net.forward(stack(std::vector<Tensor>{d.input(i)}));
		const HeadOutputs out = pass.outputs.sample(0);
		const std::string stem = "img" + std::to_string(i);
		write_ppm((dir / (stem + "_input.ppm")).string(), d.input(i));
		write_ppm((dir / (stem + "_label.ppm")).string(), d.label(i));
		std::vector<std::pair<double, std::size_t>> ranked;
		for (std::size_t e = 0; e < out.extended.size(); ++e)
			ranked.emplace_back(-psnr(clamp(out.extended[e].value, 0.0, 1.0), d.label(i)), e);
		std::sort(ranked.begin(), ranked.end());
		write_ppm((dir / (stem + "_best.ppm")).string(), clamp(out.extended[ranked[0].second].value, 0.0, 1.0));
		if (out.extended.size() < 2)
			continue;
		write_ppm((dir / (stem + "_residual.ppm")).string(), residual_heatmap(out));
		const std::size_t a = ranked[0].second, b = ranked[1].second;
		write_ppm((dir / (stem + "_diff_" + std::to_string(a) + "_" + std::to_string(b) + ".ppm")).string(),
				  signed_diff_map(out.extended[a].value, out.extended[b].value));
	}
}

/**
 * Fixed positive weighting of every extended head's loss, so all paths of the
 * network (combination included) are exercised by one scalar objective.
 */
inline GradCheckReport network_grad_check(const NetworkConfig& nc, std::size_t size, std::uint64_t seed,
										  const LossKind& kind = LossKind::charbonnier(),
										  const GradCheckOptions& opts = {}) {
	Network net(nc);
	Rng rng(seed);
	init_params(net, rng.derive(0));
	Rng data = rng.derive(1);
	Tensor x({1, nc.channels, size, size}), y({1, nc.channels, size, size});
	for (double& v : x.data())
		v = data.uniform();
	for (double& v : y.data())
		v = data.uniform();
	auto f = [&] {
		const auto out = net.forward(x).outputs;
		double s = 0.0;
		for (std::size_t e = 0; e < out.extended.size(); ++e)
			s += static_cast<double>(e + 1) * loss(kind, out.extended[e].value, y);
		return s;
	};
	auto g = [&] {
		net.zero_grads();
		const auto pass = net.forward(x);
		std::vector<Tensor> base(nc.heads, Tensor(x.shape()));
		std::vector<double> gr(x.numel());
		for (std::size_t e = 0; e < pass.outputs.extended.size(); ++e) {
			const auto& h = pass.outputs.extended[e];
			std::fill(gr.begin(), gr.end(), 0.0);
			loss_backward(kind, h.value.data(), y.data(), static_cast<double>(e + 1), gr);
			backward_through_combination(h.i, h.j, gr, base, 0);
		}
		net.backward(pass, base);
	};
	return grad_check(f, g, net.parameter_ptrs(), opts);
}

struct KMeansDemoOptions {
	std::size_t blobs = 3;
	std::size_t points = 300;
	double sigma = 0.1;
	std::size_t seeds = 5;
	double max_ratio = 1.05;
	EquivalenceConfig equivalence;
};

struct KMeansDemoResult {
	std::vector<EquivalenceReport> runs;
	double median_ratio = 0.0;
	bool passed = false;
};

inline KMeansDemoResult kmeans_demo(const KMeansDemoOptions& o) {
	KMeansDemoResult r;
	std::vector<double> ratios;
	for (std::uint64_t s = 0; s < o.seeds; ++s) {
		Rng rng(s);
		Rng gen = rng.derive(0);
		const PointSet p = make_blobs(gen, o.blobs, o.points, o.sigma);
		r.runs.push_back(constant_generator_equivalence(p, o.blobs, rng.derive(1), o.equivalence));
		ratios.push_back(r.runs.back().ratio);
	}
	std::sort(ratios.begin(), ratios.end());
	const std::size_t m = ratios.size();
	r.median_ratio = m % 2 ? ratios[m / 2] : 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]);
	r.passed = r.median_ratio <= o.max_ratio;
	return r;
}

inline std::vector<std::size_t> parse_list(const std::string& s) {
	std::vector<std::size_t> out;
	std::stringstream ss(s);
	for (std::string item; std::getline(ss, item, ',');)
		out.push_back(detail::parse_uint("list", detail::trim(item)));
	if (out.empty())
		throw ConfigError("empty list '" + s + "'");
	return out;
}

inline double median(std::vector<double> v) {
	if (v.empty())
		throw MetricError("median of nothing");
	std::sort(v.begin(), v.end());
	const std::size_t m = v.size();
	return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

/// Entry point behind the `wta` executable; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
	CLI::App app{"Winner-take-all multi-head training for synthetic motion deblurring"};
	app.require_subcommand(1);

	// gen-data
	auto* gen = app.add_subcommand("gen-data", "Generate a synthetic blurry/sharp dataset");
	std::size_t gen_n = 2000, gen_size = 48;
	double gen_jitter = 0.75;
	std::uint64_t gen_seed = 0;
	std::string gen_out, gen_sheet;
	gen->add_option("--n", gen_n, "number of pairs")->check(CLI::PositiveNumber)->capture_default_str();
	gen->add_option("--size", gen_size, "image height and width")->check(CLI::Range(11, 4096))->capture_default_str();
	gen->add_option("--jitter-std", gen_jitter, "label jitter std in pixels")
		->check(CLI::NonNegativeNumber)
		->capture_default_str();
	gen->add_option("--seed", gen_seed)->capture_default_str();
	gen->add_option("--out", gen_out, "dataset file")->required();
	gen->add_option("--sheet", gen_sheet, "contact sheet PPM (default: <out>.sheet.ppm)");

	// train
	auto* tr = app.add_subcommand("train", "Train a multi-head network");
	std::string tr_config, tr_resume;
	std::vector<std::string> tr_set;
	std::size_t tr_heads = 0;
	std::uint64_t tr_seed = 0, tr_steps = 0, tr_stop = 0;
	bool tr_combine = false, tr_quiet = false;
	std::string tr_out, tr_data, tr_eval;
	tr->add_option("--config", tr_config, "key = value config file");
	auto* o_heads = tr->add_option("--heads", tr_heads, "base heads K")->check(CLI::PositiveNumber);
	auto* o_combine = tr->add_flag("--combine,!--no-combine", tr_combine, "pairwise head combination");
	auto* o_seed = tr->add_option("--seed", tr_seed);
	auto* o_steps = tr->add_option("--steps", tr_steps)->check(CLI::PositiveNumber);
	auto* o_out = tr->add_option("--out-dir", tr_out, "run directory (default: $WTA_RUN_ROOT/k<K>[c]_s<seed>)");
	auto* o_data = tr->add_option("--data", tr_data, "training dataset");
	auto* o_eval = tr->add_option("--eval-data", tr_eval, "evaluation dataset");
	tr->add_option("--set", tr_set, "extra key=value overrides");
	tr->add_option("--resume", tr_resume, "checkpoint to resume from, or 'auto'");
	tr->add_option("--stop-after", tr_stop, "stop once this many steps are done");
	tr->add_flag("--quiet", tr_quiet);

	// eval
	auto* ev = app.add_subcommand("eval", "Evaluate checkpoints");
	std::string ev_ck, ev_data, ev_report, ev_heat, ev_matrix, ev_sweep, ev_seeds = "0", ev_root;
	std::size_t ev_count = 4, ev_limit = 0;
	bool ev_no_ssim = false, ev_combine = false;
	ev->add_option("--checkpoint", ev_ck);
	ev->add_option("--data", ev_data)->required();
	ev->add_option("--report", ev_report, "JSON report path (default: stdout)");
	ev->add_option("--heatmaps", ev_heat, "directory for heatmap PPMs");
	ev->add_option("--heatmap-count", ev_count)->capture_default_str();
	ev->add_option("--pair-matrix", ev_matrix, "TSV path for the pair PSNR matrix");
	ev->add_option("--limit", ev_limit, "evaluate only the first N images");
	ev->add_flag("--no-ssim", ev_no_ssim);
	ev->add_option("--sweep-heads", ev_sweep, "comma list of K; evaluates <runs-root>/k<K>[c]_s<seed>");
	ev->add_option("--sweep-seeds", ev_seeds, "comma list of seeds for --sweep-heads")->capture_default_str();
	ev->add_flag("--combine", ev_combine, "sweep combination runs");
	ev->add_option("--runs-root", ev_root, "default: $WTA_RUN_ROOT or ./runs");

	// grad-check
	auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the network gradients");
	NetworkConfig gc_net;
	gc_net.heads = 2;
	gc_net.combine = true;
	gc_net.depth = 2;
	gc_net.width = 4;
	std::size_t gc_size = 16;
	std::uint64_t gc_seed = 0;
	std::string gc_loss = "charbonnier";
	GradCheckOptions gc_opts;
	gc->add_option("--heads", gc_net.heads)->check(CLI::PositiveNumber)->capture_default_str();
	gc->add_flag("--combine,!--no-combine", gc_net.combine)->capture_default_str();
	gc->add_option("--depth", gc_net.depth)->capture_default_str();
	gc->add_option("--width", gc_net.width)->check(CLI::PositiveNumber)->capture_default_str();
	gc->add_option("--size", gc_size)->check(CLI::PositiveNumber)->capture_default_str();
	gc->add_option("--seed", gc_seed)->capture_default_str();
	gc->add_option("--loss", gc_loss)->capture_default_str();
	gc->add_option("--tol", gc_opts.tolerance)->check(CLI::PositiveNumber)->capture_default_str();
	gc->add_option("--max-entries", gc_opts.max_entries, "probe at most N entries per parameter (0: all)");

	// kmeans-demo
	auto* km = app.add_subcommand("kmeans-demo", "Constant-generator WTA against Lloyd's k-means");
	KMeansDemoOptions km_opts;
	km->add_option("--blobs", km_opts.blobs)->check(CLI::Range(1, 100))->capture_default_str();
	km->add_option("--points", km_opts.points)->check(CLI::PositiveNumber)->capture_default_str();
	km->add_option("--sigma", km_opts.sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
	km->add_option("--seeds", km_opts.seeds)->check(CLI::PositiveNumber)->capture_default_str();
	km->add_option("--steps", km_opts.equivalence.steps)->check(CLI::PositiveNumber)->capture_default_str();
	km->add_option("--lr", km_opts.equivalence.lr)->check(CLI::PositiveNumber)->capture_default_str();
	km->add_option("--max-ratio", km_opts.max_ratio)->capture_default_str();

	try {
		app.parse(argc, argv);
	} catch (const CLI::CallForHelp& e) {
		out << app.help();
		return kOk;
	} catch (const CLI::ParseError& e) {
		err << "error: " << e.what() << '\n';
		if (app.get_subcommands().empty())
			err << app.help();
		return kUsage;
	}

	try {
		if (*gen) {
			DatasetConfig dc;
			dc.seed = gen_seed;
			dc.synth.height = gen_size;
			dc.synth.width = gen_size;
			dc.synth.jitter_std = gen_jitter;
			dc.synth.validate();
			const Dataset d = gen_dataset(gen_n, dc);
			write_dataset(gen_out, d);
			std::vector<Tensor> tiles;
			for (std::size_t i = 0; i < std::min<std::size_t>(8, d.size()); ++i) {
				tiles.push_back(d.input(i));
				tiles.push_back(d.label(i));
			}
			write_ppm(gen_sheet.empty() ? gen_out + ".sheet.ppm" : gen_sheet, tile_images(tiles, 4));
			nlohmann::ordered_json meta;
			meta["pairs"] = d.size();
			meta["shape"] = d.image_shape();
			meta["seed"] = gen_seed;
			meta["jitter_std"] = gen_jitter;
			meta["deterministic_labels"] = gen_jitter == 0.0;
			std::ofstream(gen_out + ".json", std::ios::trunc) << meta.dump(2) << '\n';
			out << "wrote " << d.size() << " pairs of " << shape_str(d.image_shape()) << " to " << gen_out << '\n';
			return kOk;
		}

		if (*tr) {
			RunConfig cfg;
			if (!tr_config.empty())
				for (const auto& [k, v] : read_config_file(tr_config))
					set_key(cfg, k, v);
			if (*o_heads)
				cfg.train.heads = tr_heads;
			if (*o_combine)
				cfg.train.combine = tr_combine;
			if (*o_seed)
				cfg.train.seed = tr_seed;
			if (*o_steps)
				cfg.train.steps = tr_steps;
			if (*o_out)
				cfg.out_dir = tr_out;
			if (*o_data)
				cfg.train_data = tr_data;
			if (*o_eval)
				cfg.eval_data = tr_eval;
			for (const auto& s : tr_set) {
				const auto eq = s.find('=');
				if (eq == std::string::npos)
					throw ConfigError("--set expects key=value, got '" + s + "'");
				set_key(cfg, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
			}
			TrainSession session;
			if (!tr_resume.empty())
				session.resume = tr_resume;
			session.stop_after = tr_stop;
			session.quiet = tr_quiet;
			return run_training(cfg, session, out);
		}

		if (*ev) {
			const Dataset d = load_dataset(ev_data, "evaluation");
			EvalOptions opts;
			opts.limit = ev_limit;
			opts.with_ssim = !ev_no_ssim;
			if (!ev_sweep.empty()) {
				const fs::path root(ev_root.empty() ? run_root() : ev_root);
				nlohmann::ordered_json rows = nlohmann::ordered_json::array();
				out << "K\tseeds\tpsnr_overall\tpsnr_single_head\n";
				for (std::size_t k : parse_list(ev_sweep)) {
					std::vector<double> overall, single;
					for (std::size_t s : parse_list(ev_seeds)) {
						const fs::path p = root /
										   ("k" + std::to_string(k) + (ev_combine ? "c" : "") + "_s" + std::to_string(s)) /
										   "checkpoints" / "final.wtac";
						const Checkpoint ck = load_checkpoint(p.string());
						check_eval_compatible(ck, d);
						const EvalReport r = evaluate(ck.net, d, opts);
						overall.push_back(r.psnr_overall);
						single.push_back(r.psnr_single_head);
					}
					out << k << '\t' << overall.size() << '\t' << median(overall) << '\t' << median(single) << '\n';
					nlohmann::ordered_json row;
					row["heads"] = k;
					row["combine"] = ev_combine;
					row["psnr_overall"] = overall;
					row["psnr_single_head"] = single;
					row["median_overall"] = median(overall);
					row["median_single_head"] = median(single);
					rows.push_back(std::move(row));
				}
				if (!ev_report.empty())
					std::ofstream(ev_report, std::ios::trunc) << rows.dump(2) << '\n';
				return kOk;
			}
			if (ev_ck.empty())
				throw ConfigError("eval needs --checkpoint or --sweep-heads");
			const Checkpoint ck = load_checkpoint(ev_ck);
			check_eval_compatible(ck, d);
			const EvalReport r = evaluate(ck.net, d, opts);
			const std::string text = to_json(r).dump(2) + "\n";
			if (ev_report.empty())
				out << text;
			else {
				if (fs::path(ev_report).has_parent_path())
					fs::create_directories(fs::path(ev_report).parent_path());
				std::ofstream(ev_report, std::ios::trunc) << text;
				out << "psnr_overall " << r.psnr_overall << " psnr_single_head " << r.psnr_single_head << '\n';
			}
			if (!ev_matrix.empty()) {
				if (!ck.net.config().combine)
					throw ConfigError("--pair-matrix needs a combination checkpoint");
				std::ofstream os(ev_matrix, std::ios::trunc);
				write_pair_matrix(os, r);
			}
			if (!ev_heat.empty())
				write_heatmaps(ck.net, d, ev_count, ev_heat);
			return kOk;
		}

		if (*gc) {
			const GradCheckReport r = network_grad_check(gc_net, gc_size, gc_seed, parse_loss_kind(gc_loss), gc_opts);
			out << r;
			return r.passed() ? kOk : kCheckFailed;
		}

		if (*km) {
			const KMeansDemoResult r = kmeans_demo(km_opts);
			for (std::size_t s = 0; s < r.runs.size(); ++s) {
				const auto& e = r.runs[s];
				out << "seed " << s << " wta_sse " << e.wta_sse << " lloyd_sse " << e.lloyd_sse << " ratio " << e.ratio
					<< " lloyd_iterations " << e.lloyd_iterations << '\n';
			}
			out << "median_ratio " << r.median_ratio << (r.passed ? " <= " : " > ") << km_opts.max_ratio << '\n';
			return r.passed ? kOk : kCheckFailed;
		}
	} catch (const DivergenceError& e) {
		err << "diverged: " << e.what() << '\n';
		return kDiverged;
	} catch (const ConfigError& e) {
		err << "config error: " << e.what() << '\n';
		return kUsage;
	} catch (const IoError& e) {
		err << "i/o error: " << e.what() << '\n';
		return kUsage;
	} catch (const GradCheckError& e) {
		err << "gradient check failed: " << e.what() << '\n';
		return kCheckFailed;
	} catch (const Error& e) {
		err << "error: " << e.what() << '\n';
		return kCheckFailed;
	} catch (const fs::filesystem_error& e) {
		err << "filesystem error: " << e.what() << '\n';
		return kUsage;
	}
	return kUsage;
}

} // namespace wta::cli

#endif // WTA_CLI_HPP_
