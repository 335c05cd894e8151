#ifndef WTA_BLUR_SYNTH_HPP_
#define WTA_BLUR_SYNTH_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "wta/error.hpp"
#include "wta/rng.hpp"
#include "wta/tensor.hpp"

namespace wta {

struct SynthConfig {
	std::size_t channels = 3;
	std::size_t height = 48;
	std::size_t width = 48;
	std::size_t frames_min = 7;
	std::size_t frames_max = 13;
	double jitter_std = 0.75;   // label offset, output pixels
	double jitter_bound = 2.0;  // truncation, in standard deviations
	double max_speed = 0.8;     // pixels per frame
	double accel_std = 0.04;    // pixels per frame^2
	double frame_jitter_std = 0.1;
	std::size_t supersample = 4;
	std::size_t margin = 12;    // output pixels of canvas around the view
	std::size_t min_shapes = 4;
	std::size_t max_shapes = 10;
	double gamma = 2.2;

	void validate() const {
		if (channels == 0 || height == 0 || width == 0)
			throw ConfigError("image dimensions must be positive");
		if (frames_min < 1 || frames_min > frames_max)
			throw ConfigError("frame range must satisfy 1 <= min <= max");
		if (jitter_std < 0.0)
			throw ConfigError("jitter_std must be >= 0");
		if (supersample == 0)
			throw ConfigError("supersample must be positive");
		if (min_shapes > max_shapes)
			throw ConfigError("shape count range is empty");
	}
};

struct Offset {
	double dx = 0.0;
	double dy = 0.0;

	friend bool operator==(const Offset&, const Offset&) = default;
};

/// Supersampled linear-light canvas with `margin` pixels of slack on every side.
struct Scene {
	std::size_t height = 0; // output pixels
	std::size_t width = 0;
	std::size_t supersample = 4;
	std::size_t margin = 0;
	Tensor canvas;           // [C, (H+2M)S, (W+2M)S]

	static Scene blank(std::size_t channels, std::size_t height, std::size_t width, std::size_t supersample,
					   std::size_t margin, double value = 0.0) {
		Scene s;
		s.height = height;
		s.width = width;
		s.supersample = supersample;
		s.margin = margin;
		s.canvas = Tensor({channels, (height + 2 * margin) * supersample, (width + 2 * margin) * supersample}, value);
		return s;
	}

	std::size_t channels() const { return canvas.dim(0); }
	std::size_t canvas_h() const { return canvas.dim(1); }
	std::size_t canvas_w() const { return canvas.dim(2); }
};

/// F frame offsets in output-pixel units; the label frame is the middle one.
struct Trajectory {
	std::vector<Offset> offsets;

	std::size_t frames() const noexcept { return offsets.size(); }
	std::size_t middle() const noexcept { return offsets.size() / 2; }

	static Trajectory constant(std::size_t frames, Offset at = {}) { return {std::vector<Offset>(frames, at)}; }
};

struct SampleMeta {
	std::size_t frames = 0;
	std::size_t middle = 0;
	Offset label_jitter;
	Trajectory trajectory;
};

/// Blurry input `x` and label `y`, both [C,H,W] in display space.
struct SamplePair {
	Tensor x;
	Tensor y;
	SampleMeta meta;
};

inline double quantize(double v, std::size_t supersample) {
	const double s = static_cast<double>(supersample);
	return std::round(v * s) / s;
}

inline Offset quantize(Offset o, std::size_t supersample) {
	return {quantize(o.dx, supersample), quantize(o.dy, supersample)};
}

/**
 * Random scene: a two-colour linear gradient with random rectangles and
 * ellipses on top. Edges are hard on the supersampled grid; the box filter in
 * render_frame provides the anti-aliasing.
 */
inline Scene make_scene(Rng& rng, const SynthConfig& cfg) {
	cfg.validate();
	Scene scene = Scene::blank(cfg.channels, cfg.height, cfg.width, cfg.supersample, cfg.margin);
	const std::size_t ch = scene.canvas_h(), cw = scene.canvas_w(), nc = cfg.channels;
	const double s = static_cast<double>(cfg.supersample);

	std::vector<double> c0(nc), c1(nc);
	for (std::size_t c = 0; c < nc; ++c) {
		c0[c] = rng.uniform();
		c1[c] = rng.uniform();
	}
	const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
	const double ux = std::cos(theta), uy = std::sin(theta);
	const double span_len = std::abs(ux) * static_cast<double>(cw) + std::abs(uy) * static_cast<double>(ch);
	const double origin = std::min(0.0, ux * static_cast<double>(cw)) + std::min(0.0, uy * static_cast<double>(ch));
	for (std::size_t r = 0; r < ch; ++r)
		for (std::size_t q = 0; q < cw; ++q) {
			const double t = ((static_cast<double>(q) + 0.5) * ux + (static_cast<double>(r) + 0.5) * uy - origin) /
							 span_len;
			for (std::size_t c = 0; c < nc; ++c)
				scene.canvas.at(c, r, q) = c0[c] + (c1[c] - c0[c]) * std::clamp(t, 0.0, 1.0);
		}

	const std::size_t shapes = cfg.min_shapes + rng.uniform_int(cfg.max_shapes - cfg.min_shapes + 1);
	const double full_h = static_cast<double>(cfg.height + 2 * cfg.margin);
	const double full_w = static_cast<double>(cfg.width + 2 * cfg.margin);
	std::vector<double> color(nc);
	for (std::size_t k = 0; k < shapes; ++k) {
		const bool ellipse = rng.uniform() < 0.5;
		const double cx = rng.uniform(0.0, full_w), cy = rng.uniform(0.0, full_h);
		const double ax = rng.uniform(2.0, 10.0), ay = rng.uniform(2.0, 10.0);
		for (auto& v : color)
			v = rng.uniform();
		const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor((cy - ay) * s)));
		const auto r1 = static_cast<std::size_t>(std::min(static_cast<double>(ch), std::ceil((cy + ay) * s)));
		const auto q0 = static_cast<std::size_t>(std::max(0.0, std::floor((cx - ax) * s)));
		const auto q1 = static_cast<std::size_t>(std::min(static_cast<double>(cw), std::ceil((cx + ax) * s)));
		for (std::size_t r = r0; r < r1; ++r)
			for (std::size_t q = q0; q < q1; ++q) {
				const double px = (static_cast<double>(q) + 0.5) / s, py = (static_cast<double>(r) + 0.5) / s;
				const double nx = (px - cx) / ax, ny = (py - cy) / ay;
				const bool inside = ellipse ? nx * nx + ny * ny <= 1.0 : std::abs(nx) <= 1.0 && std::abs(ny) <= 1.0;
				if (inside)
					for (std::size_t c = 0; c < nc; ++c)
						scene.canvas.at(c, r, q) = color[c];
			}
	}
	return scene;
}

/**
 * View of the scene translated by `offset` (content moves by +offset), box
 * filtered down to output resolution. Offsets snap to 1/supersample pixels.
 */
inline Tensor render_frame(const Scene& scene, Offset offset) {
	const auto s = static_cast<std::ptrdiff_t>(scene.supersample);
	const auto qx = static_cast<std::ptrdiff_t>(std::lround(offset.dx * static_cast<double>(s)));
	const auto qy = static_cast<std::ptrdiff_t>(std::lround(offset.dy * static_cast<double>(s)));
	const auto limit = static_cast<std::ptrdiff_t>(scene.margin) * s;
	if (std::abs(qx) > limit || std::abs(qy) > limit)
		throw GenerationError("frame offset (" + std::to_string(offset.dx) + ", " + std::to_string(offset.dy) +
							  ") exceeds the canvas margin of " + std::to_string(scene.margin) + " pixels");
	const std::size_t nc = scene.channels();
	Tensor frame({nc, scene.height, scene.width});
	const double inv = 1.0 / static_cast<double>(s * s);
	for (std::size_t c = 0; c < nc; ++c)
		for (std::size_t r = 0; r < scene.height; ++r)
			for (std::size_t q = 0; q < scene.width; ++q) {
				const std::ptrdiff_t br = limit + static_cast<std::ptrdiff_t>(r) * s - qy;
				const std::ptrdiff_t bq = limit + static_cast<std::ptrdiff_t>(q) * s - qx;
				double acc = 0.0;
				for (std::ptrdiff_t i = 0; i < s; ++i)
					for (std::ptrdiff_t j = 0; j < s; ++j)
						acc += scene.canvas.at(c, static_cast<std::size_t>(br + i), static_cast<std::size_t>(bq + j));
				frame.at(c, r, q) = acc * inv;
			}
	return frame;
}

/// Mean of linear frames, computed relative to the first so identical frames average exactly.
inline Tensor integrate_frames(std::span<const Tensor> frames) {
	if (frames.empty())
		throw GenerationError("integrate_frames: no frames");
	const Tensor& first = frames[0];
	Tensor acc(first.shape());
	for (std::size_t f = 1; f < frames.size(); ++f) {
		require_same_shape(first, frames[f], "integrate_frames");
		for (std::size_t e = 0; e < acc.numel(); ++e)
			acc[e] += frames[f][e] - first[e];
	}
	const double inv = 1.0 / static_cast<double>(frames.size());
	for (std::size_t e = 0; e < acc.numel(); ++e)
		acc[e] = first[e] + acc[e] * inv;
	return acc;
}

/// Camera response: v^(1/gamma) on [0,1].
inline Tensor apply_crf(const Tensor& linear, double gamma = 2.2) {
	Tensor out(linear.shape());
	const double p = 1.0 / gamma;
	for (std::size_t e = 0; e < out.numel(); ++e)
		out[e] = std::pow(std::clamp(linear[e], 0.0, 1.0), p);
	return out;
}

inline Tensor inverse_crf(const Tensor& display, double gamma = 2.2) {
	Tensor out(display.shape());
	for (std::size_t e = 0; e < out.numel(); ++e)
		out[e] = std::pow(std::clamp(display[e], 0.0, 1.0), gamma);
	return out;
}

/// Random initial velocity plus constant acceleration plus per-frame shake.
inline Trajectory make_trajectory(Rng& rng, const SynthConfig& cfg) {
	cfg.validate();
	const std::size_t frames = cfg.frames_min + rng.uniform_int(cfg.frames_max - cfg.frames_min + 1);
	const double speed = rng.uniform(0.0, cfg.max_speed);
	const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
	const double vx = speed * std::cos(angle), vy = speed * std::sin(angle);
	const double ax = rng.truncated_normal(cfg.accel_std, 2.0), ay = rng.truncated_normal(cfg.accel_std, 2.0);
	Trajectory t;
	t.offsets.reserve(frames);
	const auto mid = static_cast<double>(frames / 2);
	for (std::size_t f = 0; f < frames; ++f) {
		const double dt = static_cast<double>(f) - mid;
		Offset o{vx * dt + 0.5 * ax * dt * dt + rng.truncated_normal(cfg.frame_jitter_std, 2.0),
				 vy * dt + 0.5 * ay * dt * dt + rng.truncated_normal(cfg.frame_jitter_std, 2.0)};
		t.offsets.push_back(quantize(o, cfg.supersample));
	}
	return t;
}

/**
 * x = CRF(mean of the trajectory frames); y = CRF(frame at the middle offset
 * plus a truncated Gaussian label jitter drawn from `jitter_rng`).
 */
inline SamplePair synth_pair(const Scene& scene, const Trajectory& trajectory, Rng& jitter_rng, double jitter_std,
							 const SynthConfig& cfg) {
	if (jitter_std < 0.0)
		throw ConfigError("jitter_std must be >= 0");
	if (trajectory.frames() == 0)
		throw GenerationError("empty trajectory");
	std::vector<Tensor> frames;
	frames.reserve(trajectory.frames());
	for (const Offset& o : trajectory.offsets)
		frames.push_back(render_frame(scene, o));
	SamplePair pair;
	pair.x = apply_crf(integrate_frames(frames), cfg.gamma);

	Offset jitter;
	if (jitter_std > 0.0) {
		jitter.dx = jitter_rng.truncated_normal(jitter_std, cfg.jitter_bound);
		jitter.dy = jitter_rng.truncated_normal(jitter_std, cfg.jitter_bound);
		jitter = quantize(jitter, scene.supersample);
	}
	const Offset mid = trajectory.offsets[trajectory.middle()];
	if (jitter == Offset{})
		pair.y = apply_crf(frames[trajectory.middle()], cfg.gamma);
	else
		pair.y = apply_crf(render_frame(scene, {mid.dx + jitter.dx, mid.dy + jitter.dy}), cfg.gamma);
	pair.meta = {trajectory.frames(), trajectory.middle(), jitter, trajectory};
	return pair;
}

inline SamplePair synth_pair(Rng& scene_rng, Rng& traj_rng, Rng& jitter_rng, const SynthConfig& cfg) {
	const Scene scene = make_scene(scene_rng, cfg);
	const Trajectory traj = make_trajectory(traj_rng, cfg);
	return synth_pair(scene, traj, jitter_rng, cfg.jitter_std, cfg);
}

/// Sample `index` of a dataset seeded with `seed`; independent of every other index.
inline SamplePair synth_indexed_pair(std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg) {
	const Rng sample = Rng(seed).derive(index);
	Rng scene_rng = sample.derive(0), traj_rng = sample.derive(1), jitter_rng = sample.derive(2);
	return synth_pair(scene_rng, traj_rng, jitter_rng, cfg);
}

} // namespace wta

#endif // WTA_BLUR_SYNTH_HPP_
