#ifndef WTA_DATASET_HPP_
#define WTA_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "wta/binary_io.hpp"
#include "wta/blur_synth.hpp"
#include "wta/error.hpp"

namespace wta {

inline constexpr std::uint16_t kDatasetFormatVersion = 1;

struct DatasetConfig {
	SynthConfig synth;
	std::uint64_t seed = 0;
};

struct DatasetHeader {
	std::uint64_t count = 0;
	std::uint64_t channels = 0, height = 0, width = 0;
	std::uint64_t seed = 0;
	double jitter_std = 0.0;
	std::uint64_t frames_min = 0, frames_max = 0;

	friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// In-memory dataset; trajectories are not persisted, only the meta block.
struct Dataset {
	DatasetHeader header;
	std::vector<SamplePair> samples;

	std::size_t size() const noexcept { return samples.size(); }
	const Tensor& input(std::size_t i) const { return samples[i].x; }
	const Tensor& label(std::size_t i) const { return samples[i].y; }
	Shape image_shape() const { return {header.channels, header.height, header.width}; }
};

inline Dataset gen_dataset(std::size_t n, const DatasetConfig& cfg) {
	if (n < 1)
		throw ConfigError("dataset needs at least one sample");
	cfg.synth.validate();
	Dataset d;
	d.header = {n, cfg.synth.channels, cfg.synth.height, cfg.synth.width, cfg.seed, cfg.synth.jitter_std,
				cfg.synth.frames_min, cfg.synth.frames_max};
	d.samples.reserve(n);
	for (std::size_t i = 0; i < n; ++i)
		d.samples.push_back(synth_indexed_pair(cfg.seed, i, cfg.synth));
	return d;
}

/**
 * "WTAD" | version u16 | reserved u16 | n, C, H, W, seed u64 | jitter_std f64 |
 * frames_min, frames_max u64, then per sample: F u64 | middle u64 |
 * jitter dx, dy f64 | x WTAT | y WTAT.
 */
inline void write_dataset(const std::string& path, const Dataset& d) {
	std::ofstream os(path, std::ios::binary | std::ios::trunc);
	if (!os)
		throw IoError(path, "cannot open for writing");
	BinaryWriter w(os, path);
	w.magic("WTAD");
	w.u16(kDatasetFormatVersion);
	w.u16(0);
	const DatasetHeader& h = d.header;
	w.u64(d.samples.size());
	w.u64(h.channels);
	w.u64(h.height);
	w.u64(h.width);
	w.u64(h.seed);
	w.f64(h.jitter_std);
	w.u64(h.frames_min);
	w.u64(h.frames_max);
	for (const SamplePair& s : d.samples) {
		w.u64(s.meta.frames);
		w.u64(s.meta.middle);
		w.f64(s.meta.label_jitter.dx);
		w.f64(s.meta.label_jitter.dy);
		write_tensor(w, s.x);
		write_tensor(w, s.y);
	}
	os.flush();
	if (!os)
		throw IoError(path, "flush failed", w.offset());
}

inline Dataset read_dataset(const std::string& path) {
	std::ifstream is(path, std::ios::binary);
	if (!is)
		throw IoError(path, "cannot open for reading");
	BinaryReader r(is, path);
	r.expect_magic("WTAD");
	const std::uint64_t vat = r.offset();
	if (const auto v = r.u16(); v != kDatasetFormatVersion)
		r.fail("unsupported dataset version " + std::to_string(v), vat);
	r.u16();
	Dataset d;
	DatasetHeader& h = d.header;
	const std::uint64_t count_at = r.offset();
	h.count = r.u64();
	h.channels = r.u64();
	h.height = r.u64();
	h.width = r.u64();
	h.seed = r.u64();
	h.jitter_std = r.f64();
	h.frames_min = r.u64();
	h.frames_max = r.u64();
	if (h.count == 0 || h.count > (std::uint64_t{1} << 32))
		r.fail("implausible sample count " + std::to_string(h.count), count_at);
	const Shape image{h.channels, h.height, h.width};
	d.samples.reserve(h.count);
	for (std::uint64_t i = 0; i < h.count; ++i) {
		SamplePair s;
		s.meta.frames = r.u64();
		s.meta.middle = r.u64();
		s.meta.label_jitter.dx = r.f64();
		s.meta.label_jitter.dy = r.f64();
		const std::uint64_t xat = r.offset();
		s.x = read_tensor(r);
		const std::uint64_t yat = r.offset();
		s.y = read_tensor(r);
		if (s.x.shape() != image)
			r.fail("sample " + std::to_string(i) + " input shape " + shape_str(s.x.shape()) + " != header " +
					   shape_str(image),
				   xat);
		if (s.y.shape() != image)
			r.fail("sample " + std::to_string(i) + " label shape " + shape_str(s.y.shape()) + " != header " +
					   shape_str(image),
				   yat);
		d.samples.push_back(std::move(s));
	}
	return d;
}

} // namespace wta

#endif // WTA_DATASET_HPP_
