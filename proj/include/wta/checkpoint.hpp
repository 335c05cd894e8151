#ifndef WTA_CHECKPOINT_HPP_
#define WTA_CHECKPOINT_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "wta/binary_io.hpp"
#include "wta/error.hpp"
#include "wta/model.hpp"
#include "wta/optimizer.hpp"
#include "wta/rng.hpp"

namespace wta {

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

struct OptimizerSnapshot {
	std::uint64_t steps_taken = 0;
	std::vector<Tensor> first;
	std::vector<Tensor> second;
};

struct Checkpoint {
	Network net;
	std::uint64_t step = 0;
	std::uint64_t seed = 0;
	Rng sampler_rng;
	std::array<std::uint64_t, 2> image_hw{0, 0}; // training image size; 0 if unknown
	std::optional<OptimizerSnapshot> optimizer;

	/// Moves the saved moments into `opt`; no-op if none were saved.
	void restore(Optimizer& opt) const {
		if (!optimizer)
			return;
		opt.set_steps_taken(optimizer->steps_taken);
		opt.first_moments() = optimizer->first;
		opt.second_moments() = optimizer->second;
	}
};

/**
 * "WTAC" | version u16 | reserved u16 | K, C, D, width u64 | combine u8 |
 * step, seed u64 | sampler rng key, counter u64 | image H, W u64 | n u32 | n x (name, WTAT) |
 * has_optimizer u8 [ steps u64 | m u32 | m x (first WTAT, second WTAT) ].
 *
 * Written to a sibling temporary and renamed, so a crash never leaves a torn file.
 */
inline void save_checkpoint(const std::string& path, const Network& net, std::uint64_t step, std::uint64_t seed,
							const Optimizer* opt = nullptr, Rng sampler_rng = Rng(),
							std::array<std::uint64_t, 2> image_hw = {0, 0}) {
	const std::string tmp = path + ".tmp";
	{
		std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
		if (!os)
			throw IoError(tmp, "cannot open for writing");
		BinaryWriter w(os, tmp);
		const NetworkConfig& c = net.config();
		w.magic("WTAC");
		w.u16(kCheckpointFormatVersion);
		w.u16(0);
		w.u64(c.heads);
		w.u64(c.channels);
		w.u64(c.depth);
		w.u64(c.width);
		w.u8(c.combine ? 1 : 0);
		w.u64(step);
		w.u64(seed);
		w.u64(sampler_rng.key());
		w.u64(sampler_rng.counter());
		w.u64(image_hw[0]);
		w.u64(image_hw[1]);
		w.u32(static_cast<std::uint32_t>(net.parameters().size()));
		for (const Parameter& p : net.parameters()) {
			w.string(p.id);
			write_tensor(w, p.value);
		}
		const bool has_opt = opt && !opt->first_moments().empty();
		w.u8(opt ? 1 : 0);
		if (opt) {
			w.u64(opt->steps_taken());
			const auto n = has_opt ? opt->first_moments().size() : 0;
			w.u32(static_cast<std::uint32_t>(n));
			for (std::size_t k = 0; k < n; ++k) {
				write_tensor(w, opt->first_moments()[k]);
				write_tensor(w, opt->second_moments()[k]);
			}
		}
		os.flush();
		if (!os)
			throw IoError(tmp, "flush failed", w.offset());
	}
	std::error_code ec;
	std::filesystem::rename(tmp, path, ec);
	if (ec)
		throw IoError(path, "rename from temporary failed: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) {
	std::ifstream is(path, std::ios::binary);
	if (!is)
		throw IoError(path, "cannot open for reading");
	BinaryReader r(is, path);
	r.expect_magic("WTAC");
	const std::uint64_t vat = r.offset();
	if (const auto v = r.u16(); v != kCheckpointFormatVersion)
		r.fail("unsupported checkpoint version " + std::to_string(v), vat);
	r.u16();
	NetworkConfig cfg;
	const std::uint64_t cfg_at = r.offset();
	cfg.heads = r.u64();
	cfg.channels = r.u64();
	cfg.depth = r.u64();
	cfg.width = r.u64();
	cfg.combine = r.u8() != 0;
	if (cfg.heads < 1 || cfg.heads > 4096 || cfg.channels < 1 || cfg.channels > 64 || cfg.depth > 1024 ||
		cfg.width < 1 || cfg.width > 4096)
		r.fail("implausible network configuration", cfg_at);
	Checkpoint ck;
	ck.net = Network(cfg);
	ck.step = r.u64();
	ck.seed = r.u64();
	const std::uint64_t key = r.u64();
	const std::uint64_t counter = r.u64();
	ck.sampler_rng = Rng::from_state(key, counter);
	ck.image_hw[0] = r.u64();
	ck.image_hw[1] = r.u64();
	const std::uint64_t count_at = r.offset();
	const std::uint32_t count = r.u32();
	if (count != ck.net.parameters().size())
		r.fail("expected " + std::to_string(ck.net.parameters().size()) + " parameters, file has " +
				   std::to_string(count),
			   count_at);
	for (Parameter& p : ck.net.parameters()) {
		const std::uint64_t at = r.offset();
		const std::string id = r.string();
		if (id != p.id)
			r.fail("expected parameter '" + p.id + "', found '" + id + "'", at);
		const std::uint64_t tat = r.offset();
		Tensor v = read_tensor(r);
		if (v.shape() != p.value.shape())
			r.fail("parameter " + id + " has shape " + shape_str(v.shape()) + ", expected " +
					   shape_str(p.value.shape()),
				   tat);
		p.value = std::move(v);
	}
	if (r.u8()) {
		OptimizerSnapshot snap;
		snap.steps_taken = r.u64();
		const std::uint64_t mat = r.offset();
		const std::uint32_t m = r.u32();
		if (m != 0 && m != count)
			r.fail("optimizer state covers " + std::to_string(m) + " of " + std::to_string(count) + " parameters",
				   mat);
		for (std::uint32_t k = 0; k < m; ++k) {
			snap.first.push_back(read_tensor(r));
			snap.second.push_back(read_tensor(r));
			if (snap.first.back().shape() != ck.net.parameters()[k].value.shape() ||
				snap.second.back().shape() != ck.net.parameters()[k].value.shape())
				r.fail("optimizer moment shape mismatch for " + ck.net.parameters()[k].id);
		}
		ck.optimizer = std::move(snap);
	}
	char extra;
	if (is.read(&extra, 1); is.gcount() != 0)
		r.fail("trailing bytes after checkpoint");
	ck.net.zero_grads();
	return ck;
}

} // namespace wta

#endif // WTA_CHECKPOINT_HPP_
