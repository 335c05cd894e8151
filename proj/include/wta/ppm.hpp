#ifndef WTA_PPM_HPP_
#define WTA_PPM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "wta/error.hpp"
#include "wta/tensor.hpp"

namespace wta {

inline std::uint8_t to_byte(double v) {
	return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/**
 * Writes a binary P6 image. Accepts [3,H,W] colour, or [1,H,W] / [H,W]
 * grey which is replicated to three channels. Values are display-space in
 * [0,1]; linear images should go through apply_crf first.
 */
inline void write_ppm(const std::string& path, const Tensor& image) {
	std::size_t c, h, w;
	if (image.rank() == 2) {
		c = 1, h = image.dim(0), w = image.dim(1);
	} else if (image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3)) {
		c = image.dim(0), h = image.dim(1), w = image.dim(2);
	} else {
		throw DimensionError("write_ppm: unsupported shape " + shape_str(image.shape()));
	}
	std::ofstream os(path, std::ios::binary | std::ios::trunc);
	if (!os)
		throw IoError(path, "cannot open for writing");
	const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
	os.write(header.data(), static_cast<std::streamsize>(header.size()));
	std::vector<std::uint8_t> row(w * 3);
	const std::size_t plane = h * w;
	for (std::size_t r = 0; r < h; ++r) {
		for (std::size_t q = 0; q < w; ++q)
			for (std::size_t k = 0; k < 3; ++k)
				row[q * 3 + k] = to_byte(image[(c == 1 ? 0 : k) * plane + r * w + q]);
		os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
	}
	if (!os)
		throw IoError(path, "write failed");
}

/// Lays [C,H,W] tiles out row-major in a grid with a one-pixel white gutter.
inline Tensor tile_images(std::span<const Tensor> tiles, std::size_t columns) {
	if (tiles.empty() || columns == 0)
		throw DimensionError("tile_images: nothing to tile");
	const Shape& s = tiles[0].shape();
	const std::size_t c = s.at(0), h = s.at(1), w = s.at(2);
	const std::size_t rows = (tiles.size() + columns - 1) / columns;
	const std::size_t gh = rows * (h + 1) + 1, gw = columns * (w + 1) + 1;
	Tensor sheet({c, gh, gw}, 1.0);
	for (std::size_t t = 0; t < tiles.size(); ++t) {
		require_same_shape(tiles[t], tiles[0], "tile_images");
		const std::size_t r0 = (t / columns) * (h + 1) + 1, q0 = (t % columns) * (w + 1) + 1;
		for (std::size_t k = 0; k < c; ++k)
			for (std::size_t r = 0; r < h; ++r)
				for (std::size_t q = 0; q < w; ++q)
					sheet.at(k, r0 + r, q0 + q) = tiles[t].at(k, r, q);
	}
	return sheet;
}

} // namespace wta

#endif // WTA_PPM_HPP_
