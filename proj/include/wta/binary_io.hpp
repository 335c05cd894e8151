#ifndef WTA_BINARY_IO_HPP_
#define WTA_BINARY_IO_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "wta/error.hpp"
#include "wta/tensor.hpp"

namespace wta {

// Little-endian primitives for the on-disk formats.
class BinaryWriter {
public:
	BinaryWriter(std::ostream& os, std::string path) : os_(os), path_(std::move(path)) {}

	void bytes(const void* p, std::size_t n) {
		os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
		if (!os_)
			throw IoError(path_, "write failed", offset_);
		offset_ += n;
	}

	void magic(std::string_view m) { bytes(m.data(), m.size()); }

	template <typename T>
		requires std::is_arithmetic_v<T>
	void put(T v) {
		std::array<unsigned char, sizeof(T)> buf;
		std::memcpy(buf.data(), &v, sizeof(T));
		if constexpr (std::endian::native == std::endian::big)
			std::reverse(buf.begin(), buf.end());
		bytes(buf.data(), buf.size());
	}

	void u8(std::uint8_t v) { put(v); }
	void u16(std::uint16_t v) { put(v); }
	void u32(std::uint32_t v) { put(v); }
	void u64(std::uint64_t v) { put(v); }
	void f64(double v) { put(v); }

	void string(const std::string& s) {
		u32(static_cast<std::uint32_t>(s.size()));
		bytes(s.data(), s.size());
	}

	std::uint64_t offset() const noexcept { return offset_; }
	const std::string& path() const noexcept { return path_; }

private:
	std::ostream& os_;
	std::string path_;
	std::uint64_t offset_ = 0;
};

class BinaryReader {
public:
	BinaryReader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

	void bytes(void* p, std::size_t n) {
		is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
		if (static_cast<std::size_t>(is_.gcount()) != n)
			throw IoError(path_, "unexpected end of file", offset_ + static_cast<std::uint64_t>(is_.gcount()));
		offset_ += n;
	}

	void expect_magic(std::string_view m) {
		std::string got(m.size(), '\0');
		const std::uint64_t at = offset_;
		bytes(got.data(), got.size());
		if (got != m)
			throw IoError(path_, "bad magic, expected \"" + std::string(m) + "\"", at);
	}

	template <typename T>
		requires std::is_arithmetic_v<T>
	T get() {
		std::array<unsigned char, sizeof(T)> buf;
		bytes(buf.data(), buf.size());
		if constexpr (std::endian::native == std::endian::big)
			std::reverse(buf.begin(), buf.end());
		T v;
		std::memcpy(&v, buf.data(), sizeof(T));
		return v;
	}

	std::uint8_t u8() { return get<std::uint8_t>(); }
	std::uint16_t u16() { return get<std::uint16_t>(); }
	std::uint32_t u32() { return get<std::uint32_t>(); }
	std::uint64_t u64() { return get<std::uint64_t>(); }
	double f64() { return get<double>(); }

	std::string string(std::size_t max_len = 1 << 16) {
		const std::uint64_t at = offset_;
		const std::uint32_t n = u32();
		if (n > max_len)
			throw IoError(path_, "string length " + std::to_string(n) + " too large", at);
		std::string s(n, '\0');
		bytes(s.data(), n);
		return s;
	}

	[[noreturn]] void fail(const std::string& what, std::uint64_t at) const { throw IoError(path_, what, at); }
	[[noreturn]] void fail(const std::string& what) const { throw IoError(path_, what, offset_); }

	std::uint64_t offset() const noexcept { return offset_; }
	const std::string& path() const noexcept { return path_; }

private:
	std::istream& is_;
	std::string path_;
	std::uint64_t offset_ = 0;
};

inline constexpr std::uint16_t kTensorFormatVersion = 1;

/// "WTAT" | version u16 | rank u16 | dims u64... | f64 payload, all little-endian.
inline void write_tensor(BinaryWriter& w, const Tensor& t) {
	w.magic("WTAT");
	w.u16(kTensorFormatVersion);
	w.u16(static_cast<std::uint16_t>(t.rank()));
	for (std::size_t d : t.shape())
		w.u64(d);
	if constexpr (std::endian::native == std::endian::little) {
		w.bytes(t.raw(), t.numel() * sizeof(double));
	} else {
		for (double v : t.data())
			w.f64(v);
	}
}

inline Tensor read_tensor(BinaryReader& r) {
	r.expect_magic("WTAT");
	const std::uint64_t version_at = r.offset();
	const std::uint16_t version = r.u16();
	if (version != kTensorFormatVersion)
		r.fail("unsupported tensor version " + std::to_string(version), version_at);
	const std::uint16_t rank = r.u16();
	Shape shape(rank);
	std::size_t count = 1;
	for (auto& d : shape) {
		const std::uint64_t at = r.offset();
		d = r.u64();
		if (d > (std::uint64_t{1} << 32) || (d && count > (std::uint64_t{1} << 34) / d))
			r.fail("implausible tensor dimension " + std::to_string(d), at);
		count *= d;
	}
	std::vector<double> data(count);
	if constexpr (std::endian::native == std::endian::little) {
		r.bytes(data.data(), count * sizeof(double));
	} else {
		for (auto& v : data)
			v = r.f64();
	}
	return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::string& path, const Tensor& t) {
	std::ofstream os(path, std::ios::binary | std::ios::trunc);
	if (!os)
		throw IoError(path, "cannot open for writing");
	BinaryWriter w(os, path);
	write_tensor(w, t);
}

inline Tensor load_tensor(const std::string& path) {
	std::ifstream is(path, std::ios::binary);
	if (!is)
		throw IoError(path, "cannot open for reading");
	BinaryReader r(is, path);
	return read_tensor(r);
}

} // namespace wta

#endif // WTA_BINARY_IO_HPP_
