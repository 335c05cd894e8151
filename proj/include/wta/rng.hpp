#ifndef WTA_RNG_HPP_
#define WTA_RNG_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace wta {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
	z += 0x9e3779b97f4a7c15ULL;
	z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
	z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
	return z ^ (z >> 31);
}

} // namespace detail

/**
 * Counter-based generator: the i-th output is a pure function of (key, i).
 * The full state is two integers, so streams are reproducible on any
 * platform and can be saved or forked without touching a global.
 */
class Rng {
public:
	explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
		: key_(detail::splitmix64(seed ^ 0x5851f42d4c957f2dULL)), counter_(counter) {}

	static Rng from_state(std::uint64_t key, std::uint64_t counter) noexcept {
		Rng r;
		r.key_ = key;
		r.counter_ = counter;
		return r;
	}

	std::uint64_t next() noexcept {
		const std::uint64_t c = counter_++;
		return detail::splitmix64(key_ ^ detail::splitmix64(c * 0xd1342543de82ef95ULL + 1));
	}

	/// Independent child stream; does not advance this generator.
	Rng derive(std::uint64_t stream) const noexcept {
		Rng r;
		r.key_ = detail::splitmix64(key_ + detail::splitmix64(stream ^ 0xa0761d6478bd642fULL));
		r.counter_ = 0;
		return r;
	}

	/// Uniform in [0, 1) with 53 random bits.
	double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

	double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

	/// Unbiased integer in [0, n).
	std::uint64_t uniform_int(std::uint64_t n) noexcept {
		if (n <= 1)
			return 0;
		const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
		std::uint64_t v;
		do
			v = next();
		while (v >= limit);
		return v % n;
	}

	/// Standard normal by Box-Muller; consumes two outputs per call.
	double normal() noexcept {
		const double u1 = 1.0 - uniform();
		const double u2 = uniform();
		return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
	}

	double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

	/// Normal truncated to |z| <= bound standard deviations, by rejection.
	double truncated_normal(double stddev, double bound) noexcept {
		if (stddev == 0.0)
			return 0.0;
		double z;
		do
			z = normal();
		while (std::abs(z) > bound);
		return stddev * z;
	}

	template <typename T>
	void shuffle(std::span<T> items) noexcept {
		for (std::size_t i = items.size(); i > 1; --i)
			std::swap(items[i - 1], items[uniform_int(i)]);
	}

	std::uint64_t key() const noexcept { return key_; }
	std::uint64_t counter() const noexcept { return counter_; }

	friend bool operator==(const Rng&, const Rng&) = default;

private:
	std::uint64_t key_ = 0;
	std::uint64_t counter_ = 0;
};

} // namespace wta

#endif // WTA_RNG_HPP_
