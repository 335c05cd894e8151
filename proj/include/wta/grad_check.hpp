#ifndef WTA_GRAD_CHECK_HPP_
#define WTA_GRAD_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "wta/error.hpp"
#include "wta/rng.hpp"
#include "wta/tensor.hpp"

namespace wta {

struct GradCheckOptions {
	double epsilon = 1e-5;
	double tolerance = 1e-4;
	/// Entries probed per parameter; 0 probes every entry.
	std::size_t max_entries = 0;
	std::uint64_t seed = 0;
};

struct GradCheckEntry {
	std::string id;
	std::size_t checked = 0;
	double max_error = 0.0;
	std::size_t worst_index = 0;
	double analytic = 0.0;
	double numeric = 0.0;
};

struct GradCheckReport {
	std::vector<GradCheckEntry> entries;
	double tolerance = 0.0;

	double max_error() const {
		double m = 0.0;
		for (const auto& e : entries)
			m = std::max(m, e.max_error);
		return m;
	}
	bool passed() const { return max_error() < tolerance; }
};

inline std::ostream& operator<<(std::ostream& os, const GradCheckReport& report) {
	for (const auto& e : report.entries)
		os << (e.max_error < report.tolerance ? "ok   " : "FAIL ") << e.id << " checked=" << e.checked
		   << " max_rel_err=" << e.max_error << " at[" << e.worst_index << "] analytic=" << e.analytic
		   << " numeric=" << e.numeric << '\n';
	return os << (report.passed() ? "PASS" : "FAIL") << " max_rel_err=" << report.max_error()
			  << " tolerance=" << report.tolerance << '\n';
}

/**
 * Compares analytic gradients against central finite differences.
 *
 * `loss` evaluates the scalar objective at the current parameter values;
 * `gradients` must leave d loss / d value in every Parameter::grad.
 * Error per entry is |analytic - numeric| / max(1, |numeric|).
 */
inline GradCheckReport grad_check(const std::function<double()>& loss, const std::function<void()>& gradients,
								  std::span<Parameter* const> params, const GradCheckOptions& opts = {}) {
	gradients();
	GradCheckReport report;
	report.tolerance = opts.tolerance;
	Rng rng(opts.seed);
	for (Parameter* p : params) {
		GradCheckEntry entry;
		entry.id = p->id;
		const std::size_t n = p->value.numel();
		std::vector<std::size_t> indices(n);
		for (std::size_t i = 0; i < n; ++i)
			indices[i] = i;
		if (opts.max_entries && opts.max_entries < n) {
			rng.shuffle(std::span<std::size_t>(indices));
			indices.resize(opts.max_entries);
			std::sort(indices.begin(), indices.end());
		}
		for (std::size_t i : indices) {
			double& v = p->value[i];
			const double saved = v;
			v = saved + opts.epsilon;
			const double up = loss();
			v = saved - opts.epsilon;
			const double down = loss();
			v = saved;
			if (!std::isfinite(up) || !std::isfinite(down))
				throw GradCheckError("non-finite loss while perturbing parameter " + p->id + "[" +
									 std::to_string(i) + "]");
			const double numeric = (up - down) / (2.0 * opts.epsilon);
			const double analytic = p->grad[i];
			const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
			if (err >= entry.max_error) {
				entry.max_error = err;
				entry.worst_index = i;
				entry.analytic = analytic;
				entry.numeric = numeric;
			}
			++entry.checked;
		}
		report.entries.push_back(std::move(entry));
	}
	return report;
}

} // namespace wta

#endif // WTA_GRAD_CHECK_HPP_
