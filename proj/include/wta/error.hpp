#ifndef WTA_ERROR_HPP_
#define WTA_ERROR_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wta {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
public:
	using Error::Error;
};

/// NaN or Inf produced where all values must stay finite.
class NumericError : public Error {
public:
	using Error::Error;
};

/// Invalid model, training or run configuration.
class ConfigError : public Error {
public:
	using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
public:
	DivergenceError(const std::string& what, std::uint64_t step)
		: Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
	std::uint64_t step() const noexcept { return step_; }

private:
	std::uint64_t step_;
};

/// Read/write failures on checkpoints, datasets and tensor files.
class IoError : public Error {
public:
	IoError(const std::string& path, const std::string& what, std::uint64_t offset = 0)
		: Error(path + ": " + what + " (byte offset " + std::to_string(offset) + ")"),
		  path_(path), offset_(offset) {}
	const std::string& path() const noexcept { return path_; }
	std::uint64_t offset() const noexcept { return offset_; }

private:
	std::string path_;
	std::uint64_t offset_;
};

class GenerationError : public Error {
public:
	using Error::Error;
};

class MetricError : public Error {
public:
	using Error::Error;
};

class GradCheckError : public Error {
public:
	using Error::Error;
};

} // namespace wta

#endif // WTA_ERROR_HPP_
