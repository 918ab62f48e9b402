#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmpipe {

// Error taxonomy shared by all pipeline modules. The CLI maps these onto
// distinct exit codes: validation 2, I/O 3, state mismatch 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input values, malformed records, violated preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Filesystem failures: missing files, short reads, failed writes.
class IoError : public Error {
public:
    using Error::Error;
};

// A persisted state refers to a plan (or file version) other than the live one.
class StateMismatchError : public Error {
public:
    using Error::Error;
};

// No patch-grid rectangle satisfies the pixel window for this image without
// distorting its aspect ratio past the documented limit.
class ResizeInfeasibleError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A sample that cannot fit into any pack under the active budgets.
class OversizedSampleError : public ValidationError {
public:
    OversizedSampleError(std::string dataset_id, std::uint64_t sample_index,
                         std::uint64_t total_tokens, const std::string& what)
        : ValidationError(what),
          dataset_id(std::move(dataset_id)),
          sample_index(sample_index),
          total_tokens(total_tokens) {}

    std::string dataset_id;
    std::uint64_t sample_index = 0;
    std::uint64_t total_tokens = 0;
};

}  // namespace mmpipe
