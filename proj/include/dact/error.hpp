// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dact {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes (messages name both shapes).
struct DimensionError : Error {
    using Error::Error;
};

// Out-of-range row/class/token index.
struct IndexError : Error {
    using Error::Error;
};

// An operation received an input it cannot accept (e.g. non-scalar loss).
struct ContractError : Error {
    using Error::Error;
};

// An operation over a sequence was given zero elements.
struct EmptySequenceError : Error {
    using Error::Error;
};

// A forward operation produced NaN or Inf (debug-mode check).
struct NumericError : Error {
    using Error::Error;
};

// Malformed input file (CSV row, mapping line, embedding file, ...).
struct ParseError : Error {
    using Error::Error;
};

// Structurally invalid or missing data (bad indices, empty split, ...).
struct DataError : Error {
    using Error::Error;
};

// A raw act tag with no entry in the collapse mapping.
struct UnknownTagError : DataError {
    using DataError::DataError;
};

// Invalid configuration (unknown key, inconsistent sizes, bad preset).
struct ConfigError : Error {
    using Error::Error;
};

// Unreadable, corrupt or version-mismatched checkpoint file.
struct CheckpointError : Error {
    using Error::Error;
};

}  // namespace dact
