// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace evcap {

// Exit-code contract used by the CLI: 0 success, 2 validation error,
// 3 numeric failure, 4 I/O or format error. std::invalid_argument from
// contract checks maps to 2 as well.

/// Malformed or inconsistent user input (bad manifest, wrong line count, ...).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered or a numeric quality gate failed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable, truncated, or wrongly-formatted file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation called against state it does not match (stale cache, ...).
class InvalidStateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace evcap
