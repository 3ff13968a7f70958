#pragma once

#include <cassert>
#include <string>
#include <utility>
#include <variant>

#include "vfc/error.hpp"

namespace vfc {

/// Typed failure returned by the pure LLM-output parsers.
struct ParseError {
  ErrorCode code;
  std::string message;
  int index = 0;  // offending caption index for incomplete_judgment
};

/// Minimal stand-in for std::expected (C++23), holding either a value or a ParseError.
template <typename T>
class Expected {
 public:
  Expected(T value) : state_(std::move(value)) {}
  Expected(ParseError error) : state_(std::move(error)) {}

  bool has_value() const noexcept { return state_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  const T& value() const& {
    if (!has_value()) throw Error(error().code, error().message);
    return std::get<0>(state_);
  }
  T&& value() && {
    if (!has_value()) throw Error(error().code, error().message);
    return std::get<0>(std::move(state_));
  }
  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

  const ParseError& error() const {
    assert(!has_value());
    return std::get<1>(state_);
  }

 private:
  std::variant<T, ParseError> state_;
};

}  // namespace vfc
