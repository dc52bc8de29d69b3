#pragma once

#include <gtest/gtest.h>

#include <optional>

#include "trafficlm/error.hpp"

namespace testutil {

/// Code of the trafficlm::Error thrown by f, or nullopt when f returns.
template <typename F>
std::optional<trafficlm::ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const trafficlm::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace testutil

#define EXPECT_ERROR(code, expr) EXPECT_EQ(testutil::error_of([&] { (void)(expr); }), std::optional(trafficlm::ErrorCode::code))
