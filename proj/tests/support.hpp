#pragma once

#include "qnet/error.hpp"

namespace qnet::test {

// Error code thrown by fn, Internal when nothing is thrown.
template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

}  // namespace qnet::test
