// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "ctmmcp/core/error.hpp"

namespace ctmmcp {

using Json = nlohmann::json;

// Canonical form: UTF-8, no insignificant whitespace, object keys in
// byte (= code point) order, integers without exponent, reals as the
// shortest decimal that round-trips to the same binary64 value.
// nlohmann::json stores objects in a std::map and prints doubles with a
// shortest round-trip algorithm, so dump() with default arguments already
// produces this form once non-finite numbers are excluded.

inline bool json_all_finite(const Json& j) {
  switch (j.type()) {
    case Json::value_t::number_float:
      return std::isfinite(j.get<double>());
    case Json::value_t::array:
    case Json::value_t::object:
      for (const auto& v : j)
        if (!json_all_finite(v)) return false;
      return true;
    default:
      return true;
  }
}

inline std::string canonical_dump(const Json& j) {
  if (!json_all_finite(j)) throw Error(ErrorKind::NonFiniteMetadata, "non-finite number");
  return j.dump(-1, ' ', false, Json::error_handler_t::strict);
}

}  // namespace ctmmcp
