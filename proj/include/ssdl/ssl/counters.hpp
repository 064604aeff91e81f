// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace ssdl::ssl {

/// How often the self-supervised machinery ran. Used to prove the task phase never touches it.
struct CallCounts {
  std::uint64_t augment = 0;
  std::uint64_t nce = 0;
  std::uint64_t mws = 0;
  std::uint64_t objective = 0;

  std::uint64_t total() const noexcept { return augment + nce + mws + objective; }
};

CallCounts call_counts();
void reset_call_counts();

namespace detail {
CallCounts& counters();
}

}  // namespace ssdl::ssl
