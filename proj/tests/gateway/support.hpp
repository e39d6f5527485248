#pragma once

#include <memory>

#include "crowdshape/gateway/session.hpp"

namespace gwtest {

using crowdshape::gateway::json;

inline const crowdshape::GridWorld& world() {
  static const crowdshape::GridWorld w(crowdshape::default_layout());
  return w;
}

// Shared by every session in the tests; verification is skipped to keep start-up fast.
inline std::shared_ptr<const crowdshape::OraclePolicy> oracle() {
  static const auto o = [] {
    crowdshape::OracleBuildOptions opt;
    opt.verification_rollouts = 0;
    return std::make_shared<const crowdshape::OraclePolicy>(crowdshape::build_oracle(world(), opt));
  }();
  return o;
}

inline crowdshape::gateway::ManagerOptions manager_options(std::uint64_t token_seed = 42) {
  crowdshape::gateway::ManagerOptions o;
  o.token_seed = token_seed;
  o.oracles = [](const crowdshape::GridWorld&, std::uint64_t, std::uint64_t) { return oracle(); };
  return o;
}

}  // namespace gwtest
