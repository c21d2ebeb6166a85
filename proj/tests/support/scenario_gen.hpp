// scenario_gen.hpp -- seeded random scenario generator for the sweeps
#pragma once

#include "dcs/simnet.hpp"

namespace dcs::test {

struct GenParams {
    std::size_t max_agents = 6;
    std::size_t max_dossiers = 10;
    std::size_t max_events = 300;
    bool allow_crashes = true;
    bool allow_offline = true;
};

// Model-tracked random scripts: grants reference existing fields, pushes
// existing dossiers, and a drain epilogue (restart, reconnect, pull, use)
// leaves every queue empty so the convergence check applies. All field
// values are fresh 32-byte canaries.
sim::Scenario generate_scenario(std::uint64_t seed, const GenParams& params = {});

} // namespace dcs::test
