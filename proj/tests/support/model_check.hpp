#pragma once

// Random-operation model check of the visit engine. Each sequence starts a
// new or returning visit and fires random operations (valid and invalid)
// at it; the checker verifies the workflow invariants after every step.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vemr::testing {

struct ModelCheckOptions {
    std::size_t sequences = 1000;
    std::size_t max_events = 40; // operations attempted per sequence
    std::uint64_t seed = 1;
    std::size_t rerun_every = 50; // replay a sequence from its seed and compare logs
};

struct ModelCheckReport {
    std::size_t sequences = 0;
    std::size_t operations = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t finalized = 0;
    std::map<std::string, std::size_t> states_reached;
    std::vector<std::string> violations; // first few, with sequence number

    bool ok() const noexcept { return violations.empty(); }
};

ModelCheckReport run_model_check(const ModelCheckOptions& options);

} // namespace vemr::testing
