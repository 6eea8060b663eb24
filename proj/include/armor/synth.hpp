#pragma once

#include <string>
#include <vector>

#include "armor/domain.hpp"
#include "armor/tools.hpp"

namespace armor {

/// Desk-scale corpus spec: reactions carry a latent region recoverable from
/// the reactant SMILES, and each tool is engineered to be accurate inside
/// its strength regions and weak elsewhere.
struct SynthSpec {
    int tools = 13;
    int regions = 6;
    long size = 2000;  // per split
    uint64_t seed = 1;
    double noise = 0.0;

    int generalists = 3;          // uniformly strong tools (the hierarchy's top level)
    double generalist_acc = 0.80;
    double strong_acc = 0.95;     // specialist accuracy inside its region
    double weak_acc = 0.55;       // specialist accuracy elsewhere
};

struct ToolProfile {
    std::string tool_id;
    std::vector<double> region_acc;  // one accuracy per region
};

struct SynthGroundTruth {
    int regions = 0;
    std::vector<std::string> markers;      // one marker element per region
    std::vector<ToolProfile> profiles;

    /// Region recovered from the reactant SMILES via its marker token;
    /// -1 when no marker is present.
    int region_from_reactants(const std::string& reactants) const;

    void save(const std::filesystem::path& path) const;
    static SynthGroundTruth load(const std::filesystem::path& path);
};

struct SynthOutput {
    Dataset validation;
    Dataset test;
    SynthGroundTruth ground_truth;
};

/// Deterministic generator. With noise=0 every tool's measured per-region
/// accuracy equals its engineered profile up to integer rounding; the
/// generator verifies this before returning.
SynthOutput synth_gen(const SynthSpec& spec);

/// Registry with TableProviders materialized from a dataset's predictions.
ToolRegistry registry_from_dataset(const Dataset& dataset);

}  // namespace armor
