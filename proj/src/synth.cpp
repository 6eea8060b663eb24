#include "armor/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "armor/chem.hpp"

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::vector<std::string> kMarkers = {"Cl", "Br",  "N",    "O",    "S",    "P",
                                           "F",  "I",   "B",    "[Se]", "[Si]", "[Te]"};

uint64_t subseed(uint64_t seed, const std::string& role, long a, long b, long c) {
    std::string key = role + "/" + std::to_string(a) + "/" + std::to_string(b) + "/" +
                      std::to_string(c);
    return fnv1a64(key, seed);
}

std::string tool_name(int t, int generalists) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), t < generalists ? "gen%02d" : "spec%02d", t);
    return buf;
}

}  // namespace

int SynthGroundTruth::region_from_reactants(const std::string& reactants) const {
    TokenStream ts;
    try {
        ts = tokenize_smiles(reactants);
    } catch (const Error&) {
        return -1;
    }
    for (const auto& tok : ts.tokens) {
        for (size_t g = 0; g < markers.size(); ++g)
            if (tok == markers[g]) return static_cast<int>(g);
    }
    return -1;
}

void SynthGroundTruth::save(const std::filesystem::path& path) const {
    ordered_json obj;
    obj["regions"] = regions;
    obj["markers"] = markers;
    obj["profiles"] = json::array();
    for (const auto& p : profiles) {
        ordered_json prof;
        prof["tool_id"] = p.tool_id;
        prof["region_acc"] = p.region_acc;
        obj["profiles"].push_back(prof);
    }
    write_file_atomic(path, obj.dump(2) + "\n");
}

SynthGroundTruth SynthGroundTruth::load(const std::filesystem::path& path) {
    json obj = json::parse(read_file(path));
    SynthGroundTruth gt;
    gt.regions = obj.at("regions").get<int>();
    gt.markers = obj.at("markers").get<std::vector<std::string>>();
    for (const auto& prof : obj.at("profiles"))
        gt.profiles.push_back({prof.at("tool_id").get<std::string>(),
                               prof.at("region_acc").get<std::vector<double>>()});
    return gt;
}

SynthOutput synth_gen(const SynthSpec& spec) {
    if (spec.regions < 2 || spec.regions > static_cast<int>(kMarkers.size()))
        throw Error("SpecInvalid", "regions must be in [2, " + std::to_string(kMarkers.size()) + "]");
    if (spec.tools < 3) throw Error("SpecInvalid", "need at least 3 tools");
    if (spec.generalists < 1 || spec.generalists >= spec.tools)
        throw Error("SpecInvalid", "generalists must be in [1, tools)");
    if (spec.size < 2L * spec.regions) throw Error("SpecInvalid", "size too small for region grid");
    if (spec.noise < 0 || spec.noise > 1) throw Error("SpecInvalid", "noise must be in [0,1]");

    SynthOutput out;
    out.ground_truth.regions = spec.regions;
    out.ground_truth.markers.assign(kMarkers.begin(), kMarkers.begin() + spec.regions);

    for (int t = 0; t < spec.tools; ++t) {
        ToolProfile prof;
        prof.tool_id = tool_name(t, spec.generalists);
        prof.region_acc.assign(spec.regions, 0.0);
        for (int g = 0; g < spec.regions; ++g) {
            if (t < spec.generalists) {
                prof.region_acc[g] = spec.generalist_acc;
            } else {
                int strength = (t - spec.generalists) % spec.regions;
                prof.region_acc[g] = g == strength ? spec.strong_acc : spec.weak_acc;
            }
        }
        out.ground_truth.profiles.push_back(std::move(prof));
    }

    for (int split = 0; split < 2; ++split) {
        Dataset& ds = split == 0 ? out.validation : out.test;
        ds.split = split == 0 ? Split::Validation : Split::Test;

        std::vector<std::vector<size_t>> region_members(spec.regions);
        for (long i = 0; i < spec.size; ++i) {
            int g = static_cast<int>(i % spec.regions);
            bool feasible = (i / spec.regions) % 2 == 0;
            std::mt19937_64 rng(subseed(spec.seed, "reaction", split, i, 0));
            int pre = 1 + static_cast<int>(rng() % 3);
            int post = 1 + static_cast<int>(rng() % 4);

            Reaction r;
            r.idx = i;
            r.reactants = std::string(pre, 'C') + out.ground_truth.markers[g] +
                          std::string(post, 'C');
            r.product = r.reactants + (feasible ? "O" : "N") + out.ground_truth.markers[g];
            r.label = feasible ? Label::Feasible : Label::Infeasible;
            region_members[g].push_back(ds.reactions.size());
            ds.reactions.push_back(std::move(r));
        }

        for (int t = 0; t < spec.tools; ++t) {
            const ToolProfile& prof = out.ground_truth.profiles[t];
            auto& table = ds.predictions[prof.tool_id];
            for (int g = 0; g < spec.regions; ++g) {
                auto members = region_members[g];
                std::mt19937_64 rng(subseed(spec.seed, "pred/" + prof.tool_id, split, g, 0));
                std::shuffle(members.begin(), members.end(), rng);
                long k_wrong = std::lround((1.0 - prof.region_acc[g]) *
                                           static_cast<double>(members.size()));
                for (size_t m = 0; m < members.size(); ++m) {
                    const Reaction& r = ds.reactions[members[m]];
                    bool correct = static_cast<long>(m) >= k_wrong;
                    Label lab = *r.label;
                    Prediction p = correct
                                       ? prediction_from_label(lab)
                                       : prediction_from_label(lab == Label::Feasible
                                                                   ? Label::Infeasible
                                                                   : Label::Feasible);
                    if (spec.noise > 0) {
                        std::mt19937_64 nrng(subseed(spec.seed, "noise/" + prof.tool_id, split,
                                                     r.idx, 0));
                        if (std::uniform_real_distribution<double>(0, 1)(nrng) < spec.noise)
                            p = p == Prediction::Pred1 ? Prediction::Pred0 : Prediction::Pred1;
                    }
                    table[r.idx] = p;
                }
            }
        }

        if (spec.noise == 0) {
            // Engineered accuracies must hold exactly before anything is written.
            for (int t = 0; t < spec.tools; ++t) {
                const ToolProfile& prof = out.ground_truth.profiles[t];
                for (int g = 0; g < spec.regions; ++g) {
                    long n = static_cast<long>(region_members[g].size());
                    long correct = 0;
                    for (size_t pos : region_members[g]) {
                        const Reaction& r = ds.reactions[pos];
                        if (prediction_matches(ds.prediction(prof.tool_id, r.idx), *r.label))
                            ++correct;
                    }
                    long expected = n - std::lround((1.0 - prof.region_acc[g]) *
                                                    static_cast<double>(n));
                    if (correct != expected)
                        throw Error("SpecInvalid",
                                    "engineered accuracy check failed for " + prof.tool_id);
                }
            }
        }
    }
    return out;
}

ToolRegistry registry_from_dataset(const Dataset& dataset) {
    ToolRegistry registry;
    for (const auto& [tool_id, table] : dataset.predictions) {
        ToolRecord rec;
        rec.tool_id = tool_id;
        rec.display_name = tool_id;
        rec.provider = TableProvider{table};
        registry.add(std::move(rec));
    }
    return registry;
}

}  // namespace armor
