#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "armor/util.hpp"

namespace armor {

enum class Label : int { Infeasible = 0, Feasible = 1 };

/// A tool's verdict on one reaction. NA means the tool abstained or failed;
/// it never compares equal to either label.
enum class Prediction : int { Pred0 = 0, Pred1 = 1, NA = 2 };

inline Label label_from_int(int v) {
    if (v != 0 && v != 1) throw Error("ValueOutOfDomain", "label must be 0 or 1");
    return v == 1 ? Label::Feasible : Label::Infeasible;
}

inline int label_to_int(Label l) { return l == Label::Feasible ? 1 : 0; }

inline Prediction prediction_from_label(Label l) {
    return l == Label::Feasible ? Prediction::Pred1 : Prediction::Pred0;
}

/// True iff the prediction names the label; NA is always false.
inline bool prediction_matches(Prediction p, Label l) {
    if (p == Prediction::NA) return false;
    return (p == Prediction::Pred1) == (l == Label::Feasible);
}

struct Reaction {
    long idx = 0;
    std::string reactants;
    std::string product;
    std::optional<Label> label;

    bool operator==(const Reaction&) const = default;
};

enum class Split { Validation, Test, Synthetic };

/// A loaded corpus: reactions in file order plus per-tool prediction maps.
/// Prediction maps may be partial; a missing idx reads as NA.
struct Dataset {
    Split split = Split::Synthetic;
    std::vector<Reaction> reactions;
    // tool_id -> (reaction idx -> prediction)
    std::map<std::string, std::unordered_map<long, Prediction>> predictions;

    const Reaction* find(long idx) const;
    const Reaction& at(long idx) const;

    /// NA for unknown tools and unrecorded idx values; never throws.
    Prediction prediction(const std::string& tool_id, long idx) const;

    // split is run metadata, not file content; equality is over content only.
    bool operator==(const Dataset& other) const {
        return reactions == other.reactions && predictions == other.predictions;
    }
};

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

struct ValidationResult {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationResult validate_reaction(const Reaction& r);

}  // namespace armor
