#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "selfcorr/errors.hpp"

namespace selfcorr {

enum class ContextCondition { Ambiguous, Disambiguated };
enum class ChoiceRole { Unknown, Biased, CounterBiased };

/// The nine independent BBQ categories (intersectional ones excluded).
const std::vector<std::string>& independent_categories();
bool is_independent_category(std::string_view category);

/// Case/punctuation-insensitive category comparison ("age" == "Age").
bool category_equals(std::string_view a, std::string_view b);

/// One ambiguous- or disambiguated-context BBQ item with resolved choice roles.
struct BBQExample {
    std::string example_id;
    std::string category;
    int template_id = 0;  // upstream question_index
    std::string context;
    std::string question;
    std::array<std::string, 3> choices;
    int unknown_index = -1;
    int biased_index = -1;
    int counter_biased_index = -1;
    ContextCondition context_condition = ContextCondition::Ambiguous;

    ChoiceRole role_of(int choice_index) const;
    const std::string& unknown_choice() const { return choices[static_cast<std::size_t>(unknown_index)]; }
    const std::string& biased_choice() const { return choices[static_cast<std::size_t>(biased_index)]; }
    const std::string& counter_biased_choice() const {
        return choices[static_cast<std::size_t>(counter_biased_index)];
    }

    /// Roles must form a permutation of {0,1,2}.
    bool roles_valid() const;
};

/// Escape hatch for category-specific metadata conventions: extra tag
/// aliases, region->member expansions, and per-example explicit roles.
struct RoleOverrides {
    std::map<std::string, std::string> tag_aliases;                 // normalized tag -> normalized group
    std::map<std::string, std::vector<std::string>> group_members;  // normalized group -> member tags
    std::map<std::string, int> biased_index_by_example;             // "<category>/<example_id>" -> index

    static RoleOverrides load(const std::string& path);
};

/// Fields of an upstream record that drive role resolution.
struct RawRoleInputs {
    std::array<std::string, 3> answer_tags;  // last element of answer_info.ansN
    std::vector<std::string> stereotyped_groups;
    std::string question_polarity;  // "neg" | "nonneg"
    std::string category;
    std::string example_id;
};

struct RoleResolution {
    bool ok = false;
    int unknown_index = -1;
    int biased_index = -1;
    int counter_biased_index = -1;
    std::string error;  // set when !ok
};

/// Map the record's answer_info tags and stereotyped groups to choice roles.
/// The choice tagged with the unknown marker is Unknown; the choice whose
/// group tag matches the stereotyped group(s) is Biased under negative
/// polarity and CounterBiased under non-negative polarity.
RoleResolution resolve_choice_roles(const RawRoleInputs& raw, const RoleOverrides* overrides = nullptr);

/// A fully parsed record plus its original JSON object, kept so subsets can
/// be re-emitted in the upstream schema.
struct LoadedRecord {
    BBQExample example;
    nlohmann::json raw;
};

/// Parse line-delimited upstream BBQ records, keeping only requested
/// categories with ambiguous context. Records are role-resolved and returned
/// in stable (category, template_id, example_id) order. Malformed lines and
/// unresolvable records raise DataError naming the line / example ids.
std::vector<LoadedRecord> load_bbq_records(const std::string& path,
                                           const std::vector<std::string>& categories,
                                           const RoleOverrides* overrides = nullptr);
std::vector<LoadedRecord> load_bbq_records(std::istream& in, std::string_view source_name,
                                           const std::vector<std::string>& categories,
                                           const RoleOverrides* overrides = nullptr);

std::vector<BBQExample> load_bbq(const std::string& path, const std::vector<std::string>& categories,
                                 const RoleOverrides* overrides = nullptr);

struct SubsampleParams {
    int min_per_template = 4;
    int max_per_template = 8;
    std::uint64_t seed = 0;
    /// Templates with fewer than min available are kept in full by default;
    /// set to drop them instead.
    bool drop_under_min = false;
};

/// Per-template retained/available accounting for one subsample run.
struct SubsampleManifest {
    struct TemplateCount {
        std::string category;
        int template_id = 0;
        int available = 0;
        int retained = 0;
    };

    SubsampleParams params;
    std::vector<TemplateCount> templates;
    std::map<std::string, int> per_category;
    int total_examples = 0;

    nlohmann::json to_json() const;
    static SubsampleManifest from_json(const nlohmann::json& j);
    std::string digest() const;
};

/// Keep/drop flags for a balanced per-template subsample of `examples`
/// (grouped by category + template_id). Selection within an oversized
/// template is a seeded uniform draw without replacement; the same seed and
/// input order always produce the same mask.
std::vector<bool> subsample_mask(const std::vector<BBQExample>& examples, const SubsampleParams& params);

std::vector<BBQExample> balance_subsample(const std::vector<BBQExample>& examples,
                                          const SubsampleParams& params);

SubsampleManifest make_subsample_manifest(const std::vector<BBQExample>& examples,
                                          const std::vector<bool>& mask, const SubsampleParams& params);

/// Upstream JSON object augmented with the resolved role indices.
nlohmann::json augment_with_roles(const LoadedRecord& record);

}  // namespace selfcorr
