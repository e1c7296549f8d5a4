#include "selfcorr/bbq.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "selfcorr/digest.hpp"

namespace selfcorr {

namespace {

const std::vector<std::string> kNineCategories = {
    "Age",
    "Disability_status",
    "Gender_identity",
    "Nationality",
    "Physical_appearance",
    "Race_ethnicity",
    "Religion",
    "SES",
    "Sexual_orientation",
};

std::string normalize_token(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    return out;
}

// Known tag/group spelling differences across BBQ categories. Normalized
// tag -> normalized group. User overrides extend this at load time.
const std::map<std::string, std::string>& builtin_aliases() {
    static const std::map<std::string, std::string> aliases = {
        {"woman", "f"},   {"girl", "f"},      {"female", "f"},
        {"man", "m"},     {"boy", "m"},       {"male", "m"},
        {"transf", "trans"}, {"transm", "trans"}, {"transwoman", "trans"}, {"transman", "trans"},
        {"africanamerican", "black"},
        {"latina", "latino"}, {"latinx", "latino"}, {"hispanic", "latino"},
        {"obese", "fat"}, {"overweight", "fat"},
    };
    return aliases;
}

// Region groups used by the Nationality category, expanded to the member
// nationalities that appear as answer tags.
const std::map<std::string, std::vector<std::string>>& builtin_group_members() {
    static const std::map<std::string, std::vector<std::string>> members = {
        {"arab",
         {"saudi", "yemeni", "iraqi", "syrian", "lebanese", "palestinian", "jordanian", "kuwaiti",
          "emirati", "qatari", "libyan", "moroccan", "afghan", "iranian"}},
        {"middleeastern",
         {"saudi", "yemeni", "iraqi", "syrian", "lebanese", "palestinian", "jordanian", "kuwaiti",
          "emirati", "qatari", "iranian", "israeli", "afghan"}},
        {"asian",
         {"chinese", "japanese", "korean", "vietnamese", "thai", "indian", "pakistani",
          "bangladeshi", "srilankan", "indonesian", "filipino", "burmese", "mongolian"}},
        {"african",
         {"nigerian", "ethiopian", "kenyan", "namibian", "malian", "guinean", "mozambican",
          "senegalese", "eritrean", "somali", "burkinabe"}},
        {"latino",
         {"mexican", "colombian", "venezuelan", "peruvian", "chilean", "brazilian", "guatemalan",
          "honduran", "dominican", "panamanian", "haitian"}},
        {"easterneuropean",
         {"russian", "polish", "ukrainian", "romanian", "hungarian", "lithuanian", "moldovan",
          "slovak", "belarusian"}},
    };
    return members;
}

bool tag_matches_group(const std::string& norm_tag, const std::string& norm_group,
                       const RoleOverrides* overrides) {
    if (norm_tag == norm_group) return true;

    auto canon = [&](const std::string& t) {
        if (overrides) {
            auto it = overrides->tag_aliases.find(t);
            if (it != overrides->tag_aliases.end()) return it->second;
        }
        auto it = builtin_aliases().find(t);
        if (it != builtin_aliases().end()) return it->second;
        return t;
    };
    if (canon(norm_tag) == canon(norm_group)) return true;

    auto member_of = [&](const std::map<std::string, std::vector<std::string>>& table) {
        auto it = table.find(norm_group);
        if (it == table.end()) return false;
        return std::find(it->second.begin(), it->second.end(), norm_tag) != it->second.end();
    };
    if (overrides && member_of(overrides->group_members)) return true;
    return member_of(builtin_group_members());
}

// example_id values are numeric in the upstream release; compare numerically
// when possible so "10" sorts after "2".
bool id_less(const std::string& a, const std::string& b) {
    auto as_number = [](const std::string& s) -> std::optional<long long> {
        if (s.empty() || s.size() > 18) return std::nullopt;
        for (char c : s) {
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        }
        return std::stoll(s);
    };
    auto na = as_number(a);
    auto nb = as_number(b);
    if (na && nb) return *na < *nb;
    return a < b;
}

std::string json_to_id(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw DataError("id field is neither string nor integer");
}

int json_to_int(const nlohmann::json& v, const char* field) {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_string()) {
        try {
            return std::stoi(v.get<std::string>());
        } catch (const std::exception&) {
        }
    }
    throw DataError(std::string(field) + " is not an integer");
}

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
    // std::uniform_int_distribution is not implementation-stable; this is.
    const std::uint64_t limit = (UINT64_MAX / n) * n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

}  // namespace

const std::vector<std::string>& independent_categories() { return kNineCategories; }

bool category_equals(std::string_view a, std::string_view b) {
    return normalize_token(a) == normalize_token(b);
}

bool is_independent_category(std::string_view category) {
    for (const auto& c : kNineCategories) {
        if (category_equals(c, category)) return true;
    }
    return false;
}

ChoiceRole BBQExample::role_of(int choice_index) const {
    if (choice_index == unknown_index) return ChoiceRole::Unknown;
    if (choice_index == biased_index) return ChoiceRole::Biased;
    if (choice_index == counter_biased_index) return ChoiceRole::CounterBiased;
    throw DataError("choice index " + std::to_string(choice_index) + " out of range for example " +
                    example_id);
}

bool BBQExample::roles_valid() const {
    std::set<int> s = {unknown_index, biased_index, counter_biased_index};
    return s == std::set<int>{0, 1, 2};
}

RoleOverrides RoleOverrides::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open override map: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("override map " + path + ": " + e.what());
    }
    RoleOverrides out;
    for (auto& [tag, group] : j.value("tag_aliases", nlohmann::json::object()).items()) {
        out.tag_aliases[normalize_token(tag)] = normalize_token(group.get<std::string>());
    }
    for (auto& [group, members] : j.value("group_members", nlohmann::json::object()).items()) {
        std::vector<std::string> norm;
        for (const auto& m : members) norm.push_back(normalize_token(m.get<std::string>()));
        out.group_members[normalize_token(group)] = std::move(norm);
    }
    for (auto& [key, v] : j.value("examples", nlohmann::json::object()).items()) {
        out.biased_index_by_example[key] = v.at("biased_index").get<int>();
    }
    return out;
}

RoleResolution resolve_choice_roles(const RawRoleInputs& raw, const RoleOverrides* overrides) {
    RoleResolution res;

    std::vector<int> unknown_positions;
    for (int i = 0; i < 3; ++i) {
        if (normalize_token(raw.answer_tags[static_cast<std::size_t>(i)]) == "unknown") {
            unknown_positions.push_back(i);
        }
    }
    if (unknown_positions.size() != 1) {
        res.error = unknown_positions.empty() ? "no choice carries the unknown tag"
                                              : "multiple choices carry the unknown tag";
        return res;
    }
    res.unknown_index = unknown_positions.front();

    std::vector<int> others;
    for (int i = 0; i < 3; ++i) {
        if (i != res.unknown_index) others.push_back(i);
    }

    int stereotyped = -1;
    if (overrides) {
        auto it = overrides->biased_index_by_example.find(raw.category + "/" + raw.example_id);
        if (it != overrides->biased_index_by_example.end()) {
            res.biased_index = it->second;
            if (res.biased_index == res.unknown_index || res.biased_index < 0 || res.biased_index > 2) {
                res.error = "override biased_index collides with the unknown choice";
                return res;
            }
            res.counter_biased_index = others[0] == res.biased_index ? others[1] : others[0];
            res.ok = true;
            return res;
        }
    }

    std::vector<int> matches;
    for (int i : others) {
        const std::string tag = normalize_token(raw.answer_tags[static_cast<std::size_t>(i)]);
        for (const auto& group : raw.stereotyped_groups) {
            if (tag_matches_group(tag, normalize_token(group), overrides)) {
                matches.push_back(i);
                break;
            }
        }
    }
    if (matches.size() != 1) {
        res.error = matches.empty() ? "no choice matches the stereotyped group(s)"
                                    : "both non-unknown choices match the stereotyped group(s)";
        return res;
    }
    stereotyped = matches.front();
    const int other = others[0] == stereotyped ? others[1] : others[0];

    if (raw.question_polarity == "neg") {
        res.biased_index = stereotyped;
        res.counter_biased_index = other;
    } else if (raw.question_polarity == "nonneg") {
        res.biased_index = other;
        res.counter_biased_index = stereotyped;
    } else {
        res.error = "unknown question_polarity '" + raw.question_polarity + "'";
        return res;
    }
    res.ok = true;
    return res;
}

std::vector<LoadedRecord> load_bbq_records(const std::string& path,
                                           const std::vector<std::string>& categories,
                                           const RoleOverrides* overrides) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    return load_bbq_records(in, path, categories, overrides);
}

std::vector<LoadedRecord> load_bbq_records(std::istream& in, std::string_view source_name,
                                           const std::vector<std::string>& categories,
                                           const RoleOverrides* overrides) {
    for (const auto& c : categories) {
        if (!is_independent_category(c)) {
            std::string valid;
            for (const auto& k : kNineCategories) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError("unknown category '" + c + "' (valid: " + valid + ")");
        }
    }

    std::vector<LoadedRecord> out;
    std::vector<std::string> unresolved;
    std::string line;
    std::size_t line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string(source_name) + ":" + std::to_string(line_no) +
                            ": malformed record: " + e.what());
        }

        try {
            const std::string category = j.at("category").get<std::string>();
            bool requested = false;
            for (const auto& c : categories) {
                if (category_equals(c, category)) {
                    requested = true;
                    break;
                }
            }
            if (!requested) continue;

            const std::string condition = j.at("context_condition").get<std::string>();
            if (condition != "ambig") continue;

            LoadedRecord rec;
            rec.raw = j;
            BBQExample& ex = rec.example;
            ex.example_id = json_to_id(j.at("example_id"));
            ex.category = category;
            ex.template_id = json_to_int(j.at("question_index"), "question_index");
            ex.context = j.at("context").get<std::string>();
            ex.question = j.at("question").get<std::string>();
            ex.choices = {j.at("ans0").get<std::string>(), j.at("ans1").get<std::string>(),
                          j.at("ans2").get<std::string>()};
            ex.context_condition = ContextCondition::Ambiguous;

            if (j.contains("unknown_index") && j.contains("biased_index") &&
                j.contains("counter_biased_index")) {
                // Already augmented by a previous subsample run.
                ex.unknown_index = j.at("unknown_index").get<int>();
                ex.biased_index = j.at("biased_index").get<int>();
                ex.counter_biased_index = j.at("counter_biased_index").get<int>();
                if (!ex.roles_valid()) {
                    unresolved.push_back(ex.category + "/" + ex.example_id +
                                         " (stored role indices are not a permutation)");
                    continue;
                }
            } else {
                RawRoleInputs raw;
                raw.category = category;
                raw.example_id = ex.example_id;
                raw.question_polarity = j.at("question_polarity").get<std::string>();
                const auto& info = j.at("answer_info");
                for (int i = 0; i < 3; ++i) {
                    const auto& arr = info.at("ans" + std::to_string(i));
                    if (!arr.is_array() || arr.empty()) throw DataError("answer_info entry is not a list");
                    raw.answer_tags[static_cast<std::size_t>(i)] = arr.back().get<std::string>();
                }
                const auto& meta = j.at("additional_metadata");
                for (const auto& g : meta.value("stereotyped_groups", nlohmann::json::array())) {
                    raw.stereotyped_groups.push_back(g.get<std::string>());
                }

                RoleResolution roles = resolve_choice_roles(raw, overrides);
                if (!roles.ok) {
                    unresolved.push_back(ex.category + "/" + ex.example_id + " (" + roles.error + ")");
                    continue;
                }
                ex.unknown_index = roles.unknown_index;
                ex.biased_index = roles.biased_index;
                ex.counter_biased_index = roles.counter_biased_index;
            }
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string(source_name) + ":" + std::to_string(line_no) +
                            ": malformed record: " + e.what());
        } catch (const DataError& e) {
            throw DataError(std::string(source_name) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }

    if (!unresolved.empty()) {
        std::string msg = "unresolvable choice roles for " + std::to_string(unresolved.size()) +
                          " record(s); supply an override map. Examples:";
        std::size_t shown = 0;
        for (const auto& id : unresolved) {
            msg += "\n  " + id;
            if (++shown == 20 && unresolved.size() > 20) {
                msg += "\n  ... and " + std::to_string(unresolved.size() - 20) + " more";
                break;
            }
        }
        throw DataError(msg);
    }

    std::stable_sort(out.begin(), out.end(), [](const LoadedRecord& a, const LoadedRecord& b) {
        if (a.example.category != b.example.category) return a.example.category < b.example.category;
        if (a.example.template_id != b.example.template_id) return a.example.template_id < b.example.template_id;
        return id_less(a.example.example_id, b.example.example_id);
    });
    return out;
}

std::vector<BBQExample> load_bbq(const std::string& path, const std::vector<std::string>& categories,
                                 const RoleOverrides* overrides) {
    auto records = load_bbq_records(path, categories, overrides);
    std::vector<BBQExample> out;
    out.reserve(records.size());
    for (auto& r : records) out.push_back(std::move(r.example));
    return out;
}

std::vector<bool> subsample_mask(const std::vector<BBQExample>& examples, const SubsampleParams& params) {
    if (params.min_per_template > params.max_per_template) {
        throw ConfigError("subsample min_per_template (" + std::to_string(params.min_per_template) +
                          ") exceeds max_per_template (" + std::to_string(params.max_per_template) + ")");
    }

    std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        groups[{examples[i].category, examples[i].template_id}].push_back(i);
    }

    std::vector<bool> keep(examples.size(), false);
    for (const auto& [key, indices] : groups) {
        const std::size_t n = indices.size();
        const std::size_t want = static_cast<std::size_t>(params.max_per_template);
        if (n <= want) {
            if (n < static_cast<std::size_t>(params.min_per_template) && params.drop_under_min) continue;
            for (std::size_t i : indices) keep[i] = true;
            continue;
        }
        // Seeded per template, so a template's draw does not depend on what
        // other templates are present.
        std::mt19937_64 rng(StableRng::key(params.seed, {key.first, std::to_string(key.second)}));
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + bounded_draw(rng, n - i);
            std::swap(pool[i], pool[j]);
            keep[indices[pool[i]]] = true;
        }
    }
    return keep;
}

std::vector<BBQExample> balance_subsample(const std::vector<BBQExample>& examples,
                                          const SubsampleParams& params) {
    const auto mask = subsample_mask(examples, params);
    std::vector<BBQExample> out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (mask[i]) out.push_back(examples[i]);
    }
    return out;
}

SubsampleManifest make_subsample_manifest(const std::vector<BBQExample>& examples,
                                          const std::vector<bool>& mask, const SubsampleParams& params) {
    SubsampleManifest m;
    m.params = params;

    std::map<std::pair<std::string, int>, std::pair<int, int>> counts;  // (available, retained)
    for (std::size_t i = 0; i < examples.size(); ++i) {
        auto& c = counts[{examples[i].category, examples[i].template_id}];
        c.first += 1;
        if (mask[i]) c.second += 1;
    }
    for (const auto& [key, c] : counts) {
        m.templates.push_back({key.first, key.second, c.first, c.second});
        m.per_category[key.first] += c.second;
        m.total_examples += c.second;
    }
    return m;
}

nlohmann::json SubsampleManifest::to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& tc : templates) {
        t.push_back({{"category", tc.category},
                     {"template_id", tc.template_id},
                     {"available", tc.available},
                     {"retained", tc.retained}});
    }
    return nlohmann::json{{"min_per_template", params.min_per_template},
                          {"max_per_template", params.max_per_template},
                          {"seed", params.seed},
                          {"drop_under_min", params.drop_under_min},
                          {"templates", t},
                          {"per_category", per_category},
                          {"total_examples", total_examples}};
}

SubsampleManifest SubsampleManifest::from_json(const nlohmann::json& j) {
    SubsampleManifest m;
    m.params.min_per_template = j.at("min_per_template").get<int>();
    m.params.max_per_template = j.at("max_per_template").get<int>();
    m.params.seed = j.at("seed").get<std::uint64_t>();
    m.params.drop_under_min = j.value("drop_under_min", false);
    for (const auto& t : j.at("templates")) {
        m.templates.push_back({t.at("category").get<std::string>(), t.at("template_id").get<int>(),
                               t.at("available").get<int>(), t.at("retained").get<int>()});
    }
    m.per_category = j.at("per_category").get<std::map<std::string, int>>();
    m.total_examples = j.at("total_examples").get<int>();
    return m;
}

std::string SubsampleManifest::digest() const { return sha256_hex(to_json().dump()); }

nlohmann::json augment_with_roles(const LoadedRecord& record) {
    nlohmann::json j = record.raw;
    j["unknown_index"] = record.example.unknown_index;
    j["biased_index"] = record.example.biased_index;
    j["counter_biased_index"] = record.example.counter_biased_index;
    return j;
}

}  // namespace selfcorr
