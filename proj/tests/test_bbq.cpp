#include <doctest.h>

#include <random>
#include <sstream>

#include "selfcorr/bbq.hpp"

using namespace selfcorr;

namespace {

RawRoleInputs raw_inputs(std::array<std::string, 3> tags, std::vector<std::string> groups,
                         std::string polarity) {
    RawRoleInputs in;
    in.answer_tags = std::move(tags);
    in.stereotyped_groups = std::move(groups);
    in.question_polarity = std::move(polarity);
    in.category = "Age";
    in.example_id = "7";
    return in;
}

std::string sample_path() { return std::string(SELFCORR_REPO_DIR) + "/data/sample_bbq.jsonl"; }

}  // namespace

TEST_CASE("role resolution: tags (old, unknown, nonOld), group old, neg polarity") {
    // Expected indices audited by hand from the upstream metadata convention.
    const auto r = resolve_choice_roles(raw_inputs({"old", "unknown", "nonOld"}, {"old"}, "neg"));
    REQUIRE(r.ok);
    CHECK(r.unknown_index == 1);
    CHECK(r.biased_index == 0);
    CHECK(r.counter_biased_index == 2);
}

TEST_CASE("role resolution: nonneg polarity flips the biased side") {
    const auto r = resolve_choice_roles(raw_inputs({"old", "unknown", "nonOld"}, {"old"}, "nonneg"));
    REQUIRE(r.ok);
    CHECK(r.unknown_index == 1);
    CHECK(r.biased_index == 2);
    CHECK(r.counter_biased_index == 0);
}

TEST_CASE("role resolution failure modes") {
    CHECK_FALSE(resolve_choice_roles(raw_inputs({"unknown", "unknown", "x"}, {"old"}, "neg")).ok);
    CHECK_FALSE(resolve_choice_roles(raw_inputs({"a", "b", "c"}, {"old"}, "neg")).ok);
    CHECK_FALSE(resolve_choice_roles(raw_inputs({"old", "unknown", "elderly"}, {"zzz"}, "neg")).ok);
    CHECK_FALSE(resolve_choice_roles(raw_inputs({"old", "unknown", "nonOld"}, {"old"}, "weird")).ok);
    // "nonOld" must not match group "old" through the "old" substring.
    const auto r = resolve_choice_roles(raw_inputs({"nonOld", "unknown", "old"}, {"old"}, "neg"));
    REQUIRE(r.ok);
    CHECK(r.biased_index == 2);
}

TEST_CASE("role resolution: aliases and override maps") {
    auto in = raw_inputs({"woman", "unknown", "man"}, {"F"}, "neg");
    auto r = resolve_choice_roles(in);
    REQUIRE(r.ok);
    CHECK(r.biased_index == 0);

    RoleOverrides ov;
    ov.biased_index_by_example["Age/7"] = 2;
    auto in2 = raw_inputs({"a", "unknown", "b"}, {"zzz"}, "neg");
    auto r2 = resolve_choice_roles(in2, &ov);
    REQUIRE(r2.ok);
    CHECK(r2.biased_index == 2);
    CHECK(r2.counter_biased_index == 0);

    RoleOverrides ov2;
    ov2.group_members["zzz"] = {"a"};
    auto r3 = resolve_choice_roles(in2, &ov2);
    REQUIRE(r3.ok);
    CHECK(r3.biased_index == 0);
}

TEST_CASE("load_bbq filters, resolves roles, and sorts") {
    const auto examples = load_bbq(sample_path(), independent_categories());
    CHECK(examples.size() == 23);  // the file holds 24 records, one disambiguated

    for (const auto& ex : examples) {
        CHECK(ex.roles_valid());
        CHECK(ex.context_condition == ContextCondition::Ambiguous);
    }
    // Stable (category, template_id, numeric example_id) order.
    CHECK(examples.front().category == "Age");
    CHECK(examples.front().example_id == "1");
    CHECK(examples[1].example_id == "2");

    // The farm/pastures record: Unknown sits in the middle choice slot.
    const auto religion = load_bbq(sample_path(), {"Religion"});
    REQUIRE(religion.size() == 3);
    const auto& farm = religion.front();
    CHECK(farm.example_id == "101");
    CHECK(farm.choices[1] == "Unknown");
    CHECK(farm.unknown_index == 1);
    CHECK(farm.biased_index == 0);
    CHECK(farm.counter_biased_index == 2);
}

TEST_CASE("load_bbq error paths") {
    std::istringstream bad("{\"example_id\": 1}\nnot json at all\n");
    CHECK_THROWS_WITH_AS(load_bbq_records(bad, "mem", {"Age"}),
                         doctest::Contains("mem:1"), DataError);

    std::istringstream bad2("this is not json\n");
    CHECK_THROWS_WITH_AS(load_bbq_records(bad2, "mem", {"Age"}), doctest::Contains("mem:1"),
                         DataError);

    CHECK_THROWS_AS(load_bbq(sample_path(), {"NotACategory"}), ConfigError);

    // Unresolvable records are listed, never dropped.
    std::ostringstream rec;
    rec << R"({"example_id": 5, "question_index": "1", "question_polarity": "neg",)"
        << R"("context_condition": "ambig", "category": "Age",)"
        << R"("answer_info": {"ans0": ["a","mystery1"], "ans1": ["b","mystery2"], "ans2": ["c","unknown"]},)"
        << R"("additional_metadata": {"stereotyped_groups": ["old"]},)"
        << R"("context": "ctx", "question": "q", "ans0": "A", "ans1": "B", "ans2": "C", "label": 2})"
        << "\n";
    std::istringstream unresolvable(rec.str());
    CHECK_THROWS_WITH_AS(load_bbq_records(unresolvable, "mem", {"Age"}),
                         doctest::Contains("Age/5"), DataError);
}

TEST_CASE("load_bbq: file with zero matching records") {
    std::istringstream empty("");
    CHECK(load_bbq_records(empty, "mem", {"Age"}).empty());
}

TEST_CASE("subsample keeps templates within bounds and is deterministic") {
    // One template with 300 examples, one with 4, one with 3.
    std::vector<BBQExample> examples;
    auto add = [&](const std::string& cat, int tid, int n) {
        for (int i = 0; i < n; ++i) {
            BBQExample ex;
            ex.example_id = cat + std::to_string(tid) + "_" + std::to_string(i);
            ex.category = cat;
            ex.template_id = tid;
            ex.unknown_index = 0;
            ex.biased_index = 1;
            ex.counter_biased_index = 2;
            ex.choices = {"U", "B", "C"};
            examples.push_back(std::move(ex));
        }
    };
    add("Age", 1, 300);
    add("Age", 2, 4);
    add("Religion", 1, 3);

    SubsampleParams params;
    params.seed = 42;
    const auto out = balance_subsample(examples, params);

    std::map<std::pair<std::string, int>, int> counts;
    for (const auto& ex : out) counts[{ex.category, ex.template_id}] += 1;
    CHECK(counts[{"Age", 1}] == 8);
    CHECK(counts[{"Age", 2}] == 4);
    CHECK(counts[{"Religion", 1}] == 3);  // under min: retained in full

    SUBCASE("drop_under_min removes short templates instead") {
        auto p2 = params;
        p2.drop_under_min = true;
        const auto dropped = balance_subsample(examples, p2);
        std::map<std::pair<std::string, int>, int> c2;
        for (const auto& ex : dropped) c2[{ex.category, ex.template_id}] += 1;
        CHECK(c2.count({"Religion", 1}) == 0);
        CHECK(c2[{"Age", 1}] == 8);
    }

    SUBCASE("same seed reproduces byte-identical selection; new seed differs") {
        const auto again = balance_subsample(examples, params);
        REQUIRE(again.size() == out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(again[i].example_id == out[i].example_id);
        }
        auto p3 = params;
        p3.seed = 43;
        const auto other = balance_subsample(examples, p3);
        bool same = other.size() == out.size();
        if (same) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (other[i].example_id != out[i].example_id) same = false;
            }
        }
        CHECK_FALSE(same);
    }

    SUBCASE("idempotent: subsampling its own output returns it unchanged") {
        const auto twice = balance_subsample(out, params);
        REQUIRE(twice.size() == out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(twice[i].example_id == out[i].example_id);
        }
    }

    SUBCASE("min > max is an argument error") {
        SubsampleParams bad;
        bad.min_per_template = 9;
        bad.max_per_template = 8;
        CHECK_THROWS_AS(balance_subsample(examples, bad), ConfigError);
    }
}

TEST_CASE("subsample property: retained counts in [min, max] whenever available >= min") {
    std::mt19937 gen(1234);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<BBQExample> examples;
        const int templates = 1 + static_cast<int>(gen() % 6);
        std::vector<int> sizes;
        for (int t = 0; t < templates; ++t) {
            const int n = 1 + static_cast<int>(gen() % 20);
            sizes.push_back(n);
            for (int i = 0; i < n; ++i) {
                BBQExample ex;
                ex.example_id = std::to_string(t) + "_" + std::to_string(i);
                ex.category = "SES";
                ex.template_id = t;
                ex.unknown_index = 0;
                ex.biased_index = 1;
                ex.counter_biased_index = 2;
                ex.choices = {"U", "B", "C"};
                examples.push_back(std::move(ex));
            }
        }
        SubsampleParams params;
        params.seed = gen();
        const auto mask = subsample_mask(examples, params);
        const auto manifest = make_subsample_manifest(examples, mask, params);
        for (const auto& tc : manifest.templates) {
            CHECK(tc.available == sizes[static_cast<std::size_t>(tc.template_id)]);
            if (tc.available >= params.min_per_template) {
                CHECK(tc.retained >= params.min_per_template);
                CHECK(tc.retained <= params.max_per_template);
            } else {
                CHECK(tc.retained == tc.available);
            }
        }
    }
}

TEST_CASE("manifest json round-trip and digest stability") {
    const auto examples = load_bbq(sample_path(), independent_categories());
    SubsampleParams params;
    const auto mask = subsample_mask(examples, params);
    const auto manifest = make_subsample_manifest(examples, mask, params);
    const auto round = SubsampleManifest::from_json(manifest.to_json());
    CHECK(round.digest() == manifest.digest());
    CHECK(round.total_examples == manifest.total_examples);
    CHECK(manifest.total_examples == 21);  // 8 + 4 + 3 + 6 from the sample file
}
