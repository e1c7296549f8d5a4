#include "selfcorr/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "selfcorr/digest.hpp"
#include "selfcorr/http_backend.hpp"
#include "selfcorr/metrics.hpp"
#include "selfcorr/prompts.hpp"

namespace selfcorr {

namespace fs = std::filesystem;

namespace {

std::string resolve_path(const std::string& path, const std::string& base_dir) {
    if (path.empty() || base_dir.empty()) return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(base_dir) / p).lexically_normal().string();
}

nlohmann::json outcome_record(const Outcome& outcome, const std::string& response_text,
                              const AnswerExtraction& extraction,
                              const std::vector<SelfConsistencySample>* samples, bool aborted,
                              const std::string& error) {
    nlohmann::json j{{"type", "outcome"},
                     {"example_id", outcome.example_id},
                     {"category", outcome.category},
                     {"method", outcome.method.to_json()},
                     {"trial", outcome.trial_index},
                     {"classification", std::string(classification_name(outcome.classification))},
                     {"response", response_text},
                     {"extract_method", std::string(extract_method_name(extraction.method))},
                     {"aborted", aborted}};
    if (!error.empty()) j["error"] = error;
    if (samples) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& s : *samples) {
            nlohmann::json sj{{"response", s.response_text},
                              {"extract_method", std::string(extract_method_name(s.extraction.method))}};
            if (s.extraction.choice_index) sj["choice"] = *s.extraction.choice_index;
            arr.push_back(std::move(sj));
        }
        j["samples"] = std::move(arr);
    }
    return j;
}

}  // namespace

nlohmann::json BackendSpec::to_json() const {
    nlohmann::json j{{"name", name}};
    if (type == Type::Http) {
        j["base_url"] = base_url;
        j["model"] = model;
        j["api_key_env"] = api_key_env;
        j["concurrency"] = max_concurrency;
        if (temperature) j["temperature"] = *temperature;
        if (max_tokens) j["max_tokens"] = *max_tokens;
    } else {
        if (!scripted_spec_path.empty()) j["scripted"] = scripted_spec_path;
        if (scripted_inline) j["scripted_spec"] = scripted_inline->to_json();
    }
    return j;
}

nlohmann::json MethodSpec::to_json() const {
    return nlohmann::json{{"kind", std::string(method_kind_name(kind))},
                          {"responder", responder},
                          {"feedback", feedback},
                          {"debias", debias}};
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return from_json(j, fs::path(path).parent_path().string());
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
    ExperimentConfig cfg;
    try {
        const auto& ds = j.at("dataset");
        cfg.dataset_path = resolve_path(ds.at("path").get<std::string>(), base_dir);
        if (ds.contains("categories")) {
            cfg.categories = ds.at("categories").get<std::vector<std::string>>();
        } else {
            cfg.categories = independent_categories();
        }
        if (ds.contains("subsample")) {
            const auto& ss = ds.at("subsample");
            cfg.subsample.min_per_template = ss.value("min", 4);
            cfg.subsample.max_per_template = ss.value("max", 8);
            cfg.subsample.seed = ss.value("seed", std::uint64_t{0});
            cfg.subsample.drop_under_min = ss.value("drop_under_min", false);
        }
        cfg.override_map = resolve_path(ds.value("override_map", ""), base_dir);

        for (const auto& [name, bj] : j.value("backends", nlohmann::json::object()).items()) {
            BackendSpec spec;
            spec.name = name;
            if (bj.is_string()) {
                const std::string s = bj.get<std::string>();
                if (!s.starts_with("scripted:")) {
                    throw ConfigError("backend '" + name + "': string form must be scripted:<spec-file>");
                }
                spec.type = BackendSpec::Type::Scripted;
                spec.scripted_spec_path = resolve_path(s.substr(9), base_dir);
            } else if (bj.contains("scripted")) {
                spec.type = BackendSpec::Type::Scripted;
                spec.scripted_spec_path = resolve_path(bj.at("scripted").get<std::string>(), base_dir);
            } else if (bj.contains("scripted_spec")) {
                spec.type = BackendSpec::Type::Scripted;
                spec.scripted_inline = ScriptedModelSpec::from_json(bj.at("scripted_spec"));
            } else {
                spec.type = BackendSpec::Type::Http;
                spec.base_url = bj.at("base_url").get<std::string>();
                spec.model = bj.at("model").get<std::string>();
                spec.api_key_env = bj.value("api_key_env", "");
                spec.max_concurrency = bj.value("concurrency", 4);
                if (bj.contains("temperature")) spec.temperature = bj.at("temperature").get<double>();
                if (bj.contains("max_tokens")) spec.max_tokens = bj.at("max_tokens").get<int>();
            }
            cfg.backends[name] = std::move(spec);
        }

        for (const auto& mj : j.at("methods")) {
            MethodSpec m;
            m.kind = method_kind_from_name(mj.at("kind").get<std::string>());
            m.responder = mj.at("responder").get<std::string>();
            m.feedback = mj.value("feedback", "");
            if (m.kind == MethodKind::SameModel && m.feedback.empty()) m.feedback = m.responder;
            m.debias = mj.value("debias", false);
            cfg.methods.push_back(std::move(m));
        }

        cfg.trials = j.value("trials", 3);
        cfg.max_iterations = j.value("max_iterations", 3);
        cfg.self_consistency_k = j.value("self_consistency_k", 4);
        cfg.score_final_round = j.value("score_final_round", true);
        cfg.concurrency = j.value("concurrency", 4);
        cfg.output_dir = resolve_path(j.at("output_dir").get<std::string>(), base_dir);
        cfg.cache_dir = resolve_path(j.value("cache_dir", ""), base_dir);
        cfg.shots_dir = resolve_path(j.value("shots_dir", ""), base_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    // Methods may reference scripted specs directly without a backends entry.
    for (auto& m : cfg.methods) {
        for (std::string* ref : {&m.responder, &m.feedback}) {
            if (ref->starts_with("scripted:") && !cfg.backends.count(*ref)) {
                BackendSpec spec;
                spec.name = *ref;
                spec.type = BackendSpec::Type::Scripted;
                spec.scripted_spec_path = resolve_path(ref->substr(9), base_dir);
                cfg.backends[*ref] = std::move(spec);
            }
        }
    }

    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (self_consistency_k < 2) throw ConfigError("self_consistency_k must be >= 2");
    if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (methods.empty()) throw ConfigError("config lists no methods");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
    if (subsample.min_per_template > subsample.max_per_template) {
        throw ConfigError("subsample min exceeds max");
    }
    for (const auto& c : categories) {
        if (!is_independent_category(c)) throw ConfigError("unknown category '" + c + "'");
    }
    for (const auto& m : methods) {
        if (!backends.count(m.responder)) {
            throw ConfigError("method references unknown backend '" + m.responder + "'");
        }
        if (m.kind == MethodKind::SameModel) {
            if (m.feedback != m.responder) {
                throw ConfigError("same-model correction must use one backend for both roles");
            }
        } else if (m.kind == MethodKind::CrossModel) {
            if (m.feedback.empty() || !backends.count(m.feedback)) {
                throw ConfigError("cross-model correction references unknown feedback backend '" +
                                  m.feedback + "'");
            }
        } else if (!m.feedback.empty()) {
            throw ConfigError("baseline methods take no feedback backend");
        }
    }
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json backends_json = nlohmann::json::object();
    for (const auto& [name, spec] : backends) backends_json[name] = spec.to_json();
    nlohmann::json methods_json = nlohmann::json::array();
    for (const auto& m : methods) methods_json.push_back(m.to_json());
    return nlohmann::json{
        {"dataset",
         {{"path", dataset_path},
          {"categories", categories},
          {"override_map", override_map},
          {"subsample",
           {{"min", subsample.min_per_template},
            {"max", subsample.max_per_template},
            {"seed", subsample.seed},
            {"drop_under_min", subsample.drop_under_min}}}}},
        {"backends", backends_json},
        {"methods", methods_json},
        {"trials", trials},
        {"max_iterations", max_iterations},
        {"self_consistency_k", self_consistency_k},
        {"score_final_round", score_final_round},
        {"concurrency", concurrency},
        {"output_dir", output_dir},
        {"cache_dir", cache_dir},
        {"shots_dir", shots_dir}};
}

std::string ExperimentConfig::digest() const {
    nlohmann::json j = to_json();
    // Storage locations do not change what gets computed.
    j.erase("output_dir");
    j.erase("cache_dir");
    j["concurrency"] = 0;
    return sha256_hex(j.dump());
}

std::string ExperimentConfig::subset_path() const {
    return (fs::path(output_dir) / "dataset" / "subset.jsonl").string();
}
std::string ExperimentConfig::manifest_path() const {
    return (fs::path(output_dir) / "dataset" / "manifest.json").string();
}
std::string ExperimentConfig::results_path() const {
    return (fs::path(output_dir) / "results.jsonl").string();
}

std::string resume_key(const std::string& example_id, const MethodDescriptor& method, int trial) {
    return example_id + "|" + method.key() + "|" + std::to_string(trial);
}

nlohmann::json transcript_to_json(const CorrectionTranscript& tr) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : tr.rounds) {
        nlohmann::json rj{{"response", r.response_text},
                          {"extract_method", std::string(extract_method_name(r.extraction.method))},
                          {"classification", std::string(classification_name(r.classification))}};
        if (r.extraction.choice_index) rj["choice"] = *r.extraction.choice_index;
        if (r.feedback) {
            rj["feedback"] = {{"raw", r.feedback->raw_text},
                              {"coherent", r.feedback->aspect_scores[0]},
                              {"comprehensive", r.feedback->aspect_scores[1]},
                              {"objective", r.feedback->aspect_scores[2]},
                              {"total", r.feedback->total},
                              {"parse_ok", r.feedback->parse_ok}};
        }
        rounds.push_back(std::move(rj));
    }
    nlohmann::json j{{"type", "transcript"},
                     {"example_id", tr.example_id},
                     {"category", tr.category},
                     {"method", tr.method.to_json()},
                     {"trial", tr.trial_index},
                     {"stop_reason", std::string(stop_reason_name(tr.stop_reason))},
                     {"aborted", tr.aborted},
                     {"rounds", std::move(rounds)}};
    if (tr.aborted) j["error"] = tr.abort_error;
    return j;
}

CorrectionTranscript transcript_from_json(const nlohmann::json& j) {
    CorrectionTranscript tr;
    tr.example_id = j.at("example_id").get<std::string>();
    tr.category = j.at("category").get<std::string>();
    tr.method = MethodDescriptor::from_json(j.at("method"));
    tr.trial_index = j.at("trial").get<int>();
    tr.stop_reason = stop_reason_from_name(j.at("stop_reason").get<std::string>());
    tr.aborted = j.value("aborted", false);
    tr.abort_error = j.value("error", "");
    for (const auto& rj : j.at("rounds")) {
        RoundRecord r;
        r.response_text = rj.at("response").get<std::string>();
        r.extraction.method = extract_method_from_name(rj.at("extract_method").get<std::string>());
        if (rj.contains("choice")) r.extraction.choice_index = rj.at("choice").get<int>();
        r.classification = classification_from_name(rj.at("classification").get<std::string>());
        if (rj.contains("feedback")) {
            const auto& fj = rj.at("feedback");
            Feedback fb;
            fb.raw_text = fj.at("raw").get<std::string>();
            fb.aspect_scores = {fj.at("coherent").get<int>(), fj.at("comprehensive").get<int>(),
                                fj.at("objective").get<int>()};
            fb.total = fj.at("total").get<int>();
            fb.parse_ok = fj.at("parse_ok").get<bool>();
            r.feedback = std::move(fb);
        }
        tr.rounds.push_back(std::move(r));
    }
    return tr;
}

ResultsData read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file: " + path);

    ResultsData data;
    std::vector<nlohmann::json> records;
    std::map<std::string, std::size_t> index_by_key;

    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            // Crash-tolerant log: a truncated or garbled line is skipped.
            continue;
        }
        const std::string type = j.value("type", "");
        if (type == "header") {
            data.header = std::move(j);
            continue;
        }
        if (type != "outcome" && type != "transcript") continue;
        try {
            const std::string key = resume_key(j.at("example_id").get<std::string>(),
                                               MethodDescriptor::from_json(j.at("method")),
                                               j.at("trial").get<int>());
            auto it = index_by_key.find(key);
            if (it == index_by_key.end()) {
                index_by_key[key] = records.size();
                records.push_back(std::move(j));
            } else {
                records[it->second] = std::move(j);  // re-run cells supersede
            }
        } catch (const nlohmann::json::exception&) {
            continue;
        }
    }

    for (auto& j : records) {
        data.record_count += 1;
        if (j.value("aborted", false)) {
            data.aborted_keys.insert(resume_key(j.at("example_id").get<std::string>(),
                                                MethodDescriptor::from_json(j.at("method")),
                                                j.at("trial").get<int>()));
        }
        if (j.at("type") == "transcript") {
            data.transcripts.push_back(transcript_from_json(j));
        } else {
            Outcome o;
            o.example_id = j.at("example_id").get<std::string>();
            o.category = j.at("category").get<std::string>();
            o.method = MethodDescriptor::from_json(j.at("method"));
            o.trial_index = j.at("trial").get<int>();
            o.classification = classification_from_name(j.at("classification").get<std::string>());
            if (!j.value("aborted", false)) data.outcomes.push_back(std::move(o));
        }
    }
    return data;
}

ResultsWriter::ResultsWriter(const std::string& path, const nlohmann::json& header) : path_(path) {
    fs::create_directories(fs::path(path).parent_path());

    bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    if (!fresh) {
        std::ifstream in(path);
        std::string first_line;
        std::getline(in, first_line);
        nlohmann::json existing;
        try {
            existing = nlohmann::json::parse(first_line);
        } catch (const nlohmann::json::exception&) {
            throw DataError("results file " + path + " has no readable header");
        }
        if (existing.value("type", "") != "header") {
            throw DataError("results file " + path + " has no header record");
        }
        const std::string prior = existing.value("config_digest", "");
        const std::string current = header.value("config_digest", "");
        if (!prior.empty() && !current.empty() && prior != current) {
            throw ConfigError("results file " + path +
                              " was produced by a different config (digest mismatch)");
        }
        // Repair a crash-truncated final line so appends start clean.
        std::ifstream check(path, std::ios::binary);
        check.seekg(-1, std::ios::end);
        char last = '\n';
        check.read(&last, 1);
        out_ = std::make_unique<std::ofstream>(path, std::ios::app);
        if (last != '\n') (*out_) << "\n";
    } else {
        out_ = std::make_unique<std::ofstream>(path, std::ios::app);
        (*out_) << header.dump() << "\n";
        out_->flush();
    }
    if (!*out_) throw DataError("cannot open results file for append: " + path);
}

void ResultsWriter::write(const nlohmann::json& record) {
    std::lock_guard<std::mutex> lock(mu_);
    (*out_) << record.dump() << "\n";
    out_->flush();
}

ExperimentRunner::ExperimentRunner(ExperimentConfig config) : config_(std::move(config)) {}

ExperimentRunner::ExperimentRunner(ExperimentConfig config, std::vector<BBQExample> examples)
    : config_(std::move(config)), injected_examples_(std::move(examples)) {}

std::vector<BBQExample> ExperimentRunner::load_examples() const {
    if (injected_examples_) return *injected_examples_;
    if (!fs::exists(config_.manifest_path())) {
        throw ConfigError("dataset manifest not found at " + config_.manifest_path() +
                          "; run `selfcorr subsample` first");
    }
    RoleOverrides overrides;
    const RoleOverrides* ov = nullptr;
    if (!config_.override_map.empty()) {
        overrides = RoleOverrides::load(config_.override_map);
        ov = &overrides;
    }
    return load_bbq(config_.subset_path(), config_.categories, ov);
}

void ExperimentRunner::build_backends() {
    const char* env_cache = std::getenv("SELFCORR_CACHE_DIR");
    const std::string cache_dir = env_cache ? env_cache : config_.cache_dir;
    std::shared_ptr<ResponseCache> cache;
    if (!cache_dir.empty()) cache = std::make_shared<ResponseCache>(cache_dir);

    for (const auto& [name, spec] : config_.backends) {
        if (spec.type == BackendSpec::Type::Scripted) {
            ScriptedModelSpec model_spec;
            if (spec.scripted_inline) {
                model_spec = *spec.scripted_inline;
            } else {
                model_spec = ScriptedModelSpec::load(spec.scripted_spec_path);
            }
            backends_[name] = std::make_shared<ScriptedBackend>(model_spec, name);
        } else {
            HttpBackendOptions opts;
            opts.base_url = spec.base_url;
            opts.model = spec.model;
            opts.display_name = name;
            opts.max_concurrency = spec.max_concurrency;
            opts.temperature = spec.temperature;
            opts.max_tokens = spec.max_tokens;
            if (!spec.api_key_env.empty()) {
                const char* key = std::getenv(spec.api_key_env.c_str());
                if (!key) {
                    throw ConfigError("backend '" + name + "': environment variable " +
                                      spec.api_key_env + " is not set");
                }
                opts.api_key = key;
            }
            std::shared_ptr<ChatBackend> http = std::make_shared<HttpBackend>(std::move(opts));
            if (cache) http = std::make_shared<CachedBackend>(std::move(http), cache);
            backends_[name] = std::move(http);
        }
    }
}

RunStats ExperimentRunner::run(std::optional<std::size_t> stop_after_records) {
    const std::vector<BBQExample> examples = load_examples();
    build_backends();

    for (auto& [name, backend] : backends_) {
        if (auto* scripted = dynamic_cast<ScriptedBackend*>(backend.get())) {
            scripted->register_examples(examples);
        }
    }

    const FewshotLibrary shots_storage =
        config_.shots_dir.empty() ? FewshotLibrary{} : FewshotLibrary::load_dir(config_.shots_dir);
    const FewshotLibrary& shots =
        config_.shots_dir.empty() ? FewshotLibrary::builtin() : shots_storage;

    std::string manifest_digest;
    if (fs::exists(config_.manifest_path())) {
        std::ifstream in(config_.manifest_path());
        nlohmann::json mj;
        in >> mj;
        manifest_digest = SubsampleManifest::from_json(mj).digest();
    }

    std::set<std::string> done;
    if (fs::exists(config_.results_path()) && fs::file_size(config_.results_path()) > 0) {
        std::ifstream in(config_.results_path());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                continue;
            }
            if (j.value("type", "") == "header") continue;
            if (!j.contains("example_id") || !j.contains("method") || !j.contains("trial")) continue;
            try {
                const std::string key = resume_key(j.at("example_id").get<std::string>(),
                                                   MethodDescriptor::from_json(j.at("method")),
                                                   j.at("trial").get<int>());
                if (j.value("aborted", false)) {
                    done.erase(key);  // a failed cell is re-run
                } else {
                    done.insert(key);
                }
            } catch (const std::exception&) {
                continue;
            }
        }
    }

    struct Cell {
        const MethodSpec* method;
        const BBQExample* example;
        int trial;
        MethodDescriptor descriptor;
    };
    std::vector<Cell> cells;
    RunStats stats;
    for (const auto& m : config_.methods) {
        MethodDescriptor base{m.kind, m.responder, m.is_correction() ? m.feedback : "", m.debias};
        for (const auto& ex : examples) {
            for (int trial = 0; trial < config_.trials; ++trial) {
                stats.cells_total += 1;
                if (done.count(resume_key(ex.example_id, base, trial))) {
                    stats.cells_resumed += 1;
                    continue;
                }
                cells.push_back({&m, &ex, trial, base});
            }
        }
    }

    nlohmann::json header{{"type", "header"},
                          {"config_digest", config_.digest()},
                          {"manifest_digest", manifest_digest},
                          {"subsample_seed", config_.subsample.seed},
                          {"created_unix",
                           std::chrono::duration_cast<std::chrono::seconds>(
                               std::chrono::system_clock::now().time_since_epoch())
                               .count()},
                          {"version", "0.1.0"}};
    ResultsWriter writer(config_.results_path(), header);

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> written{0};
    std::atomic<long> failed{0};
    std::atomic<bool> halted{false};

    auto run_cell = [&](const Cell& cell) -> nlohmann::json {
        GenerationParams params;
        params.trial_index = cell.trial;
        ChatBackend& responder = *backends_.at(cell.method->responder);
        switch (cell.method->kind) {
            case MethodKind::NoCoT:
            case MethodKind::CoT: {
                try {
                    BaselineResult r = run_baseline(*cell.example, responder, cell.method->kind,
                                                    cell.method->debias, params);
                    return outcome_record(r.outcome, r.response_text, r.extraction, nullptr, false, "");
                } catch (const BackendError& e) {
                    Outcome o{cell.example->example_id, cell.example->category, cell.descriptor,
                              cell.trial, Classification::Unparseable};
                    return outcome_record(o, "", AnswerExtraction{}, nullptr, true, e.what());
                }
            }
            case MethodKind::SelfConsistency: {
                try {
                    SelfConsistencyResult r = run_self_consistency(
                        *cell.example, responder, cell.method->debias, config_.self_consistency_k,
                        params);
                    return outcome_record(r.outcome, r.samples.front().response_text,
                                          r.samples.front().extraction, &r.samples, false, "");
                } catch (const BackendError& e) {
                    Outcome o{cell.example->example_id, cell.example->category, cell.descriptor,
                              cell.trial, Classification::Unparseable};
                    return outcome_record(o, "", AnswerExtraction{}, nullptr, true, e.what());
                }
            }
            case MethodKind::SameModel:
            case MethodKind::CrossModel: {
                ChatBackend& feedbacker = *backends_.at(cell.method->feedback);
                LoopOptions opts{config_.max_iterations, config_.score_final_round};
                CorrectionTranscript tr = run_self_correction(
                    *cell.example, responder, feedbacker,
                    cell.method->kind == MethodKind::SameModel ? CorrectionMode::SameModel
                                                               : CorrectionMode::CrossModel,
                    cell.method->debias, shots, params, opts);
                return transcript_to_json(tr);
            }
        }
        throw ConfigError("unreachable method kind");
    };

    auto worker = [&] {
        for (;;) {
            if (halted.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            nlohmann::json record;
            try {
                record = run_cell(cell);
            } catch (const std::exception& e) {
                Outcome o{cell.example->example_id, cell.example->category, cell.descriptor,
                          cell.trial, Classification::Unparseable};
                record = outcome_record(o, "", AnswerExtraction{}, nullptr, true, e.what());
            }
            if (record.value("aborted", false)) failed.fetch_add(1);
            writer.write(record);
            const std::size_t total = written.fetch_add(1) + 1;
            if (stop_after_records && total >= *stop_after_records) halted.store(true);
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(config_.concurrency),
                              std::max<std::size_t>(cells.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    stats.cells_run = static_cast<long>(written.load());
    stats.cells_failed = failed.load();
    stats.records_written = written.load();
    return stats;
}

SubsampleManifest write_subsample(const ExperimentConfig& config) {
    RoleOverrides overrides;
    const RoleOverrides* ov = nullptr;
    if (!config.override_map.empty()) {
        overrides = RoleOverrides::load(config.override_map);
        ov = &overrides;
    }
    auto records = load_bbq_records(config.dataset_path, config.categories, ov);

    std::vector<BBQExample> examples;
    examples.reserve(records.size());
    for (const auto& r : records) examples.push_back(r.example);

    const auto mask = subsample_mask(examples, config.subsample);
    const SubsampleManifest manifest = make_subsample_manifest(examples, mask, config.subsample);

    fs::create_directories(fs::path(config.subset_path()).parent_path());
    std::ofstream subset(config.subset_path(), std::ios::trunc);
    if (!subset) throw DataError("cannot write subset file: " + config.subset_path());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (mask[i]) subset << augment_with_roles(records[i]).dump() << "\n";
    }

    std::ofstream mf(config.manifest_path(), std::ios::trunc);
    if (!mf) throw DataError("cannot write manifest file: " + config.manifest_path());
    mf << manifest.to_json().dump(2) << "\n";
    return manifest;
}

}  // namespace selfcorr
