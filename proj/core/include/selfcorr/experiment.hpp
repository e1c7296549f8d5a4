#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "selfcorr/bbq.hpp"
#include "selfcorr/cache.hpp"
#include "selfcorr/chat.hpp"
#include "selfcorr/engine.hpp"
#include "selfcorr/scripted.hpp"

namespace selfcorr {

/// One entry of the config's backend table: an OpenAI-compatible endpoint or
/// a scripted model spec.
struct BackendSpec {
    enum class Type { Http, Scripted };

    std::string name;
    Type type = Type::Scripted;

    // http
    std::string base_url;
    std::string model;
    std::string api_key_env;  // credential comes from the environment, never the file
    int max_concurrency = 4;
    std::optional<double> temperature;
    std::optional<int> max_tokens;

    // scripted
    std::string scripted_spec_path;
    std::optional<ScriptedModelSpec> scripted_inline;

    nlohmann::json to_json() const;
};

struct MethodSpec {
    MethodKind kind = MethodKind::CoT;
    std::string responder;  // backend name
    std::string feedback;   // backend name; corrections only
    bool debias = false;

    bool is_correction() const {
        return kind == MethodKind::SameModel || kind == MethodKind::CrossModel;
    }
    nlohmann::json to_json() const;
};

struct ExperimentConfig {
    std::string dataset_path;
    std::vector<std::string> categories;  // defaults to the nine independent ones
    SubsampleParams subsample;
    std::vector<MethodSpec> methods;
    int trials = 3;
    int max_iterations = 3;
    int self_consistency_k = 4;
    bool score_final_round = true;
    std::map<std::string, BackendSpec> backends;
    int concurrency = 4;
    std::string output_dir;
    std::string cache_dir;      // SELFCORR_CACHE_DIR env var overrides
    std::string shots_dir;      // empty: use the built-in banks
    std::string override_map;   // optional role-override file

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
    void validate() const;
    nlohmann::json to_json() const;
    /// Digest over everything that affects results (credentials excluded).
    std::string digest() const;

    std::string subset_path() const;
    std::string manifest_path() const;
    std::string results_path() const;
};

/// Records parsed back from a results file. Later records supersede earlier
/// ones with the same (example, method, trial) key, so re-run cells win.
struct ResultsData {
    nlohmann::json header;
    std::vector<Outcome> outcomes;                  // baselines + self-consistency
    std::vector<CorrectionTranscript> transcripts;  // correction methods
    std::set<std::string> aborted_keys;             // cells whose latest record failed
    std::size_t record_count = 0;
};

std::string resume_key(const std::string& example_id, const MethodDescriptor& method, int trial);

nlohmann::json transcript_to_json(const CorrectionTranscript& transcript);
CorrectionTranscript transcript_from_json(const nlohmann::json& j);

/// Tolerates a truncated final line (interrupted writer).
ResultsData read_results(const std::string& path);

/// Append-only results writer; one JSON record per line, flushed per record.
class ResultsWriter {
public:
    /// Opens for append. Writes the header when the file is new; otherwise
    /// verifies the stored config digest matches.
    ResultsWriter(const std::string& path, const nlohmann::json& header);

    void write(const nlohmann::json& record);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::mutex mu_;
    std::unique_ptr<std::ofstream> out_;
};

struct RunStats {
    long cells_total = 0;
    long cells_resumed = 0;  // already complete in the results file
    long cells_run = 0;
    long cells_failed = 0;
    std::size_t records_written = 0;
};

/// Executes every (method, example, trial) cell not already present in the
/// results file, work-stealing over cells with the configured concurrency
/// and a single writer. Content is deterministic for scripted backends, so
/// interrupted-and-resumed runs converge to the uninterrupted result.
class ExperimentRunner {
public:
    explicit ExperimentRunner(ExperimentConfig config);
    /// Test constructor: run over the given examples, skipping subset loading.
    ExperimentRunner(ExperimentConfig config, std::vector<BBQExample> examples);

    /// `stop_after_records` simulates an interrupted run in tests: scheduling
    /// halts once that many records were written.
    RunStats run(std::optional<std::size_t> stop_after_records = std::nullopt);

    /// Backend instances, keyed by config name (available after run()).
    const std::map<std::string, std::shared_ptr<ChatBackend>>& backends() const { return backends_; }

private:
    void build_backends();
    std::vector<BBQExample> load_examples() const;

    ExperimentConfig config_;
    std::optional<std::vector<BBQExample>> injected_examples_;
    std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
};

/// Balanced-subsample driver behind `selfcorr subsample`: writes the subset
/// (upstream schema + role indices) and the manifest, returns the manifest.
SubsampleManifest write_subsample(const ExperimentConfig& config);

}  // namespace selfcorr
