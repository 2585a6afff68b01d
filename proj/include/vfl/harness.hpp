#pragma once

// Config-driven experiment runner: data -> partition -> task reassignment ->
// split training -> attacks -> optional MI profile, repeated over seeds.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfl/attacks.hpp"
#include "vfl/defenses.hpp"
#include "vfl/info.hpp"

namespace vfl::harness {

struct DatasetConfig {
    std::string kind = "synthetic";  ///< "synthetic" or "idx"
    std::size_t n = 2000;
    std::size_t d = 20;
    std::size_t classes = 10;
    double separation = 6.0;
    std::filesystem::path images;
    std::filesystem::path labels;
    std::size_t limit = 0;
};

struct AttackConfig {
    std::vector<std::string> run{"cluster", "completion"};
    std::size_t party = 0;
    std::size_t aux_per_class = 10;
    attack::FineTuneParams finetune;
    std::size_t gradient_epoch = 0;
};

struct MiConfig {
    bool enabled = false;
    std::size_t bins = info::default_bins;
};

/// RleLabels::extra_dims value meaning "the task's class count".
inline constexpr std::size_t extra_dims_from_task = static_cast<std::size_t>(-1);

struct ScenarioConfig {
    std::string name = "scenario";
    DatasetConfig dataset;
    std::vector<std::size_t> hidden{64, 64, 32, 32, 16};
    int cut_pos = -2;
    std::size_t n_parties = 2;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 0.05;
    std::uint64_t seed = 1;
    /// RLE entries with extra_dims unset in the file hold extra_dims_from_task.
    std::vector<defense::DefenseConfig> defenses;
    std::string task = "original";
    AttackConfig attacks;
    MiConfig mi;
    std::size_t repetitions = 1;
    std::filesystem::path output;
    std::string format;  ///< "csv" or "json"; empty = from the output extension

    void validate() const;
};

struct Stat {
    double mean = 0.0;
    double std = 0.0;  ///< sample std (n - 1); 0 for a single repetition
};

Stat summarize(const std::vector<double>& values);

struct AttackRecord {
    std::string attack;
    double raw_acc = 0.0;
    double lift_acc = 0.0;

    bool operator==(const AttackRecord&) const = default;
};

struct MiSeries {
    std::vector<double> party_inputs;
    std::vector<std::vector<double>> parties;
    std::vector<double> top;

    bool operator==(const MiSeries&) const = default;
};

struct RepetitionRecord {
    std::string scenario;
    std::uint64_t seed = 0;
    double mta = 0.0;
    std::vector<AttackRecord> attacks;
    std::optional<MiSeries> mi;
    double wall_time_s = 0.0;  ///< not serialized unless timings are requested

    bool operator==(const RepetitionRecord&) const = default;
};

struct AttackAggregate {
    std::string attack;
    Stat raw_acc;
    Stat lift_acc;
};

struct Report {
    std::string scenario;
    std::string task;
    std::size_t c_orig = 0;
    std::size_t c_new = 0;
    std::vector<RepetitionRecord> records;
    Stat mta;
    std::vector<AttackAggregate> attacks;

    const AttackAggregate& attack(const std::string& name) const;
};

/// Reads a YAML scenario file. A top-level `scenarios` list expands into one
/// scenario per entry, each deep-merged over the remaining top-level keys.
std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path);
std::vector<ScenarioConfig> parse_scenarios(const std::string& yaml_text);

Report run_scenario(const ScenarioConfig& config);

/// Runs scenarios on up to `threads` workers; results keep the input order.
std::vector<Report> run_scenarios(const std::vector<ScenarioConfig>& configs, std::size_t threads = 1);

enum class Format { csv, json };

Format format_for(const std::filesystem::path& path, const std::string& requested);

/// CSV header of write_report.
inline constexpr const char* csv_header = "scenario,seed,mta,attack,raw_acc,lift_acc";

std::string render_csv(const std::vector<Report>& reports);
nlohmann::json to_json(const std::vector<Report>& reports, bool include_timing = false);
std::vector<Report> reports_from_json(const nlohmann::json& j);

/// Writes one or more reports. Throws IoError when the file cannot be written.
void write_report(const std::vector<Report>& reports, const std::filesystem::path& path, Format format);

/// Rounds to 6 significant digits, the precision used in every report.
double round6(double v);

/// Parses the JSON chain description used by `mi-chain`.
info::MarkovChainSpec chain_from_json(const nlohmann::json& j);
nlohmann::json chain_to_json(const info::MarkovChainSpec& chain);

}  // namespace vfl::harness
