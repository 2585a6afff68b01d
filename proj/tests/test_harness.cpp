#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vfl/cli.hpp"
#include "vfl/errors.hpp"
#include "vfl/harness.hpp"

using namespace vfl;
using namespace vfl::harness;
namespace fs = std::filesystem;

namespace {

const char* small_yaml = R"(
name: small
seed: 3
repetitions: 2
dataset: {kind: synthetic, n: 300, d: 12, classes: 4, separation: 5.0}
model: {hidden: [16, 8], cut: -2}
training: {parties: 2, epochs: 3, batch_size: 32, lr: 0.05}
attacks: {run: [cluster, completion], completion_epochs: 5}
mi_profile: {enabled: true, bins: 5}
)";

ScenarioConfig small_config() { return parse_scenarios(small_yaml).front(); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("vflsim_harness_" + name); }

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = cli::cli_main(args, out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("scenario parsing") {
    const auto c = small_config();
    CHECK(c.name == "small");
    CHECK(c.seed == 3);
    CHECK(c.repetitions == 2);
    CHECK(c.dataset.n == 300);
    CHECK(c.hidden == std::vector<std::size_t>{16, 8});
    CHECK(c.n_parties == 2);
    CHECK(c.attacks.finetune.epochs == 5);
    CHECK(c.mi.enabled);
    CHECK(c.mi.bins == 5);

    const auto defaults = parse_scenarios("name: d\n").front();
    CHECK(defaults.epochs == 30);
    CHECK(defaults.cut_pos == -2);
    CHECK(defaults.task == "original");
    CHECK(defaults.attacks.aux_per_class == 10);

    const auto list = parse_scenarios(R"(
training: {parties: 2, epochs: 4}
defenses: [{kind: grad_clip, max_norm: 2.0}, {kind: rle_labels}]
scenarios:
  - {name: a}
  - {name: b, training: {epochs: 7}, defenses: []}
)");
    REQUIRE(list.size() == 2);
    CHECK(list[0].epochs == 4);
    CHECK(list[1].epochs == 7);
    CHECK(list[1].n_parties == 2);
    REQUIRE(list[0].defenses.size() == 2);
    CHECK(std::get<defense::GradClip>(list[0].defenses[0].params).max_norm == 2.0);
    CHECK(std::get<defense::RleLabels>(list[0].defenses[1].params).extra_dims == extra_dims_from_task);
    CHECK(list[1].defenses.empty());
}

TEST_CASE("scenario parsing errors") {
    CHECK_THROWS_AS(parse_scenarios("nmae: typo\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("training: {epochz: 3}\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("training: {epochs: many}\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("defenses: [{kind: shield}]\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("repetitions: 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("model: {cut: -9}\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("attacks: {run: [spectral]}\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("defenses: [{kind: cae_labels}, {kind: rle_labels}]\n"), ConfigError);
    CHECK_THROWS_AS(parse_scenarios("a: [1, 2\n"), FormatError);
    CHECK_THROWS_AS(load_scenarios(temp_path("missing.yaml")), IoError);
}

TEST_CASE("summary statistics use the sample standard deviation") {
    const Stat s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.std == round6(1.2909944487358056));
    CHECK(summarize({0.7}).std == 0.0);
}

TEST_CASE("six significant digits") {
    CHECK(round6(0.123456789) == 0.123457);
    CHECK(round6(123456789.0) == 123457000.0);
    CHECK(round6(0.0) == 0.0);
}

TEST_CASE("run_scenario records and determinism") {
    const auto cfg = small_config();
    const Report a = run_scenario(cfg);
    REQUIRE(a.records.size() == 2);
    CHECK(a.records[0].seed == 3);
    CHECK(a.records[1].seed == 4);
    CHECK(a.c_orig == 4);
    CHECK(a.c_new == 4);
    for (const auto& r : a.records) {
        CHECK(r.attacks.size() == 2);
        REQUIRE(r.mi.has_value());
        CHECK(r.mi->parties.size() == 2);
        CHECK(r.mi->top.size() == 2);
        CHECK(r.mta >= 0.0);
        CHECK(r.mta <= 1.0);
    }
    CHECK(a.attack("cluster").raw_acc.mean ==
          doctest::Approx((a.records[0].attacks[0].raw_acc + a.records[1].attacks[0].raw_acc) / 2));
    CHECK_THROWS_AS(a.attack("gradient"), ConfigError);

    const Report b = run_scenario(cfg);
    CHECK(to_json({a}).dump() == to_json({b}).dump());
    CHECK(render_csv({a}) == render_csv({b}));

    const auto parallel = run_scenarios({cfg, cfg}, 2);
    CHECK(to_json(parallel).dump() == to_json({a, a}).dump());
}

TEST_CASE("task reassignment and defenses run through the harness") {
    auto cfg = small_config();
    cfg.task = "task1";
    cfg.defenses = {{defense::RleLabels{extra_dims_from_task, 0.1}}, {defense::GradCompress{0.5}}};
    cfg.attacks.run = {"cluster", "gradient"};
    const Report r = run_scenario(cfg);
    CHECK(r.c_orig == 4);
    CHECK(r.c_new == 2);
    CHECK(r.records[0].attacks[1].attack == "gradient");
    for (const auto& rec : r.records)
        for (const auto& a : rec.attacks) CHECK(a.lift_acc == doctest::Approx(a.raw_acc * 2.0 / 4.0).epsilon(1e-5));
}

TEST_CASE("JSON reports round-trip") {
    const Report a = run_scenario(small_config());
    const auto j = to_json({a});
    const auto back = reports_from_json(j);
    REQUIRE(back.size() == 1);
    // Reports carry 6 significant digits, so a second round trip is exact.
    CHECK(reports_from_json(to_json(back))[0].records == back[0].records);
    CHECK(back[0].records[1].mta == round6(a.records[1].mta));
    CHECK(back[0].scenario == a.scenario);
    CHECK(to_json(back).dump() == j.dump());
    CHECK(j.dump().find("wall_time") == std::string::npos);
    CHECK(to_json({a}, true).dump().find("wall_time") != std::string::npos);
}

TEST_CASE("CSV layout") {
    const Report a = run_scenario(small_config());
    const std::string csv = render_csv({a});
    std::istringstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == csv_header);
    // 2 repetitions x 2 attacks, then mean and std rows per attack.
    CHECK(count_lines(csv) == 1 + 2 * 2 + 2 * 2);
    CHECK(csv.find("small,mean,") != std::string::npos);
    CHECK(csv.find("small,std,") != std::string::npos);

    const auto path = temp_path("report.csv");
    write_report({a}, path, Format::csv);
    CHECK(slurp(path) == csv);
    CHECK_THROWS_AS(write_report({a}, temp_path("no_dir") / "x" / "r.csv", Format::csv), IoError);
    CHECK(format_for("x.csv", "") == Format::csv);
    CHECK(format_for("x.json", "") == Format::json);
    CHECK(format_for("x.csv", "json") == Format::json);
    CHECK(format_for("x.txt", "") == Format::json);
    CHECK_THROWS_AS(format_for("x.csv", "xml"), ConfigError);
}

TEST_CASE("missing IDX files are a format error naming the scenario") {
    auto cfg = small_config();
    cfg.name = "idx-run";
    cfg.dataset.kind = "idx";
    cfg.dataset.images = temp_path("nope-images.idx");
    cfg.dataset.labels = temp_path("nope-labels.idx");
    try {
        run_scenario(cfg);
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("idx-run") != std::string::npos);
    }
}

TEST_CASE("chain JSON round-trip") {
    const auto chain = info::random_chain(5, 2, 2, 2, 3);
    const auto back = chain_from_json(chain_to_json(chain));
    CHECK(back.lumping == chain.lumping);
    CHECK(back.to_label == chain.to_label);
    CHECK(back.branches[1].transitions[1] == chain.branches[1].transitions[1]);
    CHECK_THROWS_AS(chain_from_json(nlohmann::json::parse(R"({"branches": []})")), FormatError);
}

TEST_CASE("cli: list-tasks and usage errors") {
    std::string out, err;
    CHECK(run_cli({"list-tasks"}, &out) == cli::exit_ok);
    for (const char* name : {"original", "task1", "task2", "task3"}) CHECK(out.find(name) != std::string::npos);
    CHECK(run_cli({"list-tasks", "--classes", "6"}, &out) == cli::exit_ok);
    CHECK(out.find("6 -> 3") != std::string::npos);

    CHECK(run_cli({"run", "missing.toml"}, &out, &err) == cli::exit_validation);
    CHECK(err.find("missing.toml") != std::string::npos);
    CHECK(run_cli({"list-tasks", "--bogus"}, &out, &err) == cli::exit_validation);
    CHECK(err.find("--bogus") != std::string::npos);
    CHECK(run_cli({}, &out, &err) == cli::exit_validation);
    CHECK_FALSE(err.empty());
}

TEST_CASE("cli: mi-chain") {
    std::string out, err;
    CHECK(run_cli({"mi-chain", "--random", "3"}, &out) == cli::exit_ok);
    CHECK(out.find("monotone: yes") != std::string::npos);

    const auto path = temp_path("chain.json");
    std::ofstream(path) << chain_to_json(info::random_chain(9, 3, 3, 2, 4)).dump();
    CHECK(run_cli({"mi-chain", path.string()}, &out) == cli::exit_ok);
    CHECK(out.find("branch 2:") != std::string::npos);

    const auto bad = temp_path("chain_bad.json");
    std::ofstream(bad) << R"({"branches": [{"input": [0.5, 0.6], "transitions": []}], "lumping": [[1, 0], [0, 1]],
                             "top_transitions": [], "to_label": [[1, 0], [0, 1]]})";
    CHECK(run_cli({"mi-chain", bad.string()}, &out, &err) == cli::exit_validation);
    std::ofstream(bad) << "{not json";
    CHECK(run_cli({"mi-chain", bad.string()}, &out, &err) == cli::exit_validation);
}

TEST_CASE("cli: run writes reports and applies overrides") {
    const auto cfg_path = temp_path("small.yaml");
    std::ofstream(cfg_path) << small_yaml;
    const auto out_path = temp_path("small-out.csv");
    fs::remove(out_path);
    std::string out;
    CHECK(run_cli({"run", cfg_path.string(), "--out", out_path.string(), "--seed", "11"}, &out) == cli::exit_ok);
    const std::string csv = slurp(out_path);
    CHECK(csv.rfind(csv_header, 0) == 0);
    CHECK(csv.find("small,11,") != std::string::npos);
    CHECK(csv.find("small,12,") != std::string::npos);

    CHECK(run_cli({"run", cfg_path.string(), "--format", "json"}, &out) == cli::exit_ok);
    const auto j = nlohmann::json::parse(out);
    CHECK(j["reports"].size() == 1);
    CHECK(run_cli({"run", cfg_path.string(), "--format", "xml"}, &out) == cli::exit_validation);

    const auto diverge = temp_path("diverge.yaml");
    std::ofstream(diverge) << "dataset: {n: 500}\ntraining: {lr: 1000000}\nattacks: {run: []}\n";
    std::string err;
    CHECK(run_cli({"run", diverge.string()}, &out, &err) == cli::exit_runtime);
    CHECK(err.find("diverged") != std::string::npos);
}

TEST_CASE("cli: bundled demo scenario") {
    const auto out_path = temp_path("demo-report.json");
    fs::remove(out_path);
    const fs::path demo = fs::path(VFLSIM_SOURCE_DIR) / "configs" / "demo.yaml";
    CHECK(run_cli({"run", demo.string(), "--out", out_path.string()}) == cli::exit_ok);
    REQUIRE(fs::exists(out_path));
    const auto reports = reports_from_json(nlohmann::json::parse(slurp(out_path)));
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].records[0].mta >= 0.90);
}

TEST_CASE("bundled configs parse") {
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(VFLSIM_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".yaml") continue;
        ++files;
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(load_scenarios(entry.path()));
    }
    CHECK(files >= 5);
}
