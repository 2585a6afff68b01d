#include "vfl/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "vfl/data.hpp"
#include "vfl/errors.hpp"
#include "vfl/harness.hpp"
#include "vfl/info.hpp"

namespace vfl::cli {

namespace {

constexpr double chain_tolerance = 1e-10;

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_path,
                const std::string& format, std::size_t threads, bool timings, std::ostream& out) {
    auto scenarios = harness::load_scenarios(config_path);
    for (auto& s : scenarios) {
        if (seed) s.seed = *seed;
        if (!out_path.empty()) s.output = out_path;
        if (!format.empty()) s.format = format;
    }
    const auto reports = harness::run_scenarios(scenarios, threads);

    // Scenarios sharing an output path land in the same file, in config order.
    std::vector<std::pair<std::filesystem::path, std::vector<harness::Report>>> files;
    std::vector<harness::Report> to_stdout;
    std::string stdout_format = format;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& path = scenarios[i].output;
        if (path.empty()) {
            to_stdout.push_back(reports[i]);
            if (stdout_format.empty()) stdout_format = scenarios[i].format;
            continue;
        }
        auto it = std::find_if(files.begin(), files.end(), [&](const auto& f) { return f.first == path; });
        if (it == files.end()) files.push_back({path, {reports[i]}});
        else it->second.push_back(reports[i]);
    }
    for (const auto& [path, group] : files) {
        const auto* cfg = &scenarios.front();
        for (const auto& s : scenarios)
            if (s.output == path) cfg = &s;
        harness::write_report(group, path, harness::format_for(path, cfg->format));
        out << "wrote " << path.string() << '\n';
    }
    if (!to_stdout.empty()) {
        if (stdout_format == "csv")
            out << harness::render_csv(to_stdout);
        else
            out << harness::to_json(to_stdout, timings).dump(2) << '\n';
    }
    return exit_ok;
}

int mi_chain_command(const std::string& chain_path, std::optional<std::uint64_t> random_seed, std::ostream& out) {
    info::MarkovChainSpec chain;
    if (random_seed) {
        chain = info::random_chain(*random_seed, 2, 3, 2, 4);
    } else {
        std::ifstream in(chain_path);
        if (!in) throw IoError("cannot open chain file '" + chain_path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("chain file: ") + e.what());
        }
        chain = harness::chain_from_json(j);
    }
    const auto seq = info::chain_mi_sequence(chain);

    bool ok = true;
    out << std::setprecision(10);
    for (std::size_t i = 0; i < seq.branches.size(); ++i) {
        const auto& b = seq.branches[i];
        out << "branch " << i << ":";
        for (double v : b) out << ' ' << v;
        out << '\n';
        for (std::size_t j = 1; j < b.size(); ++j) ok &= b[j - 1] <= b[j] + chain_tolerance;
        ok &= b.back() <= seq.top.front() + chain_tolerance;
    }
    out << "top:";
    for (double v : seq.top) out << ' ' << v;
    out << '\n';
    for (std::size_t j = 1; j < seq.top.size(); ++j) ok &= seq.top[j - 1] <= seq.top[j] + chain_tolerance;
    out << (ok ? "monotone: yes" : "monotone: NO") << '\n';
    return ok ? exit_ok : exit_runtime;
}

int list_tasks_command(std::size_t classes, std::ostream& out) {
    const auto kind = classes == 10 ? data::TaskKind::mnist_like_10 : data::TaskKind::generic;
    for (const auto& t : data::builtin_task_specs(kind, classes)) {
        out << t.name << " (" << t.c_orig << " -> " << t.c_new << "):";
        for (int m : t.mapping) out << ' ' << m;
        out << '\n';
    }
    return exit_ok;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Vertical federated learning simulator: split training, label inference attacks, defenses"};
    app.name("vflsim");
    app.require_subcommand(1);

    std::string config_path, out_path, format;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    bool timings = false;
    auto* run = app.add_subcommand("run", "Run the scenarios of a YAML config file");
    run->add_option("config", config_path, "Scenario config file")->required();
    run->add_option("--seed", seed, "Override the base seed of every scenario");
    run->add_option("--out", out_path, "Write all reports to this file");
    run->add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}));
    run->add_option("--threads", threads, "Maximum scenarios run concurrently")->check(CLI::PositiveNumber);
    run->add_flag("--timings", timings, "Include wall times in JSON printed to stdout");

    std::string chain_path;
    std::optional<std::uint64_t> random_seed;
    auto* chain = app.add_subcommand("mi-chain", "Exact MI along a lumped Markov chain and monotonicity check");
    chain->add_option("chain", chain_path, "Chain description (JSON)");
    chain->add_option("--random", random_seed, "Check a seeded random chain instead of a file");

    std::size_t classes = 10;
    auto* tasks = app.add_subcommand("list-tasks", "Print the built-in task reassignments");
    tasks->add_option("--classes", classes, "Class count of the original task")->check(CLI::Range(2, 1000));

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return exit_validation;
    }

    try {
        if (*run) return run_command(config_path, seed, out_path, format, threads, timings, out);
        if (*chain) {
            if (chain_path.empty() && !random_seed) {
                err << "error: mi-chain needs a chain file or --random\n";
                return exit_validation;
            }
            return mi_chain_command(chain_path, random_seed, out);
        }
        return list_tasks_command(classes, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_validation;
    } catch (const IoError& e) {
        err << "file error: " << e.what() << '\n';
        return exit_validation;
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return exit_validation;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_validation;
    } catch (const ShapeError& e) {
        err << "shape error: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_runtime;
    }
}

}  // namespace vfl::cli
