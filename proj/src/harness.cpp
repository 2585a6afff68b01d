#include "vfl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "vfl/engine.hpp"
#include "vfl/errors.hpp"

namespace vfl::harness {

namespace {

// ---- config parsing -------------------------------------------------------

YAML::Node merge(const YAML::Node& base, const YAML::Node& over) {
    if (!base.IsMap() || !over.IsMap()) return YAML::Clone(over);
    YAML::Node out = YAML::Clone(base);
    for (const auto& kv : over) {
        const auto key = kv.first.as<std::string>();
        out[key] = out[key] ? merge(out[key], kv.second) : YAML::Clone(kv.second);
    }
    return out;
}

void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
T get(const YAML::Node& node, const char* key, T fallback) {
    if (!node || !node[key]) return fallback;
    try {
        return node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(std::string("key '") + key + "' has the wrong type");
    }
}

defense::DefenseConfig parse_defense(const YAML::Node& node, std::optional<std::size_t>& rle_extra) {
    if (!node.IsMap() || !node["kind"]) throw ConfigError("defenses: each entry needs a 'kind'");
    const auto kind = node["kind"].as<std::string>();
    defense::DefenseConfig d;
    if (kind == "grad_clip") {
        check_keys(node, "defense grad_clip", {"kind", "max_norm"});
        d.params = defense::GradClip{get(node, "max_norm", 1.0)};
    } else if (kind == "dp_gaussian") {
        check_keys(node, "defense dp_gaussian", {"kind", "clip", "sigma"});
        d.params = defense::DpGaussian{get(node, "clip", 1.0), get(node, "sigma", 0.5)};
    } else if (kind == "grad_compress") {
        check_keys(node, "defense grad_compress", {"kind", "keep_ratio"});
        d.params = defense::GradCompress{get(node, "keep_ratio", 0.25)};
    } else if (kind == "cae_labels") {
        check_keys(node, "defense cae_labels", {"kind", "alpha", "permutation_seed"});
        d.params = defense::CaeLabels{get(node, "alpha", 0.2), get<std::uint64_t>(node, "permutation_seed", 0)};
    } else if (kind == "rle_labels") {
        check_keys(node, "defense rle_labels", {"kind", "extra_dims", "noise_scale"});
        if (node["extra_dims"]) rle_extra = get<std::size_t>(node, "extra_dims", 0);
        d.params = defense::RleLabels{rle_extra.value_or(0), get(node, "noise_scale", 0.1)};
    } else {
        throw ConfigError("unknown defense kind '" + kind + "'");
    }
    return d;
}

struct ParsedScenario {
    ScenarioConfig config;
    std::vector<bool> rle_extra_given;  // per defense entry
};

ParsedScenario parse_scenario(const YAML::Node& root) {
    check_keys(root, "scenario", {"name", "seed", "repetitions", "task", "dataset", "model", "training", "defenses",
                                  "attacks", "mi_profile", "output"});
    ScenarioConfig c;
    ParsedScenario parsed;
    c.name = get<std::string>(root, "name", c.name);
    c.seed = get<std::uint64_t>(root, "seed", c.seed);
    c.repetitions = get<std::size_t>(root, "repetitions", c.repetitions);
    c.task = get<std::string>(root, "task", c.task);

    if (const auto ds = root["dataset"]) {
        check_keys(ds, "dataset", {"kind", "n", "d", "classes", "separation", "images", "labels", "limit"});
        c.dataset.kind = get<std::string>(ds, "kind", c.dataset.kind);
        c.dataset.n = get<std::size_t>(ds, "n", c.dataset.n);
        c.dataset.d = get<std::size_t>(ds, "d", c.dataset.d);
        c.dataset.classes = get<std::size_t>(ds, "classes", c.dataset.classes);
        c.dataset.separation = get<double>(ds, "separation", c.dataset.separation);
        c.dataset.images = get<std::string>(ds, "images", "");
        c.dataset.labels = get<std::string>(ds, "labels", "");
        c.dataset.limit = get<std::size_t>(ds, "limit", 0);
    }
    if (const auto m = root["model"]) {
        check_keys(m, "model", {"hidden", "cut"});
        c.hidden = get<std::vector<std::size_t>>(m, "hidden", c.hidden);
        c.cut_pos = get<int>(m, "cut", c.cut_pos);
    }
    if (const auto t = root["training"]) {
        check_keys(t, "training", {"parties", "epochs", "batch_size", "lr"});
        c.n_parties = get<std::size_t>(t, "parties", c.n_parties);
        c.epochs = get<std::size_t>(t, "epochs", c.epochs);
        c.batch_size = get<std::size_t>(t, "batch_size", c.batch_size);
        c.lr = get<double>(t, "lr", c.lr);
    }
    if (const auto ds = root["defenses"]) {
        if (!ds.IsSequence()) throw ConfigError("defenses: expected a list");
        for (const auto& d : ds) {
            std::optional<std::size_t> extra;
            c.defenses.push_back(parse_defense(d, extra));
            parsed.rle_extra_given.push_back(extra.has_value());
        }
    }
    if (const auto a = root["attacks"]) {
        check_keys(a, "attacks", {"run", "party", "aux_per_class", "completion_epochs", "completion_lr",
                                  "completion_batch_size", "gradient_epoch"});
        c.attacks.run = get<std::vector<std::string>>(a, "run", c.attacks.run);
        c.attacks.party = get<std::size_t>(a, "party", c.attacks.party);
        c.attacks.aux_per_class = get<std::size_t>(a, "aux_per_class", c.attacks.aux_per_class);
        c.attacks.finetune.epochs = get<std::size_t>(a, "completion_epochs", c.attacks.finetune.epochs);
        c.attacks.finetune.lr = get<double>(a, "completion_lr", c.attacks.finetune.lr);
        c.attacks.finetune.batch_size = get<std::size_t>(a, "completion_batch_size", c.attacks.finetune.batch_size);
        c.attacks.gradient_epoch = get<std::size_t>(a, "gradient_epoch", c.attacks.gradient_epoch);
    }
    if (const auto mi = root["mi_profile"]) {
        check_keys(mi, "mi_profile", {"enabled", "bins"});
        c.mi.enabled = get<bool>(mi, "enabled", c.mi.enabled);
        c.mi.bins = get<std::size_t>(mi, "bins", c.mi.bins);
    }
    if (const auto o = root["output"]) {
        check_keys(o, "output", {"path", "format"});
        c.output = get<std::string>(o, "path", "");
        c.format = get<std::string>(o, "format", "");
    }
    parsed.config = std::move(c);
    return parsed;
}

std::vector<ScenarioConfig> expand(const YAML::Node& root) {
    if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
    std::vector<YAML::Node> nodes;
    if (const auto list = root["scenarios"]) {
        if (!list.IsSequence() || list.size() == 0) throw ConfigError("config: 'scenarios' must be a nonempty list");
        YAML::Node base = YAML::Clone(root);
        base.remove("scenarios");
        for (const auto& s : list) nodes.push_back(merge(base, s));
    } else {
        nodes.push_back(root);
    }
    std::vector<ScenarioConfig> out;
    for (const auto& n : nodes) {
        auto parsed = parse_scenario(n);
        for (std::size_t i = 0; i < parsed.config.defenses.size(); ++i) {
            auto* rle = std::get_if<defense::RleLabels>(&parsed.config.defenses[i].params);
            if (rle && !parsed.rle_extra_given[i]) rle->extra_dims = extra_dims_from_task;
        }
        parsed.config.validate();
        out.push_back(std::move(parsed.config));
    }
    return out;
}

// ---- running ---------------------------------------------------------------

template <class E>
[[noreturn]] void rethrow_as(const E&, const std::string& msg) {
    throw E(msg);
}

[[noreturn]] void rethrow_with_context(const std::string& scenario) {
    const std::string prefix = "scenario '" + scenario + "': ";
    try {
        throw;
    } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(e.epoch(), prefix + e.detail());
    } catch (const ConfigError& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const ShapeError& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const DataError& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const FormatError& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const IoError& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const CapacityError& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const AttackInfeasible& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const AttackFailed& e) {
        rethrow_as(e, prefix + e.what());
    } catch (const Error& e) {
        throw Error(prefix + e.what());
    }
}

data::Dataset load_dataset(const DatasetConfig& dc, std::uint64_t seed) {
    if (dc.kind == "synthetic") return data::gen_synthetic(dc.n, dc.d, dc.classes, dc.separation, seed);
    try {
        return data::load_idx(dc.images, dc.labels, dc.limit);
    } catch (const IoError& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    }
}

RepetitionRecord run_repetition(const ScenarioConfig& c, const data::Dataset& original, const data::TaskSpec& task,
                                std::uint64_t seed) {
    const auto started = std::chrono::steady_clock::now();
    RepetitionRecord rec;
    rec.scenario = c.name;
    rec.seed = seed;

    auto pd = data::partition(data::reassign_task(original, task), c.n_parties, seed);

    engine::VflConfig vc;
    vc.split = {nn::mlp_spec(pd.base.dim(), c.hidden, task.c_new), c.cut_pos};
    vc.n_parties = c.n_parties;
    vc.epochs = c.epochs;
    vc.batch_size = c.batch_size;
    vc.lr = c.lr;
    vc.seed = seed;
    vc.defense_stack = c.defenses;
    for (auto& d : vc.defense_stack)
        if (auto* rle = std::get_if<defense::RleLabels>(&d.params); rle && rle->extra_dims == extra_dims_from_task)
            rle->extra_dims = task.c_new;
    const bool gradient_attack = std::find(c.attacks.run.begin(), c.attacks.run.end(), "gradient") != c.attacks.run.end();
    vc.trace_epochs = gradient_attack ? std::vector<std::size_t>{c.attacks.gradient_epoch} : std::vector<std::size_t>{};

    const auto trained = engine::train_vfl(vc, pd);
    rec.mta = round6(engine::evaluate_mta(trained.state, pd));

    if (!c.attacks.run.empty()) {
        const std::size_t p = c.attacks.party;
        const Matrix party_features = pd.party_features(p);
        const auto aux = attack::sample_auxiliary(party_features, pd.base.labels, task.c_new, c.attacks.aux_per_class,
                                                  derive_seed(seed, {0xA0}));
        const auto attack_seed = derive_seed(seed, {0xA7});
        for (const auto& name : c.attacks.run) {
            attack::AttackResult res;
            if (name == "cluster") {
                res = attack::cluster_lia(trained.traces[p].final_embeddings, task.c_new, aux, attack_seed);
            } else if (name == "completion") {
                res = attack::completion_lia(trained.state.bottom_models[p], aux, party_features, task.c_new,
                                             c.attacks.finetune, attack_seed);
            } else {
                res = attack::gradient_cluster_lia(trained.traces[p].gradients_at(c.attacks.gradient_epoch), task.c_new,
                                                   aux, attack_seed);
            }
            attack::score(res, pd.base.labels, task.c_new, task.c_orig);
            rec.attacks.push_back({name, round6(res.raw_accuracy), round6(res.lift_normalized_accuracy)});
        }
    }

    if (c.mi.enabled) {
        const auto profile = info::mi_profile(trained.state, pd, c.mi.bins);
        MiSeries s;
        for (const auto& e : profile.party_inputs) s.party_inputs.push_back(round6(e.value));
        for (const auto& party : profile.parties) {
            std::vector<double> v;
            for (const auto& e : party) v.push_back(round6(e.value));
            s.parties.push_back(std::move(v));
        }
        for (const auto& e : profile.top) s.top.push_back(round6(e.value));
        rec.mi = std::move(s);
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (repetitions == 0) throw ConfigError("scenario '" + name + "': repetitions must be >= 1");
    if (dataset.kind != "synthetic" && dataset.kind != "idx")
        throw ConfigError("scenario '" + name + "': dataset kind must be 'synthetic' or 'idx'");
    if (dataset.kind == "idx" && (dataset.images.empty() || dataset.labels.empty()))
        throw ConfigError("scenario '" + name + "': idx dataset needs 'images' and 'labels'");
    for (const auto& a : attacks.run)
        if (a != "cluster" && a != "completion" && a != "gradient")
            throw ConfigError("scenario '" + name + "': unknown attack '" + a + "'");
    if (attacks.party >= n_parties) throw ConfigError("scenario '" + name + "': attacking party does not exist");
    if (const auto total = static_cast<int>(hidden.size()) + 1; cut_pos > -1 || cut_pos <= -total)
        throw ConfigError("scenario '" + name + "': cut " + std::to_string(cut_pos) + " outside (-" +
                          std::to_string(total) + ", -1]");
    if (mi.bins < 2) throw ConfigError("scenario '" + name + "': mi bins must be >= 2");
    if (!format.empty() && format != "csv" && format != "json")
        throw ConfigError("scenario '" + name + "': format must be csv or json");
    for (const auto& d : defenses) d.validate();
    if (std::count_if(defenses.begin(), defenses.end(), [](const auto& d) {
            return d.point() == defense::InterceptionPoint::labels_at_active_party;
        }) > 1)
        throw ConfigError("scenario '" + name + "': at most one label defense may be stacked");
}

Stat summarize(const std::vector<double>& values) {
    Stat s;
    if (values.empty()) return s;
    const auto n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    s.mean = round6(s.mean);
    s.std = round6(s.std);
    return s;
}

const AttackAggregate& Report::attack(const std::string& name) const {
    for (const auto& a : attacks)
        if (a.attack == name) return a;
    throw ConfigError("report has no attack '" + name + "'");
}

std::vector<ScenarioConfig> parse_scenarios(const std::string& yaml_text) {
    try {
        return expand(YAML::Load(yaml_text));
    } catch (const YAML::Exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
}

std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenarios(ss.str());
}

Report run_scenario(const ScenarioConfig& config) {
    try {
        config.validate();
        Report report;
        report.scenario = config.name;
        report.task = config.task;
        std::optional<data::Dataset> shared;
        if (config.dataset.kind == "idx") shared = load_dataset(config.dataset, config.seed);
        for (std::size_t r = 0; r < config.repetitions; ++r) {
            const std::uint64_t seed = config.seed + r;
            const auto ds = shared ? *shared : load_dataset(config.dataset, seed);
            const auto task = data::find_task(config.task, ds.n_classes);
            report.c_orig = task.c_orig;
            report.c_new = task.c_new;
            report.records.push_back(run_repetition(config, ds, task, seed));
        }
        std::vector<double> mta;
        for (const auto& rec : report.records) mta.push_back(rec.mta);
        report.mta = summarize(mta);
        for (std::size_t a = 0; a < config.attacks.run.size(); ++a) {
            std::vector<double> raw, lift;
            for (const auto& rec : report.records) {
                raw.push_back(rec.attacks[a].raw_acc);
                lift.push_back(rec.attacks[a].lift_acc);
            }
            report.attacks.push_back({config.attacks.run[a], summarize(raw), summarize(lift)});
        }
        return report;
    } catch (const Error&) {
        rethrow_with_context(config.name);
    }
}

std::vector<Report> run_scenarios(const std::vector<ScenarioConfig>& configs, std::size_t threads) {
    std::vector<std::optional<Report>> slots(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                slots[i] = run_scenario(configs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, configs.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::vector<Report> out;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

// ---- output ----------------------------------------------------------------

double round6(double v) {
    if (!std::isfinite(v) || v == 0.0) return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

Format format_for(const std::filesystem::path& path, const std::string& requested) {
    if (requested == "csv") return Format::csv;
    if (requested == "json") return Format::json;
    if (!requested.empty()) throw ConfigError("unknown output format '" + requested + "'");
    return path.extension() == ".csv" ? Format::csv : Format::json;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

nlohmann::json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }

Stat stat_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace

std::string render_csv(const std::vector<Report>& reports) {
    std::ostringstream os;
    os << csv_header << '\n';
    for (const auto& r : reports) {
        const auto name = csv_field(r.scenario);
        for (const auto& rec : r.records) {
            if (rec.attacks.empty()) os << name << ',' << rec.seed << ',' << num(rec.mta) << ",,,\n";
            for (const auto& a : rec.attacks)
                os << name << ',' << rec.seed << ',' << num(rec.mta) << ',' << a.attack << ',' << num(a.raw_acc) << ','
                   << num(a.lift_acc) << '\n';
        }
        // aggregate rows: seed column holds "mean" / "std"
        if (r.attacks.empty()) {
            os << name << ",mean," << num(r.mta.mean) << ",,,\n";
            os << name << ",std," << num(r.mta.std) << ",,,\n";
        }
        for (const auto& a : r.attacks) {
            os << name << ",mean," << num(r.mta.mean) << ',' << a.attack << ',' << num(a.raw_acc.mean) << ','
               << num(a.lift_acc.mean) << '\n';
            os << name << ",std," << num(r.mta.std) << ',' << a.attack << ',' << num(a.raw_acc.std) << ','
               << num(a.lift_acc.std) << '\n';
        }
    }
    return os.str();
}

nlohmann::json to_json(const std::vector<Report>& reports, bool include_timing) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json records = nlohmann::json::array();
        for (const auto& rec : r.records) {
            nlohmann::json attacks = nlohmann::json::array();
            for (const auto& a : rec.attacks)
                attacks.push_back({{"attack", a.attack}, {"raw_acc", round6(a.raw_acc)}, {"lift_acc", round6(a.lift_acc)}});
            nlohmann::json jr = {{"scenario", rec.scenario}, {"seed", rec.seed}, {"mta", round6(rec.mta)}, {"attacks", attacks}};
            if (rec.mi) {
                auto r6 = [](std::vector<double> v) {
                    for (auto& x : v) x = round6(x);
                    return v;
                };
                nlohmann::json parties = nlohmann::json::array();
                for (const auto& p : rec.mi->parties) parties.push_back(r6(p));
                jr["mi"] = {{"party_inputs", r6(rec.mi->party_inputs)}, {"parties", parties}, {"top", r6(rec.mi->top)}};
            }
            if (include_timing) jr["wall_time_s"] = round6(rec.wall_time_s);
            records.push_back(std::move(jr));
        }
        nlohmann::json aggregate_attacks = nlohmann::json::array();
        for (const auto& a : r.attacks)
            aggregate_attacks.push_back({{"attack", a.attack}, {"raw_acc", stat_json(a.raw_acc)}, {"lift_acc", stat_json(a.lift_acc)}});
        list.push_back({{"scenario", r.scenario},
                        {"task", r.task},
                        {"c_orig", r.c_orig},
                        {"c_new", r.c_new},
                        {"records", records},
                        {"aggregate", {{"mta", stat_json(r.mta)}, {"attacks", aggregate_attacks}}}});
    }
    return {{"reports", list}};
}

std::vector<Report> reports_from_json(const nlohmann::json& j) {
    std::vector<Report> out;
    try {
        for (const auto& jr : j.at("reports")) {
            Report r;
            r.scenario = jr.at("scenario").get<std::string>();
            r.task = jr.at("task").get<std::string>();
            r.c_orig = jr.at("c_orig").get<std::size_t>();
            r.c_new = jr.at("c_new").get<std::size_t>();
            for (const auto& jrec : jr.at("records")) {
                RepetitionRecord rec;
                rec.scenario = jrec.at("scenario").get<std::string>();
                rec.seed = jrec.at("seed").get<std::uint64_t>();
                rec.mta = jrec.at("mta").get<double>();
                for (const auto& ja : jrec.at("attacks"))
                    rec.attacks.push_back({ja.at("attack").get<std::string>(), ja.at("raw_acc").get<double>(),
                                           ja.at("lift_acc").get<double>()});
                if (jrec.contains("mi")) {
                    const auto& m = jrec["mi"];
                    rec.mi = MiSeries{m.at("party_inputs").get<std::vector<double>>(),
                                      m.at("parties").get<std::vector<std::vector<double>>>(),
                                      m.at("top").get<std::vector<double>>()};
                }
                if (jrec.contains("wall_time_s")) rec.wall_time_s = jrec["wall_time_s"].get<double>();
                r.records.push_back(std::move(rec));
            }
            const auto& agg = jr.at("aggregate");
            r.mta = stat_from(agg.at("mta"));
            for (const auto& ja : agg.at("attacks"))
                r.attacks.push_back({ja.at("attack").get<std::string>(), stat_from(ja.at("raw_acc")), stat_from(ja.at("lift_acc"))});
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report json: ") + e.what());
    }
    return out;
}

void write_report(const std::vector<Report>& reports, const std::filesystem::path& path, Format format) {
    for (const auto& r : reports)
        if (r.records.empty()) throw DataError("report '" + r.scenario + "' has no repetitions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write report '" + path.string() + "'");
    if (format == Format::csv)
        out << render_csv(reports);
    else
        out << to_json(reports).dump(2) << '\n';
    if (!out) throw IoError("failed writing report '" + path.string() + "'");
}

// ---- chain files -----------------------------------------------------------

namespace {

Matrix matrix_from(const nlohmann::json& j, const char* what) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty() || rows.front().empty()) throw FormatError(std::string("chain: empty matrix in ") + what);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw FormatError(std::string("chain: ragged matrix in ") + what);
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return m;
}

nlohmann::json matrix_to(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.cols(); ++k) r[static_cast<std::size_t>(k)] = m(i, k);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

info::MarkovChainSpec chain_from_json(const nlohmann::json& j) {
    info::MarkovChainSpec chain;
    try {
        for (const auto& jb : j.at("branches")) {
            info::ChainBranch b;
            b.input = jb.at("input").get<std::vector<double>>();
            for (const auto& t : jb.at("transitions")) b.transitions.push_back(matrix_from(t, "branch transition"));
            chain.branches.push_back(std::move(b));
        }
        chain.lumping = matrix_from(j.at("lumping"), "lumping");
        if (j.contains("top_transitions"))
            for (const auto& t : j["top_transitions"]) chain.top_transitions.push_back(matrix_from(t, "top transition"));
        chain.to_label = matrix_from(j.at("to_label"), "to_label");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("chain: ") + e.what());
    }
    return chain;
}

nlohmann::json chain_to_json(const info::MarkovChainSpec& chain) {
    nlohmann::json branches = nlohmann::json::array();
    for (const auto& b : chain.branches) {
        nlohmann::json ts = nlohmann::json::array();
        for (const auto& t : b.transitions) ts.push_back(matrix_to(t));
        branches.push_back({{"input", b.input}, {"transitions", ts}});
    }
    nlohmann::json tops = nlohmann::json::array();
    for (const auto& t : chain.top_transitions) tops.push_back(matrix_to(t));
    return {{"branches", branches}, {"lumping", matrix_to(chain.lumping)}, {"top_transitions", tops},
            {"to_label", matrix_to(chain.to_label)}};
}

}  // namespace vfl::harness
