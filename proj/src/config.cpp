#include "c2p2/config.hpp"

#include <set>

#include "c2p2/common.hpp"
#include "c2p2/csv.hpp"

namespace c2p2 {

std::string_view to_string(Command c) {
    switch (c) {
        case Command::Generate: return "generate";
        case Command::Ingest: return "ingest";
        case Command::Backtest: return "backtest";
        case Command::Ablate: return "ablate";
        case Command::Report: return "report";
    }
    return "?";
}

std::optional<Command> parse_command(std::string_view name) {
    for (auto c : {Command::Generate, Command::Ingest, Command::Backtest, Command::Ablate, Command::Report}) {
        if (to_string(c) == name) return c;
    }
    return std::nullopt;
}

namespace {

using nlohmann::json;

class Collector {
public:
    void add(std::string problem) { problems_.push_back(std::move(problem)); }

    /// Runs `f` on j[key] when present; type errors become problems naming the field.
    template <typename F>
    void field(const json& j, const std::string& prefix, const std::string& key, F&& f) {
        if (!j.contains(key)) return;
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        try {
            f(j.at(key), name);
        } catch (const json::exception& e) {
            add(name + ": " + type_message(e));
        } catch (const Error& e) {
            add(name + ": " + e.what());
        }
    }

    void check_keys(const json& j, const std::string& prefix, std::initializer_list<std::string_view> allowed) {
        if (!j.is_object()) {
            add((prefix.empty() ? std::string("config") : prefix) + ": expected an object");
            return;
        }
        for (const auto& [key, value] : j.items()) {
            bool ok = false;
            for (auto a : allowed) ok = ok || a == key;
            if (!ok) add((prefix.empty() ? key : prefix + "." + key) + ": unknown field");
        }
    }

    void finish() const {
        if (problems_.empty()) return;
        std::string msg = std::to_string(problems_.size()) + " problem(s): ";
        for (std::size_t i = 0; i < problems_.size(); ++i) msg += (i ? "; " : "") + problems_[i];
        throw Error(ErrorCode::ValidationError, msg);
    }

private:
    static std::string type_message(const json::exception& e) {
        std::string m = e.what();
        const auto pos = m.find("] ");
        return pos == std::string::npos ? m : m.substr(pos + 2);
    }

    std::vector<std::string> problems_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void parse_synthetic(Collector& col, const json& j, const std::string& prefix, SyntheticSpec& s,
                     std::optional<std::filesystem::path>* dir, const std::filesystem::path& base) {
    if (dir) {
        col.check_keys(j, prefix, {"coins", "days", "coupling", "seed", "economic_width", "own_width", "herd_width",
                                   "step", "dir"});
    } else {
        col.check_keys(j, prefix, {"coins", "days", "coupling", "seed", "economic_width", "own_width", "herd_width",
                                   "step"});
    }
    if (!j.is_object()) return;
    col.field(j, prefix, "coins", [&](const json& v, auto&) { s.coins = v.get<std::size_t>(); });
    col.field(j, prefix, "days", [&](const json& v, auto&) { s.days = v.get<std::size_t>(); });
    col.field(j, prefix, "coupling", [&](const json& v, auto&) { s.coupling = v.get<double>(); });
    col.field(j, prefix, "seed", [&](const json& v, auto&) { s.seed = v.get<std::uint64_t>(); });
    col.field(j, prefix, "economic_width", [&](const json& v, auto&) { s.economic_width = v.get<std::size_t>(); });
    col.field(j, prefix, "own_width", [&](const json& v, auto&) { s.own_width = v.get<std::size_t>(); });
    col.field(j, prefix, "herd_width", [&](const json& v, auto&) { s.herd_width = v.get<std::size_t>(); });
    col.field(j, prefix, "step", [&](const json& v, auto&) { s.step = v.get<double>(); });
    if (dir) col.field(j, prefix, "dir", [&](const json& v, auto&) { *dir = resolve(base, v.get<std::string>()); });
    try {
        s.validate();
    } catch (const Error& e) {
        col.add(prefix + ": " + e.what());
    }
}

json synthetic_json(const SyntheticSpec& s) {
    return {{"coins", s.coins},
            {"days", s.days},
            {"coupling", s.coupling},
            {"seed", s.seed},
            {"economic_width", s.economic_width},
            {"own_width", s.own_width},
            {"herd_width", s.herd_width},
            {"step", s.step}};
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                              std::optional<Command> command) {
    ExperimentConfig cfg;
    Collector col;
    col.check_keys(j, "",
                   {"data", "coins", "tasks", "lags", "models", "selectors", "feature_groups", "similarity", "epsilon",
                    "max_iter", "seed", "init", "refit_selector_each_iteration", "backtest", "baseline", "output",
                    "jobs", "generate"});
    if (!j.is_object()) col.finish();

    auto& bt = cfg.backtest;
    auto& eng = bt.engine;

    col.field(j, "", "data", [&](const json& d, const std::string& name) {
        col.check_keys(d, name, {"dataset", "panel", "synthetic"});
        col.field(d, name, "dataset", [&](const json& v, auto&) { cfg.dataset = resolve(base_dir, v.get<std::string>()); });
        col.field(d, name, "panel", [&](const json& v, auto&) { cfg.panel = resolve(base_dir, v.get<std::string>()); });
        col.field(d, name, "synthetic", [&](const json& v, const std::string& n) {
            SyntheticSpec s;
            parse_synthetic(col, v, n, s, nullptr, base_dir);
            cfg.synthetic = s;
        });
        if (static_cast<int>(cfg.dataset.has_value()) + cfg.panel.has_value() + cfg.synthetic.has_value() > 1) {
            col.add(name + ": give only one of dataset, panel, synthetic");
        }
    });
    col.field(j, "", "coins", [&](const json& v, auto&) { cfg.coins = v.get<std::vector<std::string>>(); });
    col.field(j, "", "tasks", [&](const json& v, const std::string& name) {
        bt.tasks.clear();
        for (const auto& t : v) {
            const auto task = parse_task(t.get<std::string>());
            if (!task) col.add(name + ": unknown task " + t.dump());
            else bt.tasks.push_back(*task);
        }
        if (v.empty()) col.add(name + ": must be nonempty");
    });
    col.field(j, "", "lags", [&](const json& v, const std::string& name) {
        bt.lags.clear();
        for (const auto& l : v) {
            const auto lag = l.get<long long>();
            if (lag < 1 || lag > 30) col.add(name + ": lag " + std::to_string(lag) + " outside [1, 30]");
            else bt.lags.push_back(static_cast<std::size_t>(lag));
        }
        if (v.empty()) col.add(name + ": must be nonempty");
    });
    col.field(j, "", "models", [&](const json& v, const std::string& name) {
        bt.models.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string n = name + "[" + std::to_string(i) + "]";
            try {
                auto spec = ModelSpec::from_json(v[i]);
                spec.validate();
                bt.models.push_back(spec);
            } catch (const Error& e) {
                col.add(n + ": " + e.what());
            } catch (const json::exception& e) {
                col.add(n + ": " + e.what());
            }
        }
        if (v.empty()) col.add(name + ": must be nonempty");
    });
    col.field(j, "", "selectors", [&](const json& v, const std::string& name) {
        bt.selectors.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            try {
                bt.selectors.push_back(SelectorSpec::from_json(v[i]));
            } catch (const Error& e) {
                col.add(name + "[" + std::to_string(i) + "]: " + e.what());
            } catch (const json::exception& e) {
                col.add(name + "[" + std::to_string(i) + "]: " + e.what());
            }
        }
        if (v.empty()) col.add(name + ": must be nonempty");
    });
    col.field(j, "", "feature_groups", [&](const json& v, const std::string& name) {
        bt.feature_groups = v.get<std::vector<std::vector<std::string>>>();
        if (v.empty()) col.add(name + ": must be nonempty");
    });
    col.field(j, "", "similarity", [&](const json& v, const std::string& name) {
        eng.kinds.clear();
        for (const auto& k : v) {
            const auto kind = parse_similarity_kind(k.get<std::string>());
            if (!kind) col.add(name + ": unknown similarity kind " + k.dump());
            else eng.kinds.push_back(*kind);
        }
        if (v.empty()) col.add(name + ": must be nonempty");
    });
    col.field(j, "", "epsilon", [&](const json& v, const std::string& name) {
        eng.epsilon = v.get<double>();
        if (!(eng.epsilon > 0.0)) col.add(name + ": must be > 0");
    });
    col.field(j, "", "max_iter", [&](const json& v, const std::string& name) {
        eng.max_iter = v.get<int>();
        if (eng.max_iter < 1) col.add(name + ": must be >= 1");
    });
    col.field(j, "", "seed", [&](const json& v, auto&) { eng.seed = v.get<std::uint64_t>(); });
    col.field(j, "", "init", [&](const json& v, const std::string& name) {
        const auto s = v.get<std::string>();
        if (s == "uniform") eng.init = InitMode::Uniform;
        else if (s == "symmetric") eng.init = InitMode::Symmetric;
        else col.add(name + ": expected uniform or symmetric");
    });
    col.field(j, "", "refit_selector_each_iteration",
              [&](const json& v, auto&) { eng.refit_selector_each_iteration = v.get<bool>(); });
    col.field(j, "", "backtest", [&](const json& b, const std::string& name) {
        col.check_keys(b, name, {"train_window", "test_days", "refit_stride", "validation_days"});
        col.field(b, name, "train_window", [&](const json& v, auto&) { bt.train_window = v.get<std::size_t>(); });
        col.field(b, name, "test_days", [&](const json& v, auto&) { bt.test_days = v.get<std::size_t>(); });
        col.field(b, name, "refit_stride", [&](const json& v, auto&) { bt.refit_stride = v.get<std::size_t>(); });
        col.field(b, name, "validation_days", [&](const json& v, auto&) { bt.validation_days = v.get<std::size_t>(); });
    });
    col.field(j, "", "baseline", [&](const json& v, auto&) { cfg.baseline = resolve(base_dir, v.get<std::string>()); });
    col.field(j, "", "output", [&](const json& v, auto&) { cfg.output = resolve(base_dir, v.get<std::string>()); });
    if (!j.contains("output")) cfg.output = base_dir / "out";
    col.field(j, "", "jobs", [&](const json& v, const std::string& name) {
        const auto n = v.get<long long>();
        if (n < 1) col.add(name + ": must be >= 1");
        else bt.jobs = static_cast<std::size_t>(n);
    });
    col.field(j, "", "generate",
              [&](const json& v, const std::string& name) { parse_synthetic(col, v, name, cfg.generate, &cfg.generate_dir, base_dir); });

    try {
        bt.validate();
    } catch (const Error& e) {
        col.add(std::string("backtest: ") + e.what());
    }

    // Inputs must exist for the commands that read them.
    const bool reads_data = command && (*command == Command::Ingest || *command == Command::Backtest ||
                                        *command == Command::Ablate);
    if (reads_data) {
        if (*command == Command::Ingest && !cfg.dataset) {
            col.add("data.dataset: missing (ingest reads a dataset manifest)");
        } else if (!cfg.dataset && !cfg.panel && !cfg.synthetic) {
            col.add("data.dataset: missing (give data.dataset, data.panel or data.synthetic)");
        }
        if (cfg.dataset && !std::filesystem::exists(*cfg.dataset)) {
            col.add("data.dataset: file not found: " + cfg.dataset->string());
        }
        if (cfg.panel && !std::filesystem::exists(*cfg.panel / "manifest.json")) {
            col.add("data.panel: no panel manifest in " + cfg.panel->string());
        }
        if (cfg.baseline && !std::filesystem::exists(*cfg.baseline)) {
            col.add("baseline: file not found: " + cfg.baseline->string());
        }
    }
    col.finish();
    return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path, std::optional<Command> command) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::ValidationError, "config: file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path(), command);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json data = nlohmann::json::object();
    if (dataset) data["dataset"] = dataset->generic_string();
    if (panel) data["panel"] = panel->generic_string();
    if (synthetic) data["synthetic"] = synthetic_json(*synthetic);
    nlohmann::json tasks = nlohmann::json::array(), models = nlohmann::json::array(), sels = nlohmann::json::array(),
                   kinds = nlohmann::json::array();
    for (auto t : backtest.tasks) tasks.push_back(std::string(to_string(t)));
    for (const auto& m : backtest.models) models.push_back(m.to_json());
    for (const auto& s : backtest.selectors) sels.push_back(s.to_json());
    for (auto k : backtest.engine.kinds) kinds.push_back(std::string(to_string(k)));
    const auto& e = backtest.engine;
    nlohmann::json j{{"data", data},
                     {"coins", coins},
                     {"tasks", tasks},
                     {"lags", backtest.lags},
                     {"models", models},
                     {"selectors", sels},
                     {"feature_groups", backtest.feature_groups},
                     {"similarity", kinds},
                     {"epsilon", e.epsilon},
                     {"max_iter", e.max_iter},
                     {"seed", e.seed},
                     {"init", e.init == InitMode::Symmetric ? "symmetric" : "uniform"},
                     {"refit_selector_each_iteration", e.refit_selector_each_iteration},
                     {"backtest",
                      {{"train_window", backtest.train_window},
                       {"test_days", backtest.test_days},
                       {"refit_stride", backtest.refit_stride},
                       {"validation_days", backtest.validation_days}}},
                     {"output", output.generic_string()},
                     {"jobs", backtest.jobs}};
    if (baseline) j["baseline"] = baseline->generic_string();
    nlohmann::json gen = synthetic_json(generate);
    if (generate_dir) gen["dir"] = generate_dir->generic_string();
    j["generate"] = gen;
    return j;
}

std::string ExperimentConfig::hash() const {
    auto j = to_json();
    j.erase("output");
    j.erase("jobs");
    j.erase("generate");
    return hex64(fnv1a(j.dump()));
}

std::string ExperimentConfig::run_id(Command c) const { return std::string(to_string(c)) + "-" + hash().substr(0, 8); }

}  // namespace c2p2
