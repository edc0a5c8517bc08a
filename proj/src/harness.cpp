#include "failsearch/harness.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace failsearch {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig RunConfig::defaults_for(int scenario_id, uint64_t seed) {
    RunConfig cfg;
    cfg.scenario_id = scenario_id;
    cfg.seed = seed;
    cfg.sim.scenario_id = scenario_id;
    cfg.ddpg = DdpgHyper::for_scenario(scenario_id);
    cfg.avf.window_size = scenario_id == 1 ? 300 : 5000;
    cfg.gmm.n = scenario_id == 1 ? 2 : 3;
    return cfg;
}

void RunConfig::validate() const {
    if (scenario_id != 1 && scenario_id != 2)
        throw std::invalid_argument("scenario_id must be 1 or 2");
    if (sim.scenario_id != scenario_id)
        throw std::invalid_argument("sim.scenario_id inconsistent with scenario_id");
    try {
        sim.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("sim." + std::string(e.what()));
    }
    try {
        ddpg.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(e.what());
    }
    if (avf.window_size == 0) throw std::invalid_argument("avf.window_size must be > 0");
    if (avf.epochs <= 0) throw std::invalid_argument("avf.epochs must be > 0");
    if (avf.lr <= 0) throw std::invalid_argument("avf.lr must be > 0");
    if (avf.n_candidates < 1) throw std::invalid_argument("avf.n_candidates must be >= 1");
    if (!gmm.auto_n && gmm.n < 1) throw std::invalid_argument("gmm.n must be >= 1");
    if (gmm.n_inits < 1) throw std::invalid_argument("gmm.n_inits must be >= 1");
    if (gmm.candidate_lo < 1 || gmm.candidate_hi < gmm.candidate_lo)
        throw std::invalid_argument("gmm.candidate_range invalid");
    if (search.budget < 1) throw std::invalid_argument("search.budget must be >= 1");
    if (search.k_failures < 0) throw std::invalid_argument("search.k_failures must be >= 0");
    for (const auto& s : search.strategies)
        if (s != "vmc" && s != "avf" && s != "gmm" && s != "hybrid" && s != "pr")
            throw std::invalid_argument("search.strategies contains unknown strategy '" + s + "'");
}

namespace {

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok)
            throw std::invalid_argument("unknown config key: " + path + it.key());
    }
}

template <typename T>
void maybe(const json& obj, const char* key, T& field) {
    if (obj.contains(key)) field = obj.at(key).get<T>();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    json doc = json::parse(text);
    check_keys(doc, "", {"scenario_id", "seed", "sim", "ddpg", "avf", "gmm", "search"});
    const int scenario_id = doc.value("scenario_id", 1);
    const uint64_t seed = doc.value("seed", uint64_t{0});
    RunConfig cfg = RunConfig::defaults_for(scenario_id, seed);

    if (doc.contains("sim")) {
        const json& s = doc["sim"];
        check_keys(s, "sim.",
                   {"obstacle_m", "base_mu", "g", "dt", "max_steps", "v_norm", "reward"});
        maybe(s, "obstacle_m", cfg.sim.obstacle_m);
        maybe(s, "base_mu", cfg.sim.base_mu);
        maybe(s, "g", cfg.sim.g);
        maybe(s, "dt", cfg.sim.dt);
        maybe(s, "max_steps", cfg.sim.max_steps);
        maybe(s, "v_norm", cfg.sim.v_norm);
        if (s.contains("reward")) {
            const json& r = s["reward"];
            check_keys(r, "sim.reward.", {"k_imm", "r_goal", "k_far", "k_near", "r_crash"});
            maybe(r, "k_imm", cfg.sim.reward.k_imm);
            maybe(r, "r_goal", cfg.sim.reward.r_goal);
            maybe(r, "k_far", cfg.sim.reward.k_far);
            maybe(r, "k_near", cfg.sim.reward.k_near);
            maybe(r, "r_crash", cfg.sim.reward.r_crash);
        }
    }
    if (doc.contains("ddpg")) {
        const json& d = doc["ddpg"];
        check_keys(d, "ddpg.",
                   {"episodes", "gamma", "tau", "buffer_capacity", "batch_size", "actor_lr",
                    "critic_lr", "warmup_steps", "noise_decay"});
        maybe(d, "episodes", cfg.ddpg.episodes);
        maybe(d, "gamma", cfg.ddpg.gamma);
        maybe(d, "tau", cfg.ddpg.tau);
        maybe(d, "buffer_capacity", cfg.ddpg.buffer_capacity);
        maybe(d, "batch_size", cfg.ddpg.batch_size);
        maybe(d, "actor_lr", cfg.ddpg.actor_lr);
        maybe(d, "critic_lr", cfg.ddpg.critic_lr);
        maybe(d, "warmup_steps", cfg.ddpg.warmup_steps);
        maybe(d, "noise_decay", cfg.ddpg.noise_decay);
    }
    if (doc.contains("avf")) {
        const json& a = doc["avf"];
        check_keys(a, "avf.", {"window_size", "epochs", "lr", "n_candidates"});
        maybe(a, "window_size", cfg.avf.window_size);
        maybe(a, "epochs", cfg.avf.epochs);
        maybe(a, "lr", cfg.avf.lr);
        maybe(a, "n_candidates", cfg.avf.n_candidates);
    }
    if (doc.contains("gmm")) {
        const json& g = doc["gmm"];
        check_keys(g, "gmm.", {"n", "n_inits", "candidate_range"});
        if (g.contains("n")) {
            if (g["n"].is_string()) {
                if (g["n"].get<std::string>() != "auto")
                    throw std::invalid_argument("gmm.n must be an integer or \"auto\"");
                cfg.gmm.auto_n = true;
            } else {
                cfg.gmm.n = g["n"].get<int>();
            }
        }
        maybe(g, "n_inits", cfg.gmm.n_inits);
        if (g.contains("candidate_range")) {
            auto range = g["candidate_range"].get<std::vector<int>>();
            if (range.size() != 2)
                throw std::invalid_argument("gmm.candidate_range must be [lo, hi]");
            cfg.gmm.candidate_lo = range[0];
            cfg.gmm.candidate_hi = range[1];
        }
    }
    if (doc.contains("search")) {
        const json& s = doc["search"];
        check_keys(s, "search.",
                   {"budget", "k_failures", "strategies", "alternation_order", "hybrid_reset"});
        maybe(s, "budget", cfg.search.budget);
        maybe(s, "k_failures", cfg.search.k_failures);
        maybe(s, "strategies", cfg.search.strategies);
        if (s.contains("alternation_order")) {
            const std::string order = s["alternation_order"].get<std::string>();
            if (order == "gmm-first")
                cfg.search.gmm_first = true;
            else if (order == "avf-first")
                cfg.search.gmm_first = false;
            else
                throw std::invalid_argument(
                    "search.alternation_order must be gmm-first or avf-first");
        }
        maybe(s, "hybrid_reset", cfg.search.hybrid_reset);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    return parse_config(read_file(path));
}

std::string config_to_json(const RunConfig& cfg) {
    json doc;
    doc["scenario_id"] = cfg.scenario_id;
    doc["seed"] = cfg.seed;
    doc["sim"] = {{"obstacle_m", cfg.sim.obstacle_m},
                  {"base_mu", cfg.sim.base_mu},
                  {"g", cfg.sim.g},
                  {"dt", cfg.sim.dt},
                  {"max_steps", cfg.sim.max_steps},
                  {"v_norm", cfg.sim.v_norm},
                  {"reward",
                   {{"k_imm", cfg.sim.reward.k_imm},
                    {"r_goal", cfg.sim.reward.r_goal},
                    {"k_far", cfg.sim.reward.k_far},
                    {"k_near", cfg.sim.reward.k_near},
                    {"r_crash", cfg.sim.reward.r_crash}}}};
    doc["ddpg"] = {{"episodes", cfg.ddpg.episodes},
                   {"gamma", cfg.ddpg.gamma},
                   {"tau", cfg.ddpg.tau},
                   {"buffer_capacity", cfg.ddpg.buffer_capacity},
                   {"batch_size", cfg.ddpg.batch_size},
                   {"actor_lr", cfg.ddpg.actor_lr},
                   {"critic_lr", cfg.ddpg.critic_lr},
                   {"warmup_steps", cfg.ddpg.warmup_steps},
                   {"noise_decay", cfg.ddpg.noise_decay}};
    doc["avf"] = {{"window_size", cfg.avf.window_size},
                  {"epochs", cfg.avf.epochs},
                  {"lr", cfg.avf.lr},
                  {"n_candidates", cfg.avf.n_candidates}};
    doc["gmm"] = {{"n_inits", cfg.gmm.n_inits},
                  {"candidate_range", std::vector<int>{cfg.gmm.candidate_lo, cfg.gmm.candidate_hi}}};
    if (cfg.gmm.auto_n)
        doc["gmm"]["n"] = "auto";
    else
        doc["gmm"]["n"] = cfg.gmm.n;
    doc["search"] = {{"budget", cfg.search.budget},
                     {"k_failures", cfg.search.k_failures},
                     {"strategies", cfg.search.strategies},
                     {"alternation_order",
                      cfg.search.gmm_first ? "gmm-first" : "avf-first"},
                     {"hybrid_reset", cfg.search.hybrid_reset}};
    return doc.dump(2) + "\n";
}

uint64_t seed_derive(uint64_t master_seed, const std::string& stream_label, long index) {
    // FNV-1a over master seed, label and index, then an avalanche mix
    uint64_t h = 14695981039346656037ull;
    auto mix_byte = [&h](unsigned char b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(master_seed >> (8 * i)));
    for (unsigned char c : stream_label) mix_byte(c);
    const auto idx = static_cast<uint64_t>(index);
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(idx >> (8 * i)));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return h;
}

std::string content_hash_hex(const std::string& bytes) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << contents;
    }
    fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_manifest(const std::string& run_dir, const std::vector<std::string>& artifacts) {
    json doc;
    doc["tool_version"] = kToolVersion;
    json hashes = json::object();
    for (const auto& name : artifacts) {
        const fs::path p = fs::path(run_dir) / name;
        if (fs::exists(p)) hashes[name] = content_hash_hex(read_file(p.string()));
    }
    doc["hashes"] = std::move(hashes);
    atomic_write((fs::path(run_dir) / "manifest.json").string(), doc.dump(2) + "\n");
}

bool verify_manifest(const std::string& run_dir, std::string* mismatch) {
    json doc = json::parse(read_file((fs::path(run_dir) / "manifest.json").string()));
    for (auto it = doc.at("hashes").begin(); it != doc["hashes"].end(); ++it) {
        const fs::path p = fs::path(run_dir) / it.key();
        if (!fs::exists(p) || content_hash_hex(read_file(p.string())) != it.value()) {
            if (mismatch) *mismatch = it.key();
            return false;
        }
    }
    return true;
}

void emit_tables(const BenchTable& bench, const std::string& csv_path,
                 const std::string& md_path) {
    std::ostringstream csv;
    csv << "strategy,search_index,episodes_used,censored,failing_x_json\n";
    for (const auto& row : bench.rows) {
        csv << row.strategy << "," << row.search_index << "," << row.episodes_used << ","
            << (row.censored ? 1 : 0) << ",";
        if (row.failing_x) {
            json xv = std::vector<double>(row.failing_x->data(),
                                          row.failing_x->data() + row.failing_x->size());
            csv << "\"" << xv.dump() << "\"";
        }
        csv << "\n";
    }
    atomic_write(csv_path, csv.str());

    const std::vector<BenchStats> stats = bench.stats();
    // column order mirrors the reference table: VMC, AVF, GMM, GMM+AVF
    const std::vector<std::pair<std::string, std::string>> order = {
        {"vmc", "VMC"}, {"avf", "AVF"}, {"gmm", "GMM"}, {"hybrid", "GMM+AVF"}};
    std::ostringstream md;
    md << "| Metric |";
    for (const auto& [key, title] : order)
        for (const auto& s : stats)
            if (s.strategy == key) md << " " << title << " |";
    md << "\n|---|";
    for (const auto& [key, title] : order)
        for (const auto& s : stats)
            if (s.strategy == key) md << "---|";
    md << "\n";
    auto emit_row = [&](const std::string& name, auto getter) {
        md << "| " << name << " |";
        for (const auto& [key, title] : order)
            for (const auto& s : stats)
                if (s.strategy == key) md << " " << getter(s) << " |";
        md << "\n";
    };
    emit_row("Min", [](const BenchStats& s) { return std::to_string(s.min); });
    emit_row("Average", [](const BenchStats& s) {
        std::ostringstream o;
        o << s.avg;
        return o.str();
    });
    emit_row("Max", [](const BenchStats& s) { return std::to_string(s.max); });
    int total_censored = 0;
    for (const auto& s : stats) total_censored += s.censored;
    if (total_censored > 0) {
        md << "\n";
        for (const auto& s : stats)
            if (s.censored > 0)
                md << "_" << s.strategy << ": " << s.censored
                   << " search(es) hit the episode budget without finding a failure._\n";
    }
    atomic_write(md_path, md.str());
}

LogLevel log_level() {
    const char* env = std::getenv("TOOL_LOG");
    if (!env) return LogLevel::Info;
    const std::string v = env;
    if (v == "error") return LogLevel::Error;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_line(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    std::cerr << msg << "\n";
}

}  // namespace failsearch
