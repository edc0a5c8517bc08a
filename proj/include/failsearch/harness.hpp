#pragma once

#include "failsearch/avf.hpp"
#include "failsearch/ddpg.hpp"
#include "failsearch/gmm.hpp"
#include "failsearch/search.hpp"
#include "failsearch/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace failsearch {

struct AvfConfig {
    size_t window_size = 300;
    long epochs = 500;
    double lr = 1e-3;
    int n_candidates = 1000;
};

struct GmmConfig {
    int n = 2;          // ignored when auto_n
    bool auto_n = false;
    int n_inits = 100;
    int candidate_lo = 1;
    int candidate_hi = 5;
};

struct SearchConfig {
    long budget = 200000;
    int k_failures = 10;
    std::vector<std::string> strategies = {"vmc", "avf", "gmm", "hybrid"};
    bool gmm_first = true;
    bool hybrid_reset = false;
};

/// Fully-resolved run configuration with scenario-consistent defaults.
struct RunConfig {
    int scenario_id = 1;
    uint64_t seed = 0;
    ScenarioConfig sim;
    DdpgHyper ddpg;
    AvfConfig avf;
    GmmConfig gmm;
    SearchConfig search;

    static RunConfig defaults_for(int scenario_id, uint64_t seed);
    void validate() const;
};

/// Strict parse: unknown keys are rejected, invalid ranges reported with
/// their field path.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

/// Deterministic hash-based seed stream derivation.
uint64_t seed_derive(uint64_t master_seed, const std::string& stream_label, long index);

/// 64-bit FNV-1a content hash, hex-encoded; used by the run manifest.
std::string content_hash_hex(const std::string& bytes);

/// Write-temp-then-rename file write.
void atomic_write(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

/// Records artifact hashes plus tool version into manifest.json.
void write_manifest(const std::string& run_dir, const std::vector<std::string>& artifacts);
bool verify_manifest(const std::string& run_dir, std::string* mismatch = nullptr);

void emit_tables(const BenchTable& bench, const std::string& csv_path,
                 const std::string& md_path);

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Level comes from the TOOL_LOG environment variable (error|info|debug).
LogLevel log_level();
void log_line(LogLevel level, const std::string& msg);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace failsearch
