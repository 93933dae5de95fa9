#ifndef HYDROCTRL_HARNESS_HPP
#define HYDROCTRL_HARNESS_HPP

#include <string>
#include <vector>

#include "json.hpp"

#include "hydroctrl/control.hpp"

// Batch entry points: config ingestion, the simulate/verify/control/
// ingham-sweep/reduce-report subcommands, and report emission.
//
// Exit codes: 0 ok, 1 assertion failure, 2 config error, 3 guard violation,
// 4 budget exhausted.

namespace hydroctrl {

struct RunConfig {
    nlohmann::json doc;
    uint64_t seed = 0;
    std::string out_dir = ".";

    static RunConfig load(const std::string& path, uint64_t seed, const std::string& out_dir,
                          const std::vector<std::string>& overrides);
};

// Validates keys against an allowed set; unknown keys are rejected.
void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& where);

GridSpec grid_from_json(const nlohmann::json& j);
PhysParams physics_from_json(const nlohmann::json& j);

void write_file_atomic(const std::string& path, const std::string& content);

int max_threads();  // HYDROCTRL_THREADS cap (>= 1)
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

int cmd_simulate(const RunConfig& cfg);
int cmd_verify(const RunConfig& cfg, const std::string& suite);
int cmd_control(const RunConfig& cfg, const std::string& mode);
int cmd_ingham_sweep(const RunConfig& cfg);
int cmd_reduce_report(const RunConfig& cfg);

int run_cli(int argc, char** argv);

}  // namespace hydroctrl

#endif
