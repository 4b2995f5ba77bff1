// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kvlab/engine.hpp"
#include "kvlab/trace.hpp"

namespace kvlab {

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitInvariant = 3;

struct RunConfig {
    std::string policy = "lava";
    std::size_t budget = 0;
    ModelConfig model;  // dims, window, vocab, seed
    std::size_t tokens = 16;
    std::size_t kernel = 7;
    double beta = 2.0;
    double gamma = 0.0;  // cake score gamma
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    std::string trace_path;  // read (run) or write (gen-trace); empty selects synthetic mode
    std::string out_path;    // empty writes to stdout
    std::string format = "csv";

    PolicyConfig make_policy() const;
};

// Fixed column order; layer rows leave logit_ce empty, the final model-level
// row carries it.
//   layer,policy,budget_total,budget_layer,retained,true_l1_loss,
//   theorem1_bound,adakv_bound,entropy_e,logit_ce
std::string render_report_csv(const LossReport& report);
std::string render_report_json(const LossReport& report);

// Pipeline over a trace snapshot instead of a live model. Losses come from the
// stored tensors; the logit loss reruns the seeded model named in the header
// against the stored caches. h2o is unavailable here (no full attention).
PipelineResult run_trace_pipeline(const TraceData& trace, const PolicyConfig& policy);

// Per-policy oracle comparison rows produced by `oracle`.
struct OracleRow {
    std::string policy;
    double greedy_loss = 0.0;
    double oracle_loss = 0.0;
    double greedy_bound = 0.0;
    double gap = 0.0;
    bool violation = false;
};

std::vector<OracleRow> oracle_comparison(const RunConfig& cfg);

// Subcommand drivers; return process exit codes and print human-readable
// errors to `err`.
int cli_gen_trace(const RunConfig& cfg, std::ostream& err);
int cli_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cli_oracle(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cli_report(const std::vector<std::string>& csv_paths, const std::string& format, const std::string& out_path,
               std::ostream& out, std::ostream& err);

}  // namespace kvlab
