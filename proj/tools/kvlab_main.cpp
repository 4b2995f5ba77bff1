// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kvlab/report.hpp"

namespace {

void add_model_flags(CLI::App* cmd, kvlab::RunConfig& cfg) {
    cmd->add_option("--layers", cfg.model.layers, "Decoder layers (L)");
    cmd->add_option("--heads", cfg.model.heads, "Query heads per layer (H)");
    cmd->add_option("--kv-heads", cfg.model.kv_heads, "KV heads per layer (GQA groups)");
    cmd->add_option("--dh", cfg.model.head_dim, "Head dimension");
    cmd->add_option("--tokens", cfg.tokens, "Prompt length (N)");
    cmd->add_option("--vocab", cfg.model.vocab, "Un-embedding output dimension");
    cmd->add_option("--window", cfg.model.window, "Recent window size (w)");
    cmd->add_option("--seed", cfg.model.seed, "Generator seed");
}

void add_policy_flags(CLI::App* cmd, kvlab::RunConfig& cfg) {
    cmd->add_option("--policy", cfg.policy, "Eviction policy bundle")->default_val("lava");
    cmd->add_option("--budget", cfg.budget, "Total retained-entry budget")->required();
    cmd->add_option("--kernel", cfg.kernel, "Score pooling kernel (odd; 1 disables)");
    cmd->add_option("--beta", cfg.beta, "PyramidKV shape parameter");
    cmd->add_option("--gamma", cfg.gamma, "CAKE score shift weight");
    cmd->add_option("--gamma1", cfg.gamma1, "CAKE spatial exponent");
    cmd->add_option("--gamma2", cfg.gamma2, "CAKE temporal exponent");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kvlab: a desk-scale laboratory for KV-cache eviction policies"};
    app.require_subcommand(1);

    kvlab::RunConfig cfg;
    std::vector<std::string> report_inputs;
    std::string report_format = "csv";
    std::string report_out;

    CLI::App* gen = app.add_subcommand("gen-trace", "Build a seeded toy model, prefill it, and write a KVT1 trace");
    add_model_flags(gen, cfg);
    gen->add_option("--trace", cfg.trace_path, "Output trace path")->required();

    CLI::App* run = app.add_subcommand("run", "Compress a synthetic or traced cache and report per-layer losses");
    add_model_flags(run, cfg);
    add_policy_flags(run, cfg);
    run->add_option("--trace", cfg.trace_path, "Read this trace instead of building a synthetic model");
    run->add_option("--out", cfg.out_path, "Write the report here instead of stdout");
    run->add_option("--format", cfg.format, "Report format")->check(CLI::IsMember({"csv", "json"}));

    CLI::App* oracle = app.add_subcommand("oracle", "Compare every policy against the exhaustive eviction oracle");
    add_model_flags(oracle, cfg);
    add_policy_flags(oracle, cfg);
    oracle->add_option("--out", cfg.out_path, "Write the comparison here instead of stdout");
    oracle->add_option("--format", cfg.format, "Report format")->check(CLI::IsMember({"csv", "json"}));

    CLI::App* report = app.add_subcommand("report", "Aggregate run CSVs into a per-policy summary table");
    report->add_option("inputs", report_inputs, "Report CSV files")->required()->expected(-1);
    report->add_option("--format", report_format, "Summary format")->check(CLI::IsMember({"csv", "json"}));
    report->add_option("--out", report_out, "Write the summary here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        return kvlab::cli_gen_trace(cfg, std::cerr);
    }
    if (run->parsed()) {
        return kvlab::cli_run(cfg, std::cout, std::cerr);
    }
    if (oracle->parsed()) {
        return kvlab::cli_oracle(cfg, std::cout, std::cerr);
    }
    return kvlab::cli_report(report_inputs, report_format, report_out, std::cout, std::cerr);
}
