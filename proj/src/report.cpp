// Copyright (C) 2026 kvlab contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvlab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace kvlab {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_output(const std::string& text, const std::string& out_path, std::ostream& out) {
    if (out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) {
        throw IoError("cannot open " + out_path + " for writing");
    }
    f << text;
    if (!f) {
        throw IoError("short write to " + out_path);
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

PolicyConfig RunConfig::make_policy() const {
    PolicyConfig p = policy_bundle(policy, budget);
    p.pool_kernel = kernel;
    p.cake_score_gamma = gamma;
    p.pyramid_beta = beta;
    p.cake_gamma1 = gamma1;
    p.cake_gamma2 = gamma2;
    return p;
}

std::string render_report_csv(const LossReport& report) {
    std::ostringstream os;
    os << "layer,policy,budget_total,budget_layer,retained,true_l1_loss,theorem1_bound,adakv_bound,entropy_e,"
          "logit_ce\n";
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
        const LayerLoss& ll = report.layers[l];
        os << l << ',' << report.policy << ',' << report.total_budget << ',' << ll.budget << ',' << ll.retained << ','
           << fmt(ll.true_l1_loss) << ',' << fmt(ll.theorem1_bound) << ',' << fmt(ll.adakv_bound) << ','
           << fmt(ll.entropy) << ",\n";
    }
    os << "model," << report.policy << ',' << report.total_budget << ",,,,,,," << fmt(report.logit_ce) << '\n';
    return os.str();
}

std::string render_report_json(const LossReport& report) {
    nlohmann::ordered_json j;
    j["policy"] = report.policy;
    j["budget_total"] = report.total_budget;
    j["seed"] = report.seed;
    j["layers"] = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < report.layers.size(); ++l) {
        const LayerLoss& ll = report.layers[l];
        nlohmann::ordered_json row;
        row["layer"] = l;
        row["budget_layer"] = ll.budget;
        row["retained"] = ll.retained;
        row["true_l1_loss"] = ll.true_l1_loss;
        row["theorem1_bound"] = ll.theorem1_bound;
        row["adakv_bound"] = ll.adakv_bound;
        row["entropy_e"] = ll.entropy;
        j["layers"].push_back(row);
    }
    j["model"]["logit_ce"] = report.logit_ce;
    return j.dump(2) + "\n";
}

PipelineResult run_trace_pipeline(const TraceData& trace, const PolicyConfig& policy) {
    if (policy.needs_full_attention()) {
        throw ConfigError("policy " + policy.name + " needs the full attention matrix and cannot run from a trace");
    }
    const ModelConfig& cfg = trace.cfg;
    auto provider = [&](std::size_t l) -> LayerArtifacts {
        LayerArtifacts art;
        art.cache = LayerKVCache(cfg.kv_heads, cfg.head_dim, cfg.window);
        for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
            for (std::size_t i = 0; i < trace.tokens; ++i) {
                art.cache.append_kv(g, trace.layers[l].k[g][i], trace.layers[l].v[g][i]);
            }
        }
        art.recent = trace_recent_attention(trace, l);
        art.w_o = trace.layers[l].w_o;
        return art;
    };

    // The header seed names the generating model; rebuild it for the logit
    // rerun. Both p and p_hat flow through the stored (f32) caches so the
    // comparison tracks the mask effect, not the file precision.
    auto logits = [&](const std::vector<EvictionMask>& masks) {
        const ModelWeights weights = init_random_model(cfg);
        const std::vector<Vec> inputs = make_random_inputs(cfg, trace.tokens);
        std::vector<LayerKVCache> caches;
        caches.reserve(cfg.layers);
        std::vector<EvictionMask> ones;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            LayerKVCache cache(cfg.kv_heads, cfg.head_dim, cfg.window);
            for (std::size_t g = 0; g < cfg.kv_heads; ++g) {
                for (std::size_t i = 0; i < trace.tokens; ++i) {
                    cache.append_kv(g, trace.layers[l].k[g][i], trace.layers[l].v[g][i]);
                }
            }
            caches.push_back(std::move(cache));
            ones.push_back(EvictionMask::all_ones(cfg.kv_heads, trace.tokens));
        }
        const Vec p = rerun_masked_logits(cfg, weights, inputs, caches, ones);
        const Vec p_hat = rerun_masked_logits(cfg, weights, inputs, caches, masks);
        return cross_entropy(p, p_hat);
    };

    return run_pipeline_core(cfg, trace.tokens, policy, provider, logits);
}

std::vector<OracleRow> oracle_comparison(const RunConfig& cfg) {
    const ModelConfig& m = cfg.model;
    const std::size_t slots = m.kv_heads * scored_positions(cfg.tokens, m.window);
    if (slots > kOracleSlotCap) {
        throw FeasibilityError("oracle: " + std::to_string(slots) + " evictable slots per layer exceed the cap of " +
                               std::to_string(kOracleSlotCap) + "; shrink tokens, kv-heads, or grow the window");
    }
    const ModelWeights weights = init_random_model(m);
    const std::vector<Vec> inputs = make_random_inputs(m, cfg.tokens);

    std::vector<OracleRow> rows;
    for (const std::string& name : policy_bundle_names()) {
        PolicyConfig policy = policy_bundle(name, cfg.budget);
        policy.pool_kernel = cfg.kernel;
        policy.cake_score_gamma = cfg.gamma;
        policy.pyramid_beta = cfg.beta;
        policy.cake_gamma1 = cfg.gamma1;
        policy.cake_gamma2 = cfg.gamma2;
        const PipelineResult res = run_pipeline(m, weights, inputs, policy);

        OracleRow row;
        row.policy = name;
        for (std::size_t l = 0; l < m.layers; ++l) {
            row.greedy_loss += res.report.layers[l].true_l1_loss;
            row.greedy_bound += res.report.layers[l].theorem1_bound;

            std::vector<Vec> last_rows(m.heads);
            for (std::size_t h = 0; h < m.heads; ++h) {
                last_rows[h] = res.recent[l][h].last_row();
            }
            std::vector<std::vector<Vec>> values(m.kv_heads);
            for (std::size_t g = 0; g < m.kv_heads; ++g) {
                values[g] = res.caches[l].head(g).v;
            }
            const LayerLossInputs in{&last_rows, &values, &weights.layers[l].w_o, m.group_size()};
            row.oracle_loss += oracle_exhaustive_evict(in, res.caches[l], res.plan.per_layer[l]).min_loss;
        }
        row.gap = row.greedy_loss - row.oracle_loss;
        row.violation = row.oracle_loss > row.greedy_loss * (1.0 + 1e-9) + 1e-12 ||
                        row.greedy_loss > row.greedy_bound * (1.0 + 1e-9) + 1e-12;
        rows.push_back(row);
    }
    return rows;
}

int cli_gen_trace(const RunConfig& cfg, std::ostream& err) {
    try {
        if (cfg.trace_path.empty()) {
            throw ConfigError("gen-trace needs --trace <path>");
        }
        if (cfg.tokens <= cfg.model.window) {
            throw ConfigError("gen-trace: tokens must exceed the window");
        }
        write_trace_file(make_trace(cfg.model, cfg.tokens), cfg.trace_path);
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cli_run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        LossReport report;
        if (cfg.trace_path.empty()) {
            const ModelWeights weights = init_random_model(cfg.model);
            const std::vector<Vec> inputs = make_random_inputs(cfg.model, cfg.tokens);
            report = run_pipeline(cfg.model, weights, inputs, cfg.make_policy()).report;
        } else {
            const TraceData trace = read_trace_file(cfg.trace_path);
            report = run_trace_pipeline(trace, cfg.make_policy()).report;
        }
        const std::string text =
            cfg.format == "json" ? render_report_json(report) : render_report_csv(report);
        write_output(text, cfg.out_path, out);
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cli_oracle(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const std::vector<OracleRow> rows = oracle_comparison(cfg);
        std::ostringstream os;
        bool violated = false;
        if (cfg.format == "json") {
            nlohmann::ordered_json j = nlohmann::ordered_json::array();
            for (const OracleRow& r : rows) {
                violated |= r.violation;
                j.push_back({{"policy", r.policy},
                             {"greedy_loss", r.greedy_loss},
                             {"oracle_loss", r.oracle_loss},
                             {"greedy_bound", r.greedy_bound},
                             {"gap", r.gap}});
            }
            os << j.dump(2) << '\n';
        } else {
            os << "policy,greedy_loss,oracle_loss,greedy_bound,gap\n";
            for (const OracleRow& r : rows) {
                violated |= r.violation;
                os << r.policy << ',' << fmt(r.greedy_loss) << ',' << fmt(r.oracle_loss) << ','
                   << fmt(r.greedy_bound) << ',' << fmt(r.gap) << '\n';
            }
        }
        write_output(os.str(), cfg.out_path, out);
        if (violated) {
            err << "error: oracle sandwich violated (oracle <= greedy <= bound failed)\n";
            return kExitInvariant;
        }
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cli_report(const std::vector<std::string>& csv_paths, const std::string& format, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
    struct Agg {
        std::size_t layer_rows = 0;
        std::size_t model_rows = 0;
        double true_l1 = 0.0;
        double theorem1 = 0.0;
        double adakv = 0.0;
        double logit = 0.0;
    };
    try {
        std::map<std::string, Agg> by_policy;
        for (const std::string& path : csv_paths) {
            std::ifstream f(path);
            if (!f) {
                throw IoError("cannot open " + path);
            }
            std::string line;
            bool first = true;
            while (std::getline(f, line)) {
                if (first) {  // header
                    first = false;
                    continue;
                }
                if (line.empty()) {
                    continue;
                }
                const std::vector<std::string> cols = split_csv_line(line);
                if (cols.size() != 10) {
                    throw IoError("malformed report row in " + path);
                }
                Agg& agg = by_policy[cols[1]];
                if (cols[0] == "model") {
                    agg.logit += std::stod(cols[9]);
                    ++agg.model_rows;
                } else {
                    agg.true_l1 += std::stod(cols[5]);
                    agg.theorem1 += std::stod(cols[6]);
                    agg.adakv += std::stod(cols[7]);
                    ++agg.layer_rows;
                }
            }
        }
        std::ostringstream os;
        if (format == "json") {
            nlohmann::ordered_json j = nlohmann::ordered_json::array();
            for (const auto& [policy, a] : by_policy) {
                j.push_back({{"policy", policy},
                             {"layer_rows", a.layer_rows},
                             {"mean_true_l1_loss", a.layer_rows ? a.true_l1 / a.layer_rows : 0.0},
                             {"mean_theorem1_bound", a.layer_rows ? a.theorem1 / a.layer_rows : 0.0},
                             {"mean_adakv_bound", a.layer_rows ? a.adakv / a.layer_rows : 0.0},
                             {"mean_logit_ce", a.model_rows ? a.logit / a.model_rows : 0.0}});
            }
            os << j.dump(2) << '\n';
        } else {
            os << "policy,layer_rows,mean_true_l1_loss,mean_theorem1_bound,mean_adakv_bound,mean_logit_ce\n";
            for (const auto& [policy, a] : by_policy) {
                os << policy << ',' << a.layer_rows << ','
                   << fmt(a.layer_rows ? a.true_l1 / a.layer_rows : 0.0) << ','
                   << fmt(a.layer_rows ? a.theorem1 / a.layer_rows : 0.0) << ','
                   << fmt(a.layer_rows ? a.adakv / a.layer_rows : 0.0) << ','
                   << fmt(a.model_rows ? a.logit / a.model_rows : 0.0) << '\n';
            }
        }
        write_output(os.str(), out_path, out);
        return kExitOk;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

}  // namespace kvlab
