// clab command line: offline experiments, Bode artifacts, lead design, engine synthesis/verification, lab server.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "clab/config.hpp"
#include "clab/gr1/solver.hpp"
#include "clab/gr1/verify.hpp"
#include "clab/lab/http.hpp"
#include "clab/lead/checker.hpp"
#include "clab/plant/io.hpp"
#include "clab/sysid/fft_bode.hpp"
#include "clab/sysid/io.hpp"
#include "clab/sysid/plot.hpp"

#include "CLI11.hpp"

#ifndef CLAB_DEFAULT_CONFIG
#define CLAB_DEFAULT_CONFIG "data/clab.json"
#endif

namespace fs = std::filesystem;
using namespace clab;
using nlohmann::json;

namespace {

AppConfig config_at(const std::string& path) {
    if (!path.empty()) return load_config(path);
    if (const char* env = std::getenv("CLAB_CONFIG"); env && *env) return load_config(env);
    if (fs::exists(CLAB_DEFAULT_CONFIG)) return load_config(CLAB_DEFAULT_CONFIG);
    AppConfig c = default_config();
    apply_env_overrides(c);
    return c;
}

std::string g(double v) { return plant::fmt_g9(v); }

void print_margins(const char* label, const sysid::MarginReport& m) {
    if (m.crossover_found)
        std::printf("%s phi_pm=%s deg omega_gc=%s rad/s\n", label, g(m.phi_pm).c_str(), g(m.omega_gc).c_str());
    else
        std::printf("%s no gain crossover in band\n", label);
}

std::vector<std::string> chain_names(int n) {
    std::vector<std::string> q;
    for (int i = 1; i <= n; ++i) q.push_back("x" + std::to_string(i));
    return q;
}

gr1::GameSpec spec_from(const std::string& catalog, int questions) {
    if (!catalog.empty()) {
        auto c = lead::parse_catalog(json::parse(plant::read_file(catalog)));
        return lab::spec_for_catalog(c);
    }
    require(questions >= 1, "--questions must be >= 1");
    auto q = chain_names(questions);
    return gr1::build_spec(q, q.back());
}

volatile std::sig_atomic_t g_stop = 0;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"clab: remote control-lab toolkit"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "Config document (default: $CLAB_CONFIG or " CLAB_DEFAULT_CONFIG ")");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run an open- or closed-loop chirp experiment and write the record CSV");
    std::string sim_preset = "default", sim_out = "run.csv";
    std::optional<std::uint64_t> sim_seed;
    std::optional<double> sim_sigma;
    std::vector<double> sim_lead;
    sim->add_option("--preset", sim_preset, "Chirp/noise preset from the config")->capture_default_str();
    sim->add_option("--out", sim_out, "Output CSV (metadata goes to <out>.json)")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Noise seed override");
    sim->add_option("--sigma", sim_sigma, "Force-noise standard deviation override (N)");
    sim->add_option("--lead", sim_lead, "Closed loop with lead k p z")->expected(3);

    // bode
    auto* bode = app.add_subcommand("bode", "Estimate a Bode diagram from a record CSV");
    std::string bode_in, bode_out = "bode.csv", bode_svg;
    int bode_segments = 0;
    bool bode_single = false;
    std::optional<double> bode_gain;
    bode->add_option("record", bode_in, "Record CSV written by simulate")->required()->check(CLI::ExistingFile);
    bode->add_option("--segments", bode_segments, "Piecewise segment count (default from config)");
    bode->add_option("--out", bode_out, "Output Bode CSV")->capture_default_str();
    bode->add_flag("--single-fft", bode_single, "One FFT over the whole record instead of segments");
    bode->add_option("--k-ss", bode_gain, "Gain applied before reporting margins (default: config k_ss for open-loop records)");
    bode->add_option("--svg", bode_svg, "Also write a magnitude/phase plot");

    // design
    auto* design = app.add_subcommand("design", "Reference lead design for a desired phase margin, then verify by simulation");
    double phi_d = 45.0;
    std::string design_bode;
    bool design_no_run = false, design_json = false;
    design->add_option("--phi-d", phi_d, "Desired phase margin (deg)")->capture_default_str()->check(CLI::Range(0.0, 90.0));
    design->add_option("--bode", design_bode, "Measured open-loop plant Bode CSV (k_ss is applied); default: run the preset")
        ->check(CLI::ExistingFile);
    design->add_flag("--no-run", design_no_run, "Skip the closed-loop verification run");
    design->add_flag("--json", design_json, "Print the design as JSON");

    // synthesize
    auto* synth = app.add_subcommand("synthesize", "Synthesize the guidance engine strategy");
    int synth_q = 6;
    std::string synth_catalog, synth_out = "strategy.json", synth_dot;
    synth->add_option("--questions", synth_q, "Length of a generic question chain")->capture_default_str();
    synth->add_option("--catalog", synth_catalog, "Question catalog JSON instead of a generic chain")->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "Strategy JSON")->capture_default_str();
    synth->add_option("--dot", synth_dot, "Also write a Graphviz rendering");

    // verify
    auto* ver = app.add_subcommand("verify", "Synthesize and model-check the engine strategy");
    int ver_q = 6, ver_depth = 12, ver_len = 64;
    std::size_t ver_plays = 1000;
    std::uint64_t ver_seed = 1;
    std::string ver_catalog, ver_strategy;
    ver->add_option("--questions", ver_q, "Length of a generic question chain")->capture_default_str();
    ver->add_option("--catalog", ver_catalog, "Question catalog JSON")->check(CLI::ExistingFile);
    ver->add_option("--strategy", ver_strategy, "Check this strategy JSON instead of synthesizing")->check(CLI::ExistingFile);
    ver->add_option("--plays", ver_plays, "Randomized admissible plays")->capture_default_str();
    ver->add_option("--seed", ver_seed, "Play RNG seed")->capture_default_str();
    ver->add_option("--depth", ver_depth, "Exhaustive search depth")->capture_default_str();
    ver->add_option("--play-length", ver_len, "Steps per play")->capture_default_str();

    // dump-dot
    auto* dot = app.add_subcommand("dump-dot", "Write a Graphviz rendering of a strategy");
    std::string dot_strategy, dot_catalog, dot_out;
    int dot_q = 6;
    dot->add_option("--strategy", dot_strategy, "Strategy JSON (default: synthesize)")->check(CLI::ExistingFile);
    dot->add_option("--questions", dot_q, "Length of a generic question chain")->capture_default_str();
    dot->add_option("--catalog", dot_catalog, "Question catalog JSON")->check(CLI::ExistingFile);
    dot->add_option("--out", dot_out, "Output file (default: stdout)");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the lab server");
    std::optional<int> serve_port;
    std::string serve_data, serve_host;
    std::optional<double> serve_rt;
    serve->add_option("--port", serve_port, "Listen port (0 = any)");
    serve->add_option("--host", serve_host, "Listen address");
    serve->add_option("--data-dir", serve_data, "Runtime data directory");
    serve->add_option("--realtime-factor", serve_rt, "Run pacing (1 = wall clock, 0 = unpaced)");

    // export
    auto* exp = app.add_subcommand("export", "Copy an archive to a directory");
    std::string exp_id, exp_to, exp_data;
    exp->add_option("--archive", exp_id, "Archive id")->required();
    exp->add_option("--to", exp_to, "Target directory (default: ./<id>)");
    exp->add_option("--data-dir", exp_data, "Runtime data directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        std::fprintf(stderr, "error: bad_flags: %s\n", msg.c_str());
        return 2;
    }

    try {
        AppConfig cfg = config_at(config_path);

        if (*sim) {
            auto p = cfg.preset(sim_preset);
            if (sim_seed) p.noise.seed = *sim_seed;
            if (sim_sigma) p.noise.sigma_f = *sim_sigma;
            auto rec = sim_lead.empty()
                           ? plant::run_open_loop(cfg.plant, p.chirp, p.noise)
                           : plant::run_closed_loop(cfg.plant, lead::lead_section(sim_lead[0], sim_lead[1], sim_lead[2]), cfg.k_ss,
                                                    p.chirp, p.noise);
            plant::save_record(rec, sim_out);
            std::printf("wrote %s samples=%zu kind=%s\n", sim_out.c_str(), rec.size(), plant::to_string(rec.kind));
        } else if (*bode) {
            auto rec = plant::load_record(bode_in);
            int n = bode_segments > 0 ? bode_segments : cfg.segments;
            auto b = bode_single ? sysid::single_fft_bode(rec) : sysid::piecewise_fft_bode(rec, n);
            sysid::save_bode(b, bode_out);
            double gain = bode_gain.value_or(rec.kind == plant::RecordKind::open_loop ? cfg.k_ss : 1.0);
            std::printf("wrote %s points=%zu dropped=%d source=%s\n", bode_out.c_str(), b.size(), b.dropped, sysid::to_string(b.source));
            print_margins("margins", sysid::measure_margins(sysid::scale_gain(b, gain)));
            if (!bode_svg.empty()) {
                plant::TransferFunction truth = rec.controller ? plant::loop_tf(rec.params, rec.controller->lead, rec.controller->k_ss)
                                                               : plant::plant_tf(rec.params);
                auto ideal = plant::analytic_bode(truth, rec.params.effective_delay(), b.omega);
                plant::write_file(bode_svg, sysid::bode_svg(b, &ideal));
                std::printf("wrote %s\n", bode_svg.c_str());
            }
        } else if (*design) {
            sysid::BodeData open;
            if (!design_bode.empty()) {
                open = sysid::scale_gain(sysid::load_bode(design_bode), cfg.k_ss);
            } else {
                const auto& p = cfg.preset(cfg.server.preset);
                open = sysid::scale_gain(sysid::piecewise_fft_bode(plant::run_open_loop(cfg.plant, p.chirp, p.noise), cfg.segments), cfg.k_ss);
            }
            auto r = lead::reference_design(open, phi_d);
            json j{{"phi_d", r.phi_d},         {"phi_pm", r.phi_pm}, {"omega_gc_min", r.omega_gc_min},
                   {"delta_phi", r.delta_phi}, {"phi_max", r.phi_max}, {"alpha", r.alpha},
                   {"omega_gc_max", r.omega_gc_max}, {"omega_gc", r.omega_gc}, {"k", r.k},
                   {"p", r.p},                 {"z", r.z},           {"predicted_pm", r.predicted_pm}};
            if (!design_no_run) {
                const auto& p = cfg.preset(cfg.server.preset);
                auto cl = plant::run_closed_loop(cfg.plant, lead::lead_section(r.k, r.p, r.z), cfg.k_ss, p.chirp, p.noise);
                auto m = sysid::measure_margins(sysid::piecewise_fft_bode(cl, cfg.segments));
                j["achieved_pm"] = m.crossover_found ? json(m.phi_pm) : json();
                j["achieved_omega_gc"] = m.crossover_found ? json(m.omega_gc) : json();
            }
            if (design_json) {
                std::printf("%s\n", j.dump(2).c_str());
            } else {
                for (const char* k : {"phi_d", "phi_pm", "omega_gc_min", "delta_phi", "phi_max", "alpha", "omega_gc_max", "omega_gc",
                                      "k", "p", "z", "predicted_pm", "achieved_pm", "achieved_omega_gc"})
                    if (j.contains(k)) std::printf("%-18s %s\n", k, j[k].is_null() ? "none" : g(j[k].get<double>()).c_str());
            }
        } else if (*synth) {
            auto spec = spec_from(synth_catalog, synth_q);
            auto t0 = std::chrono::steady_clock::now();
            auto st = gr1::synthesize(spec);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            plant::write_file(synth_out, gr1::strategy_to_json(st).dump(2) + "\n");
            if (!synth_dot.empty()) plant::write_file(synth_dot, gr1::strategy_to_dot(st));
            std::printf("wrote %s states=%zu raw_states=%zu arena_states=%zu transitions=%zu env_aps=%zu sys_aps=%zu seconds=%.3f\n",
                        synth_out.c_str(), st.states.size(), st.raw_states, st.arena_states, st.transition_count(),
                        spec.count(gr1::Owner::environment), spec.count(gr1::Owner::system), secs);
        } else if (*ver) {
            auto spec = spec_from(ver_catalog, ver_q);
            auto st = ver_strategy.empty() ? gr1::synthesize(spec) : gr1::strategy_from_json(json::parse(plant::read_file(ver_strategy)));
            gr1::VerifyOptions o;
            o.plays = ver_plays;
            o.seed = ver_seed;
            o.bfs_depth = ver_depth;
            o.play_length = ver_len;
            auto rep = gr1::verify(st, spec, o);
            std::printf("plays=%zu play_steps=%zu bfs_depth=%d bfs_nodes=%zu transitions_checked=%zu states=%zu covered=%zu violations=%zu\n",
                        rep.plays, rep.play_steps, rep.bfs_depth, rep.bfs_nodes, rep.transitions_checked, rep.states_total,
                        rep.states_covered, rep.violation_count);
            for (const auto& v : rep.violations)
                std::printf("violation %s: %s (trace %zu steps)\n", v.property.c_str(), v.detail.c_str(), v.trace.size());
            if (!rep.ok()) {
                std::fprintf(stderr, "error: verification_failed: %zu violations\n", rep.violation_count);
                return 1;
            }
        } else if (*dot) {
            auto st = dot_strategy.empty() ? gr1::synthesize(spec_from(dot_catalog, dot_q))
                                           : gr1::strategy_from_json(json::parse(plant::read_file(dot_strategy)));
            auto text = gr1::strategy_to_dot(st);
            if (dot_out.empty())
                std::fputs(text.c_str(), stdout);
            else
                plant::write_file(dot_out, text);
        } else if (*serve) {
            if (serve_port) cfg.server.port = *serve_port;
            if (!serve_data.empty()) cfg.server.data_dir = serve_data;
            if (!serve_host.empty()) cfg.server.host = serve_host;
            if (serve_rt) cfg.server.realtime_factor = *serve_rt;
            lab::SystemClock clock;
            lab::LabService svc(cfg, clock);
            lab::HttpServer http(svc);
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            int port = http.start(cfg.server.host, cfg.server.port);
            std::printf("listening on %s:%d data_dir=%s\n", cfg.server.host.c_str(), port, cfg.server.data_dir.c_str());
            std::fflush(stdout);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            http.stop();
        } else if (*exp) {
            if (!exp_data.empty()) cfg.server.data_dir = exp_data;
            lab::ArchiveStore store(fs::path(cfg.server.data_dir) / "archives");
            if (!store.exists(exp_id)) throw Error(ErrorCode::not_found, "no archive '" + exp_id + "' in " + store.root().string());
            fs::path to = exp_to.empty() ? fs::path(exp_id) : fs::path(exp_to);
            if (fs::exists(to) && !fs::is_empty(to)) throw Error(ErrorCode::conflict, "target " + to.string() + " is not empty");
            fs::create_directories(to);
            std::size_t n = 0;
            for (const auto& e : fs::directory_iterator(store.root() / exp_id)) {
                fs::copy_file(e.path(), to / e.path().filename());
                ++n;
            }
            std::printf("exported %s files=%zu to %s\n", exp_id.c_str(), n, to.string().c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", to_string(e.code()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
