#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "clab/config.hpp"
#include "clab/gr1/session.hpp"
#include "clab/gr1/solver.hpp"
#include "clab/lab/archive.hpp"
#include "clab/lab/clock.hpp"
#include "clab/lab/machine.hpp"
#include "clab/lab/prelab.hpp"
#include "clab/lab/scheduler.hpp"
#include "clab/lab/store.hpp"
#include "clab/lab/stream.hpp"
#include "clab/lab/users.hpp"
#include "clab/lead/checker.hpp"
#include "clab/sysid/fft_bode.hpp"
#include "clab/sysid/io.hpp"

namespace clab::lab {

using nlohmann::json;

struct Experiment {
    std::string id;
    std::string title;
    plant::RecordKind kind = plant::RecordKind::open_loop;
    lead::QuestionCatalog catalog;
    gr1::GameSpec spec;
    gr1::Strategy strategy;
};

// Reads a strategy from <dir>/<spec hash>.json, or synthesizes and stores it.
inline gr1::Strategy cached_strategy(const gr1::GameSpec& spec, const fs::path& dir) {
    auto hash = gr1::spec_hash(spec);
    fs::path p = dir / (hash + ".json");
    if (fs::exists(p)) {
        try {
            auto s = gr1::strategy_from_json(read_json_file(p));
            if (s.spec_hash == hash && s.vars == spec.names()) return s;
        } catch (const std::exception&) {
        }
    }
    auto s = gr1::synthesize(spec);
    fs::create_directories(dir);
    JsonStore(dir).write(hash + ".json", gr1::strategy_to_json(s));
    return s;
}

inline gr1::GameSpec spec_for_catalog(const lead::QuestionCatalog& c) {
    auto ids = c.ids();
    std::vector<std::pair<std::string, std::string>> extra;
    for (std::size_t i = 0; i < c.questions.size(); ++i)
        for (const auto& p : c.questions[i].prerequisites)
            if (i == 0 || p != ids[i - 1]) extra.emplace_back(p, ids[i]);
    return gr1::build_spec(ids, ids.back(), extra);
}

struct LabContext {
    std::string user_id;
    const Experiment* exp = nullptr;
    Reservation reservation;
    std::unique_ptr<gr1::EngineSession> engine;
    lead::LeadDesignState design;
    sysid::BodeData baseline;  // k_ss applied
    std::string baseline_source;
    std::optional<lead::ReferenceDesign> reference;
    json log = json::array();
    std::string run_status = "idle";  // idle | running | done | error
    std::string last_archive;
    std::string last_error;
    std::mutex mu;
};

class LabService {
public:
    LabService(AppConfig cfg, const Clock& clock, std::shared_ptr<Machine> machine = nullptr)
        : cfg_(std::move(cfg)),
          clock_(clock),
          machine_(machine ? std::move(machine) : std::make_shared<SimulatedMachine>(cfg_.server.realtime_factor)),
          store_(cfg_.server.data_dir),
          archives_(fs::path(cfg_.server.data_dir) / "archives"),
          scheduler_(SchedulerConfig{cfg_.server.block_s, cfg_.server.cooldown_s, cfg_.server.slot_s, cfg_.server.day_start_s,
                                     cfg_.server.day_end_s},
                     clock_, &store_),
          users_(read_json_file(fs::path(cfg_.server.content_dir) / "users.json")),
          prelab_(load_prelab(), &store_),
          stream_(cfg_.server.backfill_s, cfg_.server.queue_frames) {
        fs::path qdir = fs::path(cfg_.server.content_dir) / "questions";
        require(fs::is_directory(qdir), "server: missing question directory " + qdir.string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(qdir))
            if (e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto doc = read_json_file(f);
            auto e = std::make_unique<Experiment>();
            e->catalog = lead::parse_catalog(doc);
            e->id = e->catalog.experiment;
            e->title = doc.value("title", e->id);
            e->kind = plant::record_kind_from_string(doc.value("kind", "open_loop"));
            e->spec = spec_for_catalog(e->catalog);
            e->strategy = cached_strategy(e->spec, fs::path(cfg_.server.data_dir) / "strategies");
            require(!experiments_.count(e->id), "server: duplicate experiment '" + e->id + "'");
            experiments_.emplace(e->id, std::move(e));
        }
        require(!experiments_.empty(), "server: no experiments configured");
    }

    ~LabService() {
        std::unique_lock lk(mu_);
        idle_cv_.wait(lk, [&] { return !run_active_; });
        lk.unlock();
        if (runner_.joinable()) runner_.join();
    }

    LabService(const LabService&) = delete;
    LabService& operator=(const LabService&) = delete;

    const AppConfig& config() const { return cfg_; }
    const Clock& clock() const { return clock_; }
    Broadcaster& broadcaster() { return stream_; }
    ArchiveStore& archives() { return archives_; }
    Scheduler& scheduler() { return scheduler_; }
    const Experiment& experiment(const std::string& id) const {
        auto it = experiments_.find(id);
        if (it == experiments_.end()) throw Error(ErrorCode::not_found, "unknown experiment '" + id + "'");
        return *it->second;
    }

    // ---- sessions

    json login(const std::string& id, const std::string& password) {
        auto s = users_.login(id, password);
        return {{"user_id", s.user_id}, {"display_name", s.display_name}, {"token", s.auth_token},
                {"active_login_count", s.active_login_count}};
    }

    std::string authenticate(const std::string& token) const { return users_.authenticate(token); }

    json experiments(const std::string& user) const {
        json out = json::array();
        for (const auto& [id, e] : experiments_) {
            auto pending = unfinished_reservation(user, id);
            auto done = prelab_.completed_ids(user, id);
            out.push_back({{"id", id},
                           {"title", e->title},
                           {"kind", plant::to_string(e->kind)},
                           {"questions", e->catalog.ids()},
                           {"prelab_total", prelab_.questions(id).size()},
                           {"prelab_done", done.size()},
                           {"prelab_complete", prelab_.complete(user, id)},
                           {"reservation", pending ? reservation_json(*pending, scheduler_.status(*pending)) : json()},
                           {"lab_unlocked", scheduler_.active_for(user, id).has_value()}});
        }
        return out;
    }

    // ---- prelab

    json prelab(const std::string& user, const std::string& exp) const {
        experiment(exp);
        auto done = prelab_.completed_ids(user, exp);
        json qs = json::array();
        bool open = true;
        for (const auto& q : prelab_.questions(exp)) {
            bool c = done.count(q.id) > 0;
            json j{{"id", q.id}, {"prompt", q.prompt}, {"kind", kind_name(q.kind)}, {"completed", c},
                   {"available", c || open}, {"hint_available", !q.hint.empty()}};
            if (!q.image.empty()) j["image"] = q.image;
            if (!q.options.empty()) j["options"] = q.options;
            qs.push_back(j);
            if (!c) open = false;
        }
        return {{"experiment", exp}, {"questions", qs}, {"completed", prelab_.complete(user, exp)}};
    }

    json submit_prelab(const std::string& user, const std::string& exp, const std::string& qid, const json& answer) {
        experiment(exp);
        auto v = prelab_.submit(user, exp, qid, answer);
        json j{{"question_id", qid}, {"correct", v.correct}, {"completed", v.completed}};
        if (!v.correct) j["hint"] = v.hint;
        return j;
    }

    // ---- scheduling

    json calendar(const std::string& user, const std::string& exp, Seconds week_start) const {
        experiment(exp);
        bool may_book = prelab_.complete(user, exp) && !unfinished_reservation(user, exp);
        json days = json::array();
        for (const auto& d : scheduler_.calendar(user, week_start)) {
            json cells = json::array();
            for (const auto& c : d.cells) {
                json cj{{"start", format_time(c.start)}, {"start_epoch", c.start}, {"color", c.color},
                        {"selectable", c.selectable && may_book}};
                if (!c.reservation_id.empty()) cj["reservation_id"] = c.reservation_id;
                cells.push_back(cj);
            }
            days.push_back({{"date", d.date}, {"cells", cells}});
        }
        const auto& sc = scheduler_.config();
        return {{"experiment", exp},
                {"week_start", format_date(week_start)},
                {"slot_s", sc.slot},
                {"block_s", sc.block},
                {"cooldown_s", sc.cooldown},
                {"prelab_complete", prelab_.complete(user, exp)},
                {"days", days}};
    }

    json reserve(const std::string& user, const std::string& exp, Seconds start) {
        experiment(exp);
        if (!prelab_.complete(user, exp))
            throw Error(ErrorCode::forbidden, "reserve: prelab for '" + exp + "' is not complete");
        auto r = scheduler_.reserve(user, exp, start);
        return reservation_json(r, scheduler_.status(r));
    }

    void cancel(const std::string& user, const std::string& id) { scheduler_.cancel(user, id); }

    json reservations(const std::string& user) const {
        json out = json::array();
        for (const auto& r : scheduler_.list())
            if (r.user_id == user) out.push_back(reservation_json(r, scheduler_.status(r)));
        return out;
    }

    // ---- lab

    json start_lab(const std::string& user, const std::string& exp_id, std::optional<double> phi_d = std::nullopt) {
        const Experiment& exp = experiment(exp_id);
        auto res = scheduler_.active_for(user, exp_id);
        if (!res) {
            auto pending = unfinished_reservation(user, exp_id);
            if (pending)
                throw Error(ErrorCode::conflict, "start_lab: reservation " + pending->id + " opens at " + format_time(pending->start));
            throw Error(ErrorCode::conflict, "start_lab: no active reservation for '" + exp_id + "'");
        }
        std::shared_ptr<LabContext> ctx;
        {
            std::lock_guard lk(mu_);
            if (holder_ && !holder_expired()) {
                if (holder_->user_id != user || holder_->exp->id != exp_id)
                    throw Error(ErrorCode::conflict, "start_lab: the machine is in use by another lab session");
                if (holder_->reservation.id == res->id) ctx = holder_;
            }
        }
        if (ctx) return lab_state_of(*ctx, true);

        double pd = phi_d.value_or(cfg_.server.default_phi_d);
        require(std::isfinite(pd) && pd > 0.0 && pd < 90.0, "start_lab: phi_d must be in (0, 90) deg");
        auto fresh = std::make_shared<LabContext>();
        fresh->user_id = user;
        fresh->exp = &exp;
        fresh->reservation = *res;
        fresh->engine = std::make_unique<gr1::EngineSession>(exp.strategy, exp.spec);
        if (exp.kind == plant::RecordKind::closed_loop) {
            auto [b, source] = baseline_for(user);
            auto m = sysid::measure_margins(b);
            if (!m.crossover_found) throw Error(ErrorCode::domain, "start_lab: baseline Bode has no gain crossover");
            fresh->baseline = std::move(b);
            fresh->baseline_source = source;
            fresh->design.k_ss = cfg_.k_ss;
            fresh->design.phi_pm = m.phi_pm;
            fresh->design.omega_gc_min = m.omega_gc;
            fresh->design.phi_d = pd;
            try {
                fresh->reference = lead::reference_design(fresh->baseline, pd);
            } catch (const Error& e) {
                throw Error(ErrorCode::domain, std::string("start_lab: phi_d infeasible for this plant: ") + e.what());
            }
        }
        {
            std::lock_guard lk(mu_);
            if (holder_ && !holder_expired() && holder_ != ctx) {
                if (holder_->user_id != user || holder_->exp->id != exp_id)
                    throw Error(ErrorCode::conflict, "start_lab: the machine is in use by another lab session");
                if (holder_->reservation.id == res->id) return lab_state_of(*holder_, true);
            }
            holder_ = fresh;
        }
        append_log(*fresh, {{"event", "start_lab"}, {"reservation", res->id}});
        return lab_state_of(*fresh, false);
    }

    // Releases the machine lock early; a running experiment is allowed to finish first.
    void end_lab(const std::string& user, const std::string& exp_id) {
        std::lock_guard lk(mu_);
        if (!holder_ || holder_->user_id != user || holder_->exp->id != exp_id)
            throw Error(ErrorCode::conflict, "end_lab: no lab session for '" + exp_id + "'");
        if (run_active_) throw Error(ErrorCode::conflict, "end_lab: an experiment run is in progress");
        holder_.reset();
    }

    json lab_state(const std::string& user, const std::string& exp_id) {
        auto ctx = context(user, exp_id);
        std::lock_guard lk(ctx->mu);
        return lab_state_of(*ctx, false);
    }

    json lab_event(const std::string& user, const std::string& exp_id, const json& ev) {
        auto ctx = context(user, exp_id);
        if (clock_.now() >= ctx->reservation.end())
            throw Error(ErrorCode::conflict, "lab_event: reservation " + ctx->reservation.id + " has ended");
        require(ev.is_object() && ev.contains("type") && ev["type"].is_string(), "lab_event: body needs a string 'type'");
        std::string type = ev["type"];
        std::lock_guard lk(ctx->mu);
        json out;
        if (type == "answer") {
            out = answer(*ctx, ev);
        } else if (type == "start_run") {
            out = start_run(ctx);
        } else if (type == "reset") {
            auto r = ctx->engine->step(ctx->exp->spec.bit("h_reset"));
            ctx->design.clear_answers();
            append_log(*ctx, {{"event", "reset"}});
            out = {{"reaction", reaction_json(r)}};
        } else {
            throw Error(ErrorCode::invalid_argument, "lab_event: unknown event type '" + type + "'");
        }
        out["state"] = lab_state_of(*ctx, false);
        return out;
    }

    std::shared_ptr<Subscription> subscribe(const std::string& user, const std::string& exp_id) {
        auto ctx = context(user, exp_id);
        std::lock_guard lk(ctx->mu);
        if (!stream_.live() && (ctx->run_status == "done" || ctx->run_status == "error"))
            return stream_.completed(ctx->last_archive, ctx->last_error);
        return stream_.subscribe();
    }

    // Blocks until no experiment run is in progress.
    void wait_idle() {
        std::unique_lock lk(mu_);
        idle_cv_.wait(lk, [&] { return !run_active_; });
    }

    bool run_active() const {
        std::lock_guard lk(mu_);
        return run_active_;
    }

    // ---- archives

    json archive_meta(const std::string& user, const std::string& id) const {
        auto m = archives_.meta(id);
        if (m.value("user_id", "") != user) throw Error(ErrorCode::forbidden, "archive " + id + " belongs to another user");
        return m;
    }

    std::string archive_file(const std::string& user, const std::string& id, const std::string& file) const {
        archive_meta(user, id);
        return archives_.read(id, file);
    }

    json archive_list(const std::string& user) const {
        json out = json::array();
        for (const auto& id : archives_.ids()) {
            auto m = archives_.meta(id);
            if (m.value("user_id", "") != user) continue;
            out.push_back({{"archive_id", id}, {"experiment", m.value("experiment", "")}, {"status", m.value("status", "")},
                           {"finished", m.value("finished", "")}});
        }
        return out;
    }

private:
    static const char* kind_name(PrelabKind k) {
        switch (k) {
        case PrelabKind::exact_free_response: return "exact_free_response";
        case PrelabKind::range_free_response: return "range_free_response";
        case PrelabKind::multiple_choice: return "multiple_choice";
        }
        return "?";
    }

    std::map<std::string, std::vector<PrelabQuestion>> load_prelab() const {
        std::map<std::string, std::vector<PrelabQuestion>> out;
        fs::path dir = fs::path(cfg_.server.content_dir) / "prelab";
        if (!fs::is_directory(dir)) return out;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() != ".json") continue;
            auto doc = read_json_file(e.path());
            out[doc.at("experiment").get<std::string>()] = parse_prelab(doc);
        }
        return out;
    }

    std::optional<Reservation> unfinished_reservation(const std::string& user, const std::string& exp) const {
        for (const auto& r : scheduler_.list()) {
            if (r.user_id != user || r.experiment != exp) continue;
            auto s = scheduler_.status(r);
            if (s == ReservationStatus::reserved || s == ReservationStatus::active) return r;
        }
        return std::nullopt;
    }

    // Caller holds mu_.
    bool holder_expired() const { return !run_active_ && clock_.now() >= holder_->reservation.end(); }

    std::shared_ptr<LabContext> context(const std::string& user, const std::string& exp_id) {
        experiment(exp_id);
        std::lock_guard lk(mu_);
        if (!holder_ || holder_->user_id != user || holder_->exp->id != exp_id)
            throw Error(ErrorCode::conflict, "no active lab session for '" + exp_id + "'; start the lab first");
        return holder_;
    }

    std::pair<sysid::BodeData, std::string> baseline_for(const std::string& user) {
        auto ids = archives_.ids();
        for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
            auto m = archives_.meta(*it);
            if (m.value("user_id", "") == user && m.value("kind", "") == "open_loop" && m.value("status", "") == "ok") {
                auto b = sysid::parse_bode(archives_.read(*it, "bode.csv"));
                return {sysid::scale_gain(std::move(b), cfg_.k_ss), *it};
            }
        }
        std::lock_guard lk(baseline_mu_);
        if (!reference_baseline_) {
            const auto& p = cfg_.preset(cfg_.server.preset);
            auto rec = plant::run_open_loop(cfg_.plant, p.chirp, p.noise);
            reference_baseline_ = sysid::piecewise_fft_bode(rec, cfg_.segments);
        }
        return {sysid::scale_gain(*reference_baseline_, cfg_.k_ss), "reference_run"};
    }

    static json reaction_json(const gr1::Reaction& r) {
        return {{"state", r.state},
                {"mode", r.mode},
                {"active", r.active},
                {"asking", r.asking ? json(*r.asking) : json()},
                {"checking", r.checking ? json(*r.checking) : json()},
                {"offers_experiment", r.offers_experiment},
                {"offers_reset", r.offers_reset},
                {"running", r.triggers_experiment},
                {"result_held", r.result_held}};
    }

    void append_log(LabContext& ctx, json entry) {
        entry["time"] = format_time(clock_.now());
        ctx.log.push_back(std::move(entry));
    }

    json lab_state_of(LabContext& ctx, bool attached) const {
        json qs = json::array();
        for (const auto& q : ctx.exp->catalog.questions)
            qs.push_back({{"id", q.id}, {"prompt", q.prompt}, {"components", q.components}, {"labels", q.labels}});
        json accepted = json::object();
        for (const auto& [k, v] : ctx.engine->accepted_values()) accepted[k] = v;
        json j{{"experiment", ctx.exp->id},
               {"user_id", ctx.user_id},
               {"reservation", reservation_json(ctx.reservation, scheduler_.status(ctx.reservation))},
               {"attached", attached},
               {"questions", qs},
               {"engine", reaction_json(ctx.engine->reaction())},
               {"accepted", accepted},
               {"run", {{"status", ctx.run_status}, {"archive_id", ctx.last_archive}, {"error", ctx.last_error}}},
               {"log_length", ctx.log.size()}};
        if (ctx.exp->kind == plant::RecordKind::closed_loop) {
            j["design"] = ctx.design;
            j["baseline"] = {{"source", ctx.baseline_source},
                             {"phi_pm", ctx.design.phi_pm},
                             {"omega_gc_min", ctx.design.omega_gc_min},
                             {"phi_d", ctx.design.phi_d},
                             {"k_ss", ctx.design.k_ss},
                             {"omega", ctx.baseline.omega},
                             {"mag_db", ctx.baseline.mag_db},
                             {"phase_deg", ctx.baseline.phase_deg}};
        } else {
            j["chirp"] = cfg_.preset(cfg_.server.preset).chirp;
        }
        return j;
    }

    static std::vector<double> values_of(const json& v) {
        std::vector<double> out;
        if (v.is_number()) {
            out.push_back(v.get<double>());
        } else if (v.is_array()) {
            for (const auto& x : v) {
                require(x.is_number(), "answer: values must be numbers");
                out.push_back(x.get<double>());
            }
        } else {
            throw Error(ErrorCode::invalid_argument, "answer: 'value' must be a number or an array of numbers");
        }
        return out;
    }

    lead::AnswerVerdict grade(LabContext& ctx, const std::string& var, const std::vector<double>& v) {
        if (ctx.exp->kind == plant::RecordKind::closed_loop)
            return lead::check_answer(ctx.exp->catalog, var, v, ctx.design, ctx.baseline);
        // identification chain: confirm chirp parameters
        const auto& q = ctx.exp->catalog.find(var);
        const auto& c = cfg_.preset(cfg_.server.preset).chirp;
        std::map<std::string, double> known{{"omega_0", c.omega_0}, {"omega_1", c.omega_1}, {"u_a", c.u_a},
                                            {"u_b", c.u_b}, {"t_f", c.t_f}};
        auto it = known.find(var);
        require(it != known.end(), "no grading rule for question '" + var + "'");
        lead::AnswerVerdict out;
        double e = it->second;
        out.correct = q.tolerance.kind == "absolute" ? std::abs(v[0] - e) <= q.tolerance.value
                                                      : lead::detail::within_rel(v[0], e, q.tolerance.value);
        out.expected_summary = var + " = " + lead::detail::num(e);
        out.tolerance_used = q.tolerance.kind + " " + lead::detail::num(q.tolerance.value);
        return out;
    }

    json answer(LabContext& ctx, const json& ev) {
        require(ev.contains("var") && ev["var"].is_string(), "answer: missing string 'var'");
        require(ev.contains("value"), "answer: missing 'value'");
        std::string var = ev["var"];
        const auto& q = ctx.exp->catalog.find(var);
        auto values = values_of(ev["value"]);
        require(static_cast<int>(values.size()) == q.components,
                "answer: '" + var + "' expects " + std::to_string(q.components) + " value(s)");
        for (double x : values) require(std::isfinite(x), "answer: value is not finite");
        auto& spec = ctx.exp->spec;
        ctx.engine->submit(var, values);
        lead::AnswerVerdict v;
        try {
            v = grade(ctx, var, values);
        } catch (const Error& e) {
            v.correct = false;
            v.expected_summary = e.what();
        }
        auto r = ctx.engine->step(spec.bit(v.correct ? "c_true" : "c_false"));
        append_log(ctx, {{"event", "answer"}, {"var", var}, {"value", values}, {"correct", v.correct}});
        return {{"verdict", {{"var", var}, {"correct", v.correct}, {"expected", v.expected_summary}, {"tolerance", v.tolerance_used}}},
                {"reaction", reaction_json(r)}};
    }

    RunRequest request_for(const LabContext& ctx) const {
        const auto& p = cfg_.preset(cfg_.server.preset);
        RunRequest req;
        req.experiment = ctx.exp->id;
        req.kind = ctx.exp->kind;
        req.params = cfg_.plant;
        req.chirp = p.chirp;
        req.noise = p.noise;
        req.k_ss = cfg_.k_ss;
        if (req.kind == plant::RecordKind::closed_loop) {
            const auto& d = ctx.design;
            require(d.k && d.p && d.z, "start_run: controller parameters not accepted", ErrorCode::protocol_violation);
            req.lead = lead::lead_section(*d.k, *d.p, *d.z);
        }
        return req;
    }

    json start_run(const std::shared_ptr<LabContext>& ctx) {
        {
            std::lock_guard lk(mu_);
            if (run_active_) throw Error(ErrorCode::conflict, "start_run: the machine is already running an experiment");
        }
        auto& spec = ctx->exp->spec;
        auto req = request_for(*ctx);
        if (req.lead) {
            auto dc = plant::discretize(plant::series(plant::gain(req.k_ss), *req.lead), req.params.f_s);
            if (!dc.stable()) throw Error(ErrorCode::domain, "start_run: the accepted controller is unstable when discretized");
        }
        auto r = ctx->engine->step(spec.bit("h_exp"));
        require(r.triggers_experiment, "start_run: engine did not trigger the machine", ErrorCode::protocol_violation);
        {
            std::lock_guard lk(mu_);
            run_active_ = true;
            if (runner_.joinable()) runner_.join();
        }
        ctx->run_status = "running";
        ctx->last_error.clear();
        Seconds started = clock_.now();
        append_log(*ctx, {{"event", "start_run"}});
        stream_.begin_run(ctx->exp->id + "@" + format_time(started));
        json design = ctx->design;
        json log = ctx->log;
        {
            std::lock_guard lk(mu_);
            runner_ = std::thread([this, ctx, req, started, design, log] { run(ctx, req, started, design, log); });
        }
        return {{"reaction", reaction_json(r)}, {"run", {{"run_id", stream_.run_id()}}}};
    }

    void run(std::shared_ptr<LabContext> ctx, RunRequest req, Seconds started, json design, json log) {
        const int dec = cfg_.server.decimation;
        const double k_s = req.params.k_s;
        const auto chirp = req.chirp;
        MachineReply reply;
        try {
            reply = machine_->trigger(req, [&](std::size_t k, double t, double u, double f) {
                if (k % static_cast<std::size_t>(dec)) return;
                StreamFrame fr;
                fr.t = t;
                fr.u = u;
                fr.f = f;
                fr.belt = std::fmod(plant::chirp_phase(chirp, t), 2.0 * std::numbers::pi);
                fr.defl = f / k_s;
                stream_.publish(fr);
            });
        } catch (const std::exception& e) {
            reply.ok = false;
            reply.error = e.what();
        }
        std::string archive_id, error;
        try {
            archive_id = finalize(*ctx, req, reply, started, design, log);
        } catch (const std::exception& e) {
            error = std::string("finalize failed: ") + e.what();
        }
        if (!reply.ok) error = reply.error;
        {
            std::lock_guard lk(ctx->mu);
            stream_.finish(archive_id, error);
            auto& spec = ctx->exp->spec;
            bool ok = reply.ok && error.empty();
            ctx->engine->step(spec.bit(ok ? "m_result" : "m_error"));
            if (!ok) ctx->design.clear_answers();
            ctx->run_status = ok ? "done" : "error";
            ctx->last_archive = archive_id;
            ctx->last_error = error;
            append_log(*ctx, {{"event", ok ? "m_result" : "m_error"}, {"archive_id", archive_id}, {"error", error}});
        }
        {
            std::lock_guard lk(mu_);
            run_active_ = false;
        }
        idle_cv_.notify_all();
    }

    std::string finalize(const LabContext& ctx, const RunRequest& req, const MachineReply& reply, Seconds started,
                         const json& design, const json& log) {
        json meta{{"user_id", ctx.user_id},
                  {"experiment", ctx.exp->id},
                  {"kind", plant::to_string(req.kind)},
                  {"reservation_id", ctx.reservation.id},
                  {"started", format_time(started)},
                  {"finished", format_time(clock_.now())},
                  {"design", design},
                  {"event_log", log}};
        std::map<std::string, std::string> files;
        if (!reply.ok) {
            meta["status"] = "error";
            meta["error"] = reply.error;
            return archives_.create(meta, files);
        }
        const auto& rec = reply.record;
        auto bode = sysid::piecewise_fft_bode(rec, cfg_.segments);
        plant::TransferFunction truth = req.kind == plant::RecordKind::open_loop
                                            ? plant::plant_tf(req.params)
                                            : plant::loop_tf(req.params, *req.lead, req.k_ss);
        auto ideal = plant::analytic_bode(truth, req.params.effective_delay(), bode.omega);
        // Open-loop margins are read with the steady-state gain in front of the plant.
        double scale = req.kind == plant::RecordKind::open_loop ? req.k_ss : 1.0;
        auto m = sysid::measure_margins(sysid::scale_gain(bode, scale));
        auto mi = sysid::measure_margins(sysid::scale_gain(ideal, scale));
        auto margin_json = [](const sysid::MarginReport& r) {
            return json{{"phi_pm", r.crossover_found ? json(r.phi_pm) : json()},
                        {"omega_gc", r.crossover_found ? json(r.omega_gc) : json()},
                        {"crossover_found", r.crossover_found}};
        };
        meta["status"] = "ok";
        meta["segments"] = cfg_.segments;
        meta["bode_points"] = bode.size();
        meta["k_ss"] = req.k_ss;
        meta["margin_gain"] = scale;
        meta["margins"] = margin_json(m);
        meta["ideal_margins"] = margin_json(mi);
        meta["phi_pm"] = m.crossover_found ? json(m.phi_pm) : json();
        if (req.kind == plant::RecordKind::closed_loop) {
            meta["phi_d"] = ctx.design.phi_d;
            meta["open_loop_phi_pm"] = ctx.design.phi_pm;
            meta["baseline_source"] = ctx.baseline_source;
            meta["controller"] = {{"k", *ctx.design.k}, {"p", *ctx.design.p}, {"z", *ctx.design.z}};
        }
        files["record.csv"] = plant::record_csv(rec);
        files["record.csv.json"] = plant::record_metadata(rec).dump(2) + "\n";
        files["bode.csv"] = sysid::bode_csv(bode);
        files["ideal_bode.csv"] = sysid::bode_csv(ideal);
        return archives_.create(meta, files);
    }

    AppConfig cfg_;
    const Clock& clock_;
    std::shared_ptr<Machine> machine_;
    JsonStore store_;
    ArchiveStore archives_;
    Scheduler scheduler_;
    UserDirectory users_;
    PrelabBook prelab_;
    Broadcaster stream_;
    std::map<std::string, std::unique_ptr<Experiment>> experiments_;

    mutable std::mutex mu_;  // holder_, run_active_, runner_
    std::condition_variable idle_cv_;
    std::shared_ptr<LabContext> holder_;
    bool run_active_ = false;
    std::thread runner_;

    std::mutex baseline_mu_;
    std::optional<sysid::BodeData> reference_baseline_;
};

} // namespace clab::lab
