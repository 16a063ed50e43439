#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

// service.hpp (Eigen) must precede httplib.h: <resolv.h> defines a _res macro.
#include "clab/lab/service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace clab::lab {

inline int http_status(ErrorCode c) {
    switch (c) {
    case ErrorCode::invalid_argument: return 400;
    case ErrorCode::domain: return 422;
    case ErrorCode::protocol_violation:
    case ErrorCode::conflict: return 409;
    case ErrorCode::not_found: return 404;
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::forbidden: return 403;
    case ErrorCode::unrealizable: return 500;
    }
    return 500;
}

// HTTP/NDJSON front end for a LabService.
class HttpServer {
public:
    explicit HttpServer(LabService& svc) : svc_(svc) { routes(); }

    ~HttpServer() { stop(); }

    // Binds and serves on a background thread; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host, int port) {
        int bound = port == 0 ? srv_.bind_to_any_port(host) : (srv_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw Error(ErrorCode::conflict, "http: cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { srv_.listen_after_bind(); });
        srv_.wait_until_ready();
        return bound;
    }

    // Blocking variant for the CLI.
    bool listen(const std::string& host, int port) { return srv_.listen(host, port); }

    void stop() {
        srv_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void send_json(Res& res, const nlohmann::json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    static nlohmann::json body(const Req& req) {
        if (req.body.empty()) return nlohmann::json::object();
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be a JSON object");
        return j;
    }

    static std::string str(const nlohmann::json& j, const char* key) {
        if (!j.contains(key) || !j[key].is_string()) throw Error(ErrorCode::invalid_argument, std::string("missing string field '") + key + "'");
        return j[key].get<std::string>();
    }

    std::string user(const Req& req) const {
        auto h = req.get_header_value("Authorization");
        const std::string prefix = "Bearer ";
        if (h.rfind(prefix, 0) != 0) throw Error(ErrorCode::unauthorized, "missing bearer token");
        return svc_.authenticate(h.substr(prefix.size()));
    }

    template <class F>
    httplib::Server::Handler guard(F f) {
        return [f](const Req& req, Res& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_json(res, {{"error", to_string(e.code())}, {"message", e.what()}}, http_status(e.code()));
            } catch (const nlohmann::json::exception& e) {
                send_json(res, {{"error", "invalid_argument"}, {"message", e.what()}}, 400);
            } catch (const std::exception& e) {
                send_json(res, {{"error", "internal"}, {"message", e.what()}}, 500);
            }
        };
    }

    void routes() {
        srv_.Get("/health", guard([](const Req&, Res& res) { send_json(res, {{"ok", true}}); }));
        srv_.Post("/login", guard([this](const Req& req, Res& res) {
            auto b = body(req);
            send_json(res, svc_.login(str(b, "user_id"), b.value("password", "")));
        }));
        srv_.Get("/experiments", guard([this](const Req& req, Res& res) { send_json(res, svc_.experiments(user(req))); }));
        srv_.Get(R"(/prelab/([^/]+))", guard([this](const Req& req, Res& res) {
            send_json(res, svc_.prelab(user(req), req.matches[1]));
        }));
        srv_.Post(R"(/prelab/([^/]+))", guard([this](const Req& req, Res& res) {
            auto b = body(req);
            if (!b.contains("answer")) throw Error(ErrorCode::invalid_argument, "missing field 'answer'");
            send_json(res, svc_.submit_prelab(user(req), req.matches[1], str(b, "question_id"), b["answer"]));
        }));
        srv_.Get(R"(/calendar/([^/]+))", guard([this](const Req& req, Res& res) {
            auto u = user(req);
            Seconds week = req.has_param("week") ? parse_time(req.get_param_value("week")) : day_floor(svc_.clock().now());
            send_json(res, svc_.calendar(u, req.matches[1], week));
        }));
        srv_.Get("/reservations", guard([this](const Req& req, Res& res) { send_json(res, svc_.reservations(user(req))); }));
        srv_.Post("/reserve", guard([this](const Req& req, Res& res) {
            auto u = user(req);
            auto b = body(req);
            if (!b.contains("start")) throw Error(ErrorCode::invalid_argument, "missing field 'start'");
            Seconds start = b["start"].is_number_integer() ? b["start"].get<Seconds>() : parse_time(str(b, "start"));
            send_json(res, svc_.reserve(u, str(b, "experiment"), start), 201);
        }));
        srv_.Delete(R"(/reserve/([^/]+))", guard([this](const Req& req, Res& res) {
            svc_.cancel(user(req), req.matches[1]);
            send_json(res, {{"cancelled", std::string(req.matches[1])}});
        }));
        srv_.Post(R"(/lab/([^/]+)/start)", guard([this](const Req& req, Res& res) {
            auto u = user(req);
            auto b = body(req);
            std::optional<double> phi_d;
            if (b.contains("phi_d")) phi_d = b["phi_d"].get<double>();
            send_json(res, svc_.start_lab(u, req.matches[1], phi_d));
        }));
        srv_.Post(R"(/lab/([^/]+)/event)", guard([this](const Req& req, Res& res) {
            auto u = user(req);
            send_json(res, svc_.lab_event(u, req.matches[1], body(req)));
        }));
        srv_.Post(R"(/lab/([^/]+)/end)", guard([this](const Req& req, Res& res) {
            svc_.end_lab(user(req), req.matches[1]);
            send_json(res, {{"ended", true}});
        }));
        srv_.Get(R"(/lab/([^/]+)/state)", guard([this](const Req& req, Res& res) {
            send_json(res, svc_.lab_state(user(req), req.matches[1]));
        }));
        srv_.Get(R"(/lab/([^/]+)/stream)", guard([this](const Req& req, Res& res) {
            auto sub = svc_.subscribe(user(req), req.matches[1]);
            res.set_chunked_content_provider(
                "application/x-ndjson",
                [sub](std::size_t, httplib::DataSink& sink) {
                    auto line = sub->next(std::chrono::milliseconds(200));
                    if (line && !sink.write(line->data(), line->size())) return false;
                    if (!line && !sink.is_writable()) return false;
                    if (sub->finished()) sink.done();
                    return true;
                },
                [sub](bool) { sub->cancel(); });
        }));
        srv_.Get("/archives", guard([this](const Req& req, Res& res) { send_json(res, svc_.archive_list(user(req))); }));
        srv_.Get(R"(/archive/([^/]+))", guard([this](const Req& req, Res& res) {
            res.set_content(svc_.archive_file(user(req), req.matches[1], "meta.json"), "application/json");
        }));
        srv_.Get(R"(/archive/([^/]+)/([^/]+))", guard([this](const Req& req, Res& res) {
            std::string file = req.matches[2];
            auto type = file.size() > 4 && file.ends_with(".csv") ? "text/csv" : "application/json";
            res.set_content(svc_.archive_file(user(req), req.matches[1], file), type);
        }));
    }

    LabService& svc_;
    httplib::Server srv_;
    std::thread thread_;
};

} // namespace clab::lab
