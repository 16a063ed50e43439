#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "clab/plant/experiment.hpp"

namespace clab::lab {

// Parameters carried by a trigger message.
struct RunRequest {
    std::string experiment;
    plant::RecordKind kind = plant::RecordKind::open_loop;
    plant::PlantParams params;
    plant::ChirpConfig chirp;
    plant::NoiseConfig noise;
    std::optional<plant::TransferFunction> lead;
    double k_ss = 1.0;
};

// Reply to a trigger: a result carries the record, an error carries a message.
struct MachineReply {
    bool ok = false;
    plant::ExperimentRecord record;
    std::string error;
};

// Called once per sample while the device runs.
using SampleSink = std::function<void(std::size_t k, double t, double u, double f)>;

class Machine {
public:
    virtual ~Machine() = default;
    virtual MachineReply trigger(const RunRequest& req, const SampleSink& sink) = 0;
};

// Runs the plant model and replays the samples at realtime_factor x wall speed (0 = as fast as possible).
class SimulatedMachine : public Machine {
public:
    explicit SimulatedMachine(double realtime_factor = 0.0) : realtime_factor_(realtime_factor) {
        require(realtime_factor >= 0.0, "machine: realtime_factor must be >= 0");
    }

    // Test hook: the next trigger fails after emitting `after_fraction` of its samples.
    void inject_error(std::string message, double after_fraction = 0.5) {
        std::lock_guard lk(mu_);
        fault_ = Fault{std::move(message), after_fraction};
    }

    MachineReply trigger(const RunRequest& req, const SampleSink& sink) override {
        std::optional<Fault> fault;
        {
            std::lock_guard lk(mu_);
            fault.swap(fault_);
        }
        MachineReply reply;
        try {
            reply.record = req.kind == plant::RecordKind::open_loop
                               ? plant::run_open_loop(req.params, req.chirp, req.noise)
                               : plant::run_closed_loop(req.params, *req.lead, req.k_ss, req.chirp, req.noise);
        } catch (const std::exception& e) {
            reply.error = e.what();
            return reply;
        }
        const auto& r = reply.record;
        std::size_t stop = r.size();
        if (fault) stop = static_cast<std::size_t>(fault->after_fraction * static_cast<double>(r.size()));
        auto t0 = std::chrono::steady_clock::now();
        for (std::size_t k = 0; k < stop; ++k) {
            if (realtime_factor_ > 0.0 && k % 10 == 0) {
                auto due = t0 + std::chrono::duration<double>((r.t[k] - r.t[0]) / realtime_factor_);
                std::this_thread::sleep_until(due);
            }
            if (sink) sink(k, r.t[k], r.u[k], r.f[k]);
        }
        if (fault) {
            reply.record = {};
            reply.error = fault->message;
            return reply;
        }
        reply.ok = true;
        return reply;
    }

private:
    struct Fault {
        std::string message;
        double after_fraction;
    };
    double realtime_factor_;
    std::optional<Fault> fault_;
    std::mutex mu_;
};

} // namespace clab::lab
