#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace clab::lab {

struct StreamFrame {
    std::uint64_t seq = 0;
    double t = 0, u = 0, f = 0;
    double belt = 0, defl = 0;
};

inline std::string frame_line(const StreamFrame& fr) {
    nlohmann::json j{{"seq", fr.seq}, {"t", fr.t}, {"u", fr.u}, {"f", fr.f}, {"anim", {{"belt", fr.belt}, {"defl", fr.defl}}}};
    return j.dump() + "\n";
}

inline std::string done_line(const std::string& archive_id, const std::string& error = "") {
    nlohmann::json j{{"done", true}, {"archive_id", archive_id}};
    if (!error.empty()) j["error"] = error;
    return j.dump() + "\n";
}

class Broadcaster;

// One client's view of a run. Bounded: when full the oldest line is dropped.
class Subscription {
public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    // Next NDJSON line, or nullopt on timeout or once the completion line has been taken.
    std::optional<std::string> next(std::chrono::milliseconds timeout) {
        std::unique_lock lk(mu_);
        cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || closed_; });
        if (queue_.empty()) return std::nullopt;
        std::string s = std::move(queue_.front());
        queue_.pop_front();
        return s;
    }

    bool finished() const {
        std::lock_guard lk(mu_);
        return closed_ && queue_.empty();
    }

    std::size_t dropped() const {
        std::lock_guard lk(mu_);
        return dropped_;
    }

    void cancel() {
        std::lock_guard lk(mu_);
        cancelled_ = true;
        closed_ = true;
        queue_.clear();
        cv_.notify_all();
    }

    bool cancelled() const {
        std::lock_guard lk(mu_);
        return cancelled_;
    }

private:
    friend class Broadcaster;

    void push(std::string line, bool last) {
        std::lock_guard lk(mu_);
        if (closed_) return;
        if (queue_.size() >= capacity_ && !last) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(std::move(line));
        if (last) closed_ = true;
        cv_.notify_all();
    }

    std::size_t capacity_;
    std::deque<std::string> queue_;
    std::size_t dropped_ = 0;
    bool closed_ = false;
    bool cancelled_ = false;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

// Fan-out from the single running experiment to any number of clients. publish never blocks on a client.
class Broadcaster {
public:
    Broadcaster(double backfill_seconds = 10.0, std::size_t queue_capacity = 4096)
        : backfill_(backfill_seconds), capacity_(queue_capacity) {}

    void begin_run(std::string run_id) {
        std::lock_guard lk(mu_);
        run_id_ = std::move(run_id);
        live_ = true;
        recent_.clear();
        done_.reset();
        seq_ = 0;
    }

    std::uint64_t publish(StreamFrame fr) {
        std::lock_guard lk(mu_);
        fr.seq = seq_++;
        std::string line = frame_line(fr);
        recent_.emplace_back(fr.t, line);
        while (!recent_.empty() && recent_.front().first < fr.t - backfill_) recent_.pop_front();
        prune();
        for (auto& s : subs_) s->push(line, false);
        return fr.seq;
    }

    void finish(const std::string& archive_id, const std::string& error = "") {
        std::lock_guard lk(mu_);
        done_ = done_line(archive_id, error);
        live_ = false;
        for (auto& s : subs_) s->push(*done_, true);
        subs_.clear();
    }

    // Mid-run joiners first receive the frames of the last backfill window. When idle the
    // subscriber waits for the next run.
    std::shared_ptr<Subscription> subscribe() {
        std::lock_guard lk(mu_);
        auto s = std::make_shared<Subscription>(capacity_);
        if (live_)
            for (const auto& [t, line] : recent_) s->push(line, false);
        prune();
        subs_.push_back(s);
        return s;
    }

    // A subscription that only carries the given completion line.
    std::shared_ptr<Subscription> completed(const std::string& archive_id, const std::string& error = "") const {
        auto s = std::make_shared<Subscription>(capacity_);
        s->push(done_line(archive_id, error), true);
        return s;
    }

    bool live() const {
        std::lock_guard lk(mu_);
        return live_;
    }

    std::string run_id() const {
        std::lock_guard lk(mu_);
        return run_id_;
    }

    std::uint64_t frames_published() const {
        std::lock_guard lk(mu_);
        return seq_;
    }

    std::size_t subscriber_count() const {
        std::lock_guard lk(mu_);
        return subs_.size();
    }

private:
    void prune() {
        std::erase_if(subs_, [](const auto& s) { return s->cancelled(); });
    }

    double backfill_;
    std::size_t capacity_;
    std::string run_id_;
    bool live_ = false;
    std::deque<std::pair<double, std::string>> recent_;
    std::optional<std::string> done_;
    std::uint64_t seq_ = 0;
    std::vector<std::shared_ptr<Subscription>> subs_;
    mutable std::mutex mu_;
};

} // namespace clab::lab
