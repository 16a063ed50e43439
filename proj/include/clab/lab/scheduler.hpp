#pragma once

#include <algorithm>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "clab/lab/clock.hpp"
#include "clab/lab/store.hpp"

namespace clab::lab {

struct SchedulerConfig {
    Seconds block = 2 * 3600;
    Seconds cooldown = 30 * 60;
    Seconds slot = 30 * 60;
    Seconds day_start = 9 * 3600;
    Seconds day_end = 17 * 3600;
};

enum class ReservationStatus { reserved, active, done, cancelled };

inline const char* to_string(ReservationStatus s) {
    switch (s) {
    case ReservationStatus::reserved: return "reserved";
    case ReservationStatus::active: return "active";
    case ReservationStatus::done: return "done";
    case ReservationStatus::cancelled: return "cancelled";
    }
    return "?";
}

struct Reservation {
    std::string id;
    std::string user_id;
    std::string experiment;
    Seconds start = 0;
    Seconds duration = 0;
    Seconds cooldown = 0;
    bool cancelled = false;

    Seconds end() const { return start + duration; }
    Seconds blocked_until() const { return start + duration + cooldown; }
};

inline bool intervals_overlap(Seconds a0, Seconds a1, Seconds b0, Seconds b1) { return a0 < b1 && b0 < a1; }

struct CalendarCell {
    Seconds start;
    std::string color;  // green own block, red own cooldown, gray taken or past, white free
    std::string reservation_id;
    bool selectable = false;
};

struct CalendarDay {
    std::string date;
    std::vector<CalendarCell> cells;
};

// One machine, so reservations of every experiment share the timeline.
class Scheduler {
public:
    Scheduler(SchedulerConfig cfg, const Clock& clock, const JsonStore* store = nullptr)
        : cfg_(cfg), clock_(clock), store_(store) {
        require(cfg_.block > 0 && cfg_.slot > 0 && cfg_.cooldown >= 0, "scheduler: bad durations");
        require(cfg_.day_start >= 0 && cfg_.day_end <= kDay && cfg_.day_start + cfg_.block <= cfg_.day_end,
                "scheduler: daily window cannot hold one block");
        if (store_)
            if (auto doc = store_->read("reservations.json")) {
                next_id_ = doc->value("next_id", 1);
                for (const auto& r : doc->at("reservations"))
                    items_.push_back({r.at("id"), r.at("user_id"), r.at("experiment"), r.at("start"), r.at("duration"),
                                      r.at("cooldown"), r.value("cancelled", false)});
            }
    }

    const SchedulerConfig& config() const { return cfg_; }

    ReservationStatus status(const Reservation& r) const {
        if (r.cancelled) return ReservationStatus::cancelled;
        Seconds now = clock_.now();
        if (now < r.start) return ReservationStatus::reserved;
        if (now < r.end()) return ReservationStatus::active;
        return ReservationStatus::done;
    }

    // Window rule: slot-aligned, in the future, whole block inside the day window.
    void check_window(Seconds start) const {
        Seconds tod = time_of_day(start);
        if (start <= clock_.now()) throw Error(ErrorCode::domain, "reserve: start time is in the past");
        if ((tod - cfg_.day_start) % cfg_.slot != 0) throw Error(ErrorCode::domain, "reserve: start is not aligned to a slot");
        if (tod < cfg_.day_start || tod + cfg_.block > cfg_.day_end)
            throw Error(ErrorCode::domain, "reserve: block must lie within the daily window");
    }

    Reservation reserve(const std::string& user, const std::string& exp, Seconds start) {
        std::lock_guard lk(mu_);
        check_window(start);
        for (const auto& r : items_) {
            if (r.user_id == user && r.experiment == exp) {
                auto s = status(r);
                if (s == ReservationStatus::reserved || s == ReservationStatus::active)
                    throw Error(ErrorCode::conflict, "reserve: an unfinished reservation for this experiment already exists (" + r.id + ")");
            }
        }
        Reservation n{"r" + std::to_string(next_id_), user, exp, start, cfg_.block, cfg_.cooldown, false};
        for (const auto& r : items_)
            if (!r.cancelled && intervals_overlap(n.start, n.blocked_until(), r.start, r.blocked_until()))
                throw Error(ErrorCode::conflict, "reserve: slot overlaps reservation " + r.id + " (including cooldown)");
        ++next_id_;
        items_.push_back(n);
        persist();
        return n;
    }

    void cancel(const std::string& user, const std::string& id) {
        std::lock_guard lk(mu_);
        auto it = std::find_if(items_.begin(), items_.end(), [&](const auto& r) { return r.id == id; });
        if (it == items_.end()) throw Error(ErrorCode::not_found, "cancel: no reservation " + id);
        if (it->user_id != user) throw Error(ErrorCode::forbidden, "cancel: reservation belongs to another user");
        if (it->cancelled) throw Error(ErrorCode::conflict, "cancel: reservation already cancelled");
        if (clock_.now() >= it->start) throw Error(ErrorCode::conflict, "cancel: reservation has already started");
        it->cancelled = true;
        persist();
    }

    std::vector<Reservation> list() const {
        std::lock_guard lk(mu_);
        return items_;
    }

    std::optional<Reservation> find(const std::string& id) const {
        std::lock_guard lk(mu_);
        for (const auto& r : items_)
            if (r.id == id) return r;
        return std::nullopt;
    }

    std::optional<Reservation> active_for(const std::string& user, const std::string& exp) const {
        std::lock_guard lk(mu_);
        for (const auto& r : items_)
            if (r.user_id == user && r.experiment == exp && status(r) == ReservationStatus::active) return r;
        return std::nullopt;
    }

    std::vector<CalendarDay> calendar(const std::string& user, Seconds week_start) const {
        std::lock_guard lk(mu_);
        Seconds now = clock_.now();
        std::vector<CalendarDay> days;
        Seconds day0 = day_floor(week_start);
        for (int d = 0; d < 7; ++d) {
            CalendarDay day;
            Seconds base = day0 + d * kDay;
            day.date = format_date(base);
            for (Seconds t = base + cfg_.day_start; t < base + cfg_.day_end; t += cfg_.slot) {
                CalendarCell c{t, "white", "", false};
                for (const auto& r : items_) {
                    if (r.cancelled) continue;
                    bool in_block = intervals_overlap(t, t + cfg_.slot, r.start, r.end());
                    bool in_cool = intervals_overlap(t, t + cfg_.slot, r.end(), r.blocked_until());
                    if (!in_block && !in_cool) continue;
                    c.reservation_id = r.id;
                    if (r.user_id == user) c.color = in_block ? "green" : "red";
                    else c.color = "gray";
                    break;
                }
                if (c.color == "white" && t < now) c.color = "gray";
                if (c.color == "white") c.selectable = free_block(t, now);
                day.cells.push_back(c);
            }
            days.push_back(std::move(day));
        }
        return days;
    }

private:
    bool free_block(Seconds start, Seconds now) const {
        Seconds tod = time_of_day(start);
        if (start <= now || tod + cfg_.block > cfg_.day_end) return false;
        for (const auto& r : items_)
            if (!r.cancelled && intervals_overlap(start, start + cfg_.block + cfg_.cooldown, r.start, r.blocked_until())) return false;
        return true;
    }

    void persist() const {
        if (!store_) return;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : items_)
            arr.push_back({{"id", r.id}, {"user_id", r.user_id}, {"experiment", r.experiment}, {"start", r.start},
                           {"duration", r.duration}, {"cooldown", r.cooldown}, {"cancelled", r.cancelled}});
        store_->write("reservations.json", {{"next_id", next_id_}, {"reservations", arr}});
    }

    SchedulerConfig cfg_;
    const Clock& clock_;
    const JsonStore* store_;
    std::vector<Reservation> items_;
    int next_id_ = 1;
    mutable std::mutex mu_;
};

inline nlohmann::json reservation_json(const Reservation& r, ReservationStatus s) {
    return {{"id", r.id}, {"user_id", r.user_id}, {"experiment", r.experiment}, {"start", format_time(r.start)},
            {"end", format_time(r.end())}, {"cooldown_end", format_time(r.blocked_until())}, {"start_epoch", r.start},
            {"status", to_string(s)}};
}

} // namespace clab::lab
