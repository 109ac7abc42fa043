#pragma once

// HTTP/JSON service: dataset upload and queries, asynchronous shift tasks
// with polling, and result retrieval. All routes live under /api.

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "demandflow/error.hpp"
#include "demandflow/hexbin.hpp"
#include "demandflow/ingest.hpp"
#include "demandflow/serialize.hpp"
#include "demandflow/shift.hpp"
#include "demandflow/temporal.hpp"

namespace demandflow {

struct ServiceConfig {
    std::filesystem::path data_dir;  // empty: no persistence
    std::size_t queue_size = 16;     // pending + running tasks admitted at once
    unsigned workers = 0;            // 0: hardware concurrency
    TaskDefaults task_defaults;
    double default_hex_size = 500.0;
};

namespace detail {

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count() % 1000;
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

}  // namespace detail

/// Dataset id: content hash over the ingest mode and the raw CSV bytes, so
/// re-uploading the same file is idempotent and ids survive restarts.
inline std::string dataset_id_for(std::string_view csv, bool strict) {
    std::string keyed = strict ? "strict\n" : "lenient\n";
    keyed.append(csv);
    return detail::sha256_hex(keyed).substr(0, 16);
}

struct StoredDataset {
    std::string id;
    std::shared_ptr<const Dataset> dataset;
    ValidationReport report;
};

class DatasetStore {
public:
    explicit DatasetStore(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

    /// Parses, builds and retains a dataset; persists the bytes if a data
    /// directory is configured. Throws Error on bad input.
    StoredDataset add(const std::string& csv, bool strict) {
        const auto id = dataset_id_for(csv, strict);
        {
            std::lock_guard lock(mutex_);
            if (auto it = datasets_.find(id); it != datasets_.end()) return it->second;
        }
        ParseOptions opts;
        opts.strict = strict;
        auto parsed = parse_consumption_csv(std::string_view(csv), opts);
        auto ds = std::make_shared<const Dataset>(build_dataset(parsed.records));
        StoredDataset stored{id, std::move(ds), std::move(parsed.report)};
        if (!dir_.empty()) {
            std::filesystem::create_directories(dir_);
            const auto path = dir_ / (id + (strict ? ".strict.csv" : ".csv"));
            std::ofstream out(path, std::ios::binary);
            out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
        }
        std::lock_guard lock(mutex_);
        return datasets_.emplace(id, std::move(stored)).first->second;
    }

    std::optional<StoredDataset> get(const std::string& id) const {
        std::lock_guard lock(mutex_);
        if (auto it = datasets_.find(id); it != datasets_.end()) return it->second;
        return std::nullopt;
    }

    std::vector<StoredDataset> list() const {
        std::lock_guard lock(mutex_);
        std::vector<StoredDataset> out;
        for (const auto& [id, s] : datasets_) out.push_back(s);
        return out;
    }

    /// Reloads every persisted CSV. Files that no longer parse are skipped
    /// and reported by name.
    std::vector<std::string> load_persisted() {
        std::vector<std::string> failures;
        if (dir_.empty() || !std::filesystem::exists(dir_)) return failures;
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir_))
            if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& path : files) {
            std::ifstream in(path, std::ios::binary);
            std::stringstream buf;
            buf << in.rdbuf();
            const bool strict = path.filename().string().ends_with(".strict.csv");
            try {
                add(buf.str(), strict);
            } catch (const std::exception&) {
                failures.push_back(path.filename().string());
            }
        }
        return failures;
    }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, StoredDataset> datasets_;
};

class QueueFull : public std::runtime_error {
public:
    QueueFull() : std::runtime_error("task queue is full") {}
};

/// Snapshot of a task as seen by a client.
struct TaskHandle {
    std::string id;
    std::string dataset_id;
    TaskKind kind = TaskKind::peak_valley;
    TaskState state = TaskState::pending;
    std::chrono::system_clock::time_point submitted_at;
    std::optional<std::chrono::system_clock::time_point> completed_at;
    std::optional<std::string> error;
    std::shared_ptr<const std::string> result_body;  // set once done
    Json badge;                                      // per-pair window summary once done
};

/// Owns every task for the process lifetime. State transitions happen under
/// one mutex and only move forward: pending -> running -> done | failed.
class TaskRegistry {
public:
    TaskRegistry(std::size_t capacity, unsigned workers) : capacity_(capacity) {
        if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
        for (unsigned i = 0; i < workers; ++i) threads_.emplace_back([this] { work(); });
    }

    ~TaskRegistry() { drain(); }

    TaskRegistry(const TaskRegistry&) = delete;
    TaskRegistry& operator=(const TaskRegistry&) = delete;

    TaskHandle submit(std::string dataset_id, std::shared_ptr<const Dataset> ds, ShiftTask task) {
        std::lock_guard lock(mutex_);
        if (stopping_) throw QueueFull();
        if (active_ >= capacity_) throw QueueFull();
        auto entry = std::make_shared<Entry>();
        char id[32];
        std::snprintf(id, sizeof id, "task-%06zu", ++sequence_);
        entry->handle.id = id;
        entry->handle.dataset_id = std::move(dataset_id);
        entry->handle.kind = task.kind;
        entry->handle.submitted_at = std::chrono::system_clock::now();
        entry->task = std::move(task);
        entry->task.state = TaskState::pending;
        entry->dataset = std::move(ds);
        entries_.emplace(entry->handle.id, entry);
        order_.push_back(entry);
        queue_.push_back(entry);
        ++active_;
        cv_.notify_one();
        return entry->handle;
    }

    std::optional<TaskHandle> get(const std::string& id) const {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(id); it != entries_.end()) return it->second->handle;
        return std::nullopt;
    }

    /// Newest first.
    std::vector<TaskHandle> list() const {
        std::lock_guard lock(mutex_);
        std::vector<TaskHandle> out;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) out.push_back((*it)->handle);
        return out;
    }

    /// Stops admitting tasks, lets every queued and running task finish,
    /// then joins the workers.
    void drain() {
        {
            std::unique_lock lock(mutex_);
            if (drained_) return;
            stopping_ = true;
            held_ = false;
            cv_.notify_all();
            idle_cv_.wait(lock, [this] { return active_ == 0; });
            shutdown_ = true;
            drained_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_)
            if (t.joinable()) t.join();
    }

    /// While held, queued tasks stay pending and no new task starts.
    void hold(bool on) {
        {
            std::lock_guard lock(mutex_);
            held_ = on;
        }
        cv_.notify_all();
    }

    /// Blocks until no task is pending or running.
    void wait_idle() {
        std::unique_lock lock(mutex_);
        idle_cv_.wait(lock, [this] { return active_ == 0; });
    }

private:
    struct Entry {
        TaskHandle handle;
        ShiftTask task;
        std::shared_ptr<const Dataset> dataset;
    };

    void work() {
        while (true) {
            std::shared_ptr<Entry> entry;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [this] { return shutdown_ || (!held_ && !queue_.empty()); });
                if (queue_.empty()) return;
                entry = queue_.front();
                queue_.pop_front();
                entry->handle.state = TaskState::running;
            }
            ShiftTask task = entry->task;
            std::shared_ptr<const std::string> body;
            Json badge;
            try {
                const auto result = run_task(task, *entry->dataset);
                body = std::make_shared<const std::string>(result_body(result));
                badge = make_badge(result);
            } catch (const std::exception&) {
                // run_task has recorded the failure on `task`.
            }
            {
                std::lock_guard lock(mutex_);
                entry->task.state = task.state;
                entry->handle.state = task.state;
                entry->handle.completed_at = std::chrono::system_clock::now();
                if (task.state == TaskState::done) {
                    entry->handle.result_body = std::move(body);
                    entry->handle.badge = std::move(badge);
                } else {
                    entry->handle.state = TaskState::failed;
                    entry->handle.error = task.error.empty() ? "unknown failure" : task.error;
                }
                --active_;
                if (active_ == 0) idle_cv_.notify_all();
            }
        }
    }

    static Json make_badge(const ShiftResult& r) {
        Json pairs = Json::array();
        for (const auto& p : r.pairs) {
            Json abs = Json::array(), sig = Json::array();
            int wx = 0, wy = 0;
            for (const auto& w : p.windows) {
                abs.push_back(w.abs_change);
                sig.push_back(w.signed_change);
                wx = std::max(wx, w.i + 1);
                wy = std::max(wy, w.j + 1);
            }
            pairs.push_back({{"label", p.label},
                             {"windows_x", wx},
                             {"windows_y", wy},
                             {"abs_change", abs},
                             {"signed_change", sig}});
        }
        return pairs;
    }

    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::map<std::string, std::shared_ptr<Entry>> entries_;
    std::vector<std::shared_ptr<Entry>> order_;
    std::deque<std::shared_ptr<Entry>> queue_;
    std::size_t active_ = 0;
    std::size_t sequence_ = 0;
    bool held_ = false;
    bool stopping_ = false;
    bool shutdown_ = false;
    bool drained_ = false;
    std::vector<std::thread> threads_;
};

inline Json to_json(const TaskHandle& h, bool with_badge = false) {
    Json j = {{"id", h.id},
              {"dataset_id", h.dataset_id},
              {"kind", to_string(h.kind)},
              {"state", to_string(h.state)},
              {"submitted_at", detail::utc_timestamp(h.submitted_at)},
              {"completed_at", h.completed_at ? Json(detail::utc_timestamp(*h.completed_at)) : Json(nullptr)},
              {"error", h.error ? Json(*h.error) : Json(nullptr)}};
    if (with_badge) j["badge"] = h.state == TaskState::done ? h.badge : Json(nullptr);
    return j;
}

class Service {
public:
    explicit Service(ServiceConfig config = {})
        : config_(std::move(config)),
          store_(config_.data_dir),
          tasks_(config_.queue_size, config_.workers) {
        // Plain SO_REUSEADDR: a port held by another process is a bind error.
        http_.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        routes();
    }

    ~Service() { shutdown(); }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    std::vector<std::string> load_persisted() { return store_.load_persisted(); }

    bool bind(const std::string& host, int port) { return http_.bind_to_port(host, port); }
    int bind_to_any_port(const std::string& host) { return http_.bind_to_any_port(host); }
    bool listen_after_bind() { return http_.listen_after_bind(); }
    void wait_until_ready() const { http_.wait_until_ready(); }

    /// Stops accepting connections and drains running tasks.
    void shutdown() {
        http_.stop();
        tasks_.drain();
    }

    void stop_http() { http_.stop(); }
    TaskRegistry& tasks() { return tasks_; }
    DatasetStore& datasets() { return store_; }

private:
    static void send_json(httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
        send_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
    }

    static int status_for(ErrorKind kind) {
        switch (kind) {
        case ErrorKind::stream:
        case ErrorKind::format: return 400;
        case ErrorKind::empty_dataset:
        case ErrorKind::duplicate:
        case ErrorKind::inconsistency: return 422;
        default: return 400;
        }
    }

    std::optional<StoredDataset> dataset_or_404(const httplib::Request& req, httplib::Response& res) {
        auto stored = store_.get(req.matches[1]);
        if (!stored) send_error(res, 404, "not_found", "unknown dataset " + std::string(req.matches[1]));
        return stored;
    }

    static TimePeriod period_from_query(const httplib::Request& req, const Dataset& ds) {
        TimePeriod p = full_range(ds);
        if (req.has_param("start")) {
            const auto d = parse_day(req.get_param_value("start"));
            if (!d) throw Error(ErrorKind::range, "invalid start date");
            p.start = *d;
        }
        if (req.has_param("end")) {
            const auto d = parse_day(req.get_param_value("end"));
            if (!d) throw Error(ErrorKind::range, "invalid end date");
            p.end = *d;
        }
        if (req.has_param("band")) {
            const auto b = parse_band(req.get_param_value("band"));
            if (!b) throw Error(ErrorKind::range, "invalid band");
            p.band = *b;
        }
        validate_period(ds, p);
        return p;
    }

    void routes() {
        http_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            } catch (...) {
                send_error(res, 500, "internal", "unknown error");
            }
        });

        http_.Post("/api/datasets", [this](const httplib::Request& req, httplib::Response& res) {
            std::string csv;
            if (req.is_multipart_form_data()) {
                if (req.has_file("file"))
                    csv = req.get_file_value("file").content;
                else if (!req.files.empty())
                    csv = req.files.begin()->second.content;
            } else {
                csv = req.body;
            }
            const bool strict = req.has_param("strict") &&
                                (req.get_param_value("strict") == "1" || req.get_param_value("strict") == "true");
            try {
                const auto stored = store_.add(csv, strict);
                send_json(res, 201,
                          {{"dataset_id", stored.id},
                           {"validation_report", to_json(stored.report)},
                           {"summary", dataset_summary(*stored.dataset)}});
            } catch (const Error& e) {
                send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
            }
        });

        http_.Get("/api/datasets", [this](const httplib::Request&, httplib::Response& res) {
            Json list = Json::array();
            for (const auto& s : store_.list())
                list.push_back({{"dataset_id", s.id}, {"summary", dataset_summary(*s.dataset)}});
            send_json(res, 200, list);
        });

        http_.Get(R"(/api/datasets/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            if (auto s = dataset_or_404(req, res))
                send_json(res, 200,
                          {{"dataset_id", s->id},
                           {"validation_report", to_json(s->report)},
                           {"summary", dataset_summary(*s->dataset)}});
        });

        http_.Get(R"(/api/datasets/([^/]+)/series)", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = dataset_or_404(req, res);
            if (!s) return;
            auto granularity = Granularity::monthly;
            if (req.has_param("granularity")) {
                const auto g = parse_granularity(req.get_param_value("granularity"));
                if (!g) return send_error(res, 400, "invalid_argument", "granularity must be yearly, quarterly or monthly");
                granularity = *g;
            }
            std::optional<RatioKind> ratio;
            if (req.has_param("ratio")) {
                ratio = parse_ratio_kind(req.get_param_value("ratio"));
                if (!ratio) return send_error(res, 400, "invalid_argument", "ratio must be peak_to_valley or peak_to_total");
            }
            const auto series = daily_series(*s->dataset);
            send_json(res, 200,
                      {{"series", to_json(series)},
                       {"aux", to_json(aux_lines(series, granularity))},
                       {"ratio", ratio ? ratio_to_json(ratio_series(series, *ratio), *ratio) : Json(nullptr)}});
        });

        http_.Get(R"(/api/datasets/([^/]+)/hexbin)", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = dataset_or_404(req, res);
            if (!s) return;
            try {
                const auto period = period_from_query(req, *s->dataset);
                double size = config_.default_hex_size;
                if (req.has_param("size")) {
                    const auto v = detail::parse_number(req.get_param_value("size"));
                    if (!v) throw Error(ErrorKind::range, "invalid hexagon size");
                    size = *v;
                }
                const auto cells = hexbin_demand(*s->dataset, period, size);
                double total = 0.0;
                for (const auto& c : cells) total += c.demand;
                send_json(res, 200,
                          {{"period", to_json(period)},
                           {"size", size},
                           {"total_demand", total},
                           {"cells", to_json(cells, s->dataset->projection())}});
            } catch (const Error& e) {
                send_error(res, 400, to_string(e.kind()), e.what());
            }
        });

        http_.Get(R"(/api/datasets/([^/]+)/meter)", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = dataset_or_404(req, res);
            if (!s) return;
            try {
                const auto period = period_from_query(req, *s->dataset);
                send_json(res, 200, {{"period", to_json(period)}, {"stats", to_json(meter_stats(*s->dataset, period))}});
            } catch (const Error& e) {
                send_error(res, 400, to_string(e.kind()), e.what());
            }
        });

        http_.Post(R"(/api/datasets/([^/]+)/tasks)", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = dataset_or_404(req, res);
            if (!s) return;
            try {
                const auto body = Json::parse(req.body);
                auto task = task_from_json(body, config_.task_defaults);
                validate_task(task, *s->dataset);
                const auto handle = tasks_.submit(s->id, s->dataset, std::move(task));
                send_json(res, 202, to_json(handle));
            } catch (const Json::parse_error& e) {
                send_error(res, 400, "invalid_task", std::string("malformed JSON: ") + e.what());
            } catch (const Error& e) {
                send_error(res, 400, to_string(e.kind()), e.what());
            } catch (const QueueFull& e) {
                send_error(res, 429, "queue_full", e.what());
            }
        });

        http_.Get("/api/tasks", [this](const httplib::Request&, httplib::Response& res) {
            Json list = Json::array();
            for (const auto& h : tasks_.list()) list.push_back(to_json(h, true));
            send_json(res, 200, list);
        });

        http_.Get(R"(/api/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const auto h = tasks_.get(req.matches[1]);
            if (!h) return send_error(res, 404, "not_found", "unknown task " + std::string(req.matches[1]));
            send_json(res, 200, to_json(*h, true));
        });

        http_.Get(R"(/api/tasks/([^/]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto h = tasks_.get(req.matches[1]);
            if (!h) return send_error(res, 404, "not_found", "unknown task " + std::string(req.matches[1]));
            switch (h->state) {
            case TaskState::pending:
            case TaskState::running:
                return send_error(res, 409, "not_ready", "task " + h->id + " is " + std::string(to_string(h->state)));
            case TaskState::failed:
                return send_error(res, 410, "failed", h->error.value_or("task failed"));
            case TaskState::done:
                res.status = 200;
                res.set_content(*h->result_body, "application/json");
                return;
            }
        });
    }

    ServiceConfig config_;
    DatasetStore store_;
    TaskRegistry tasks_;
    httplib::Server http_;
};

}  // namespace demandflow
