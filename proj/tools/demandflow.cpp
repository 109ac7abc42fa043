// demandflow: batch front end to the demand-shift engine.
//
// Exit codes: 0 success, 1 data error, 2 usage error.

#include <charconv>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <signal.h>
#include <unistd.h>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "demandflow/demandflow.hpp"

namespace df = demandflow;

namespace {

constexpr int exit_data = 1;
constexpr int exit_usage = 2;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw df::Error(df::ErrorKind::stream, "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw df::Error(df::ErrorKind::stream, "read error on " + path);
    return buf.str();
}

df::Dataset load_dataset(const std::string& path, bool strict) {
    df::ParseOptions opts;
    opts.strict = strict;
    const auto parsed = df::parse_consumption_csv(std::string_view(read_file(path)), opts);
    return df::build_dataset(parsed.records);
}

void write_output(const std::string& path, const std::string& body) {
    if (path.empty()) {
        std::cout << body;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw df::Error(df::ErrorKind::stream, "cannot write " + path);
    out << body;
}

// "host:port", ":port" or "port"
bool split_listen(const std::string& addr, std::string& host, int& port) {
    const auto colon = addr.rfind(':');
    std::string port_text = colon == std::string::npos ? addr : addr.substr(colon + 1);
    host = colon == std::string::npos || colon == 0 ? "0.0.0.0" : addr.substr(0, colon);
    try {
        std::size_t used = 0;
        port = std::stoi(port_text, &used);
        return used == port_text.size() && port >= 0 && port <= 65535;
    } catch (const std::exception&) {
        return false;
    }
}

// "N" or "NXxNY"
std::optional<std::pair<int, int>> parse_windows(const std::string& text) {
    auto whole = [](const std::string& t) -> std::optional<int> {
        int v = 0;
        const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || end != t.data() + t.size()) return std::nullopt;
        return v;
    };
    const auto x = text.find('x');
    if (x == std::string::npos) {
        const auto n = whole(text);
        if (!n) return std::nullopt;
        return std::pair{*n, *n};
    }
    const auto a = whole(text.substr(0, x)), b = whole(text.substr(x + 1));
    if (!a || !b) return std::nullopt;
    return std::pair{*a, *b};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy demand-shift analytics engine"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a consumption CSV and print the report");
    std::string ingest_csv;
    bool ingest_strict = false;
    double ingest_tol = 0.01;
    ingest->add_option("csv", ingest_csv, "Consumption CSV")->required();
    ingest->add_flag("--strict", ingest_strict, "Reject rows whose peak+valley disagrees with the total");
    ingest->add_option("--tolerance", ingest_tol, "Relative consistency tolerance")->check(CLI::NonNegativeNumber);

    // series
    auto* series = app.add_subcommand("series", "Export daily series, average lines and a ratio curve");
    std::string series_csv, series_out, series_gran = "monthly", series_ratio;
    series->add_option("csv", series_csv, "Consumption CSV")->required();
    series->add_option("--granularity", series_gran, "yearly | quarterly | monthly")
        ->check(CLI::IsMember({"yearly", "quarterly", "monthly"}));
    series->add_option("--ratio", series_ratio, "peak_to_valley | peak_to_total")
        ->check(CLI::IsMember({"peak_to_valley", "peak_to_total"}));
    series->add_option("-o,--output", series_out, "Output path (default stdout)");

    // shift
    auto* shift = app.add_subcommand("shift", "Compute a demand-shift task");
    std::string shift_csv, shift_out, shift_kind = "peak_valley", shift_start, shift_end, shift_band = "full_day";
    std::string shift_bandwidth = "auto";
    std::vector<std::string> shift_periods;
    int shift_k = 2, shift_grid = 128, shift_stride = 4;
    std::string shift_windows = "8";
    double shift_min_mag = 0.05;
    bool shift_per_day = false, shift_strict = false;
    shift->add_option("csv", shift_csv, "Consumption CSV")->required();
    shift->add_option("--kind", shift_kind, "peak_valley | regular_split | multi_period")
        ->check(CLI::IsMember({"peak_valley", "regular_split", "multi_period"}));
    shift->add_option("--start", shift_start, "First day, YYYY-MM-DD (default: dataset start)");
    shift->add_option("--end", shift_end, "Last day, YYYY-MM-DD (default: dataset end)");
    shift->add_option("--band", shift_band, "full_day | peak_window | valley_window")
        ->check(CLI::IsMember({"full_day", "peak_window", "valley_window"}));
    shift->add_option("--k", shift_k, "Sub-period count for regular_split");
    shift->add_option("--period", shift_periods, "START:END[:BAND] for multi_period (repeat, in order)");
    shift->add_option("--grid", shift_grid, "Grid cells per axis");
    shift->add_option("--bandwidth", shift_bandwidth, "Kernel bandwidth h in meters, or 'auto'");
    shift->add_option("--windows", shift_windows, "Demand-shift windows per axis: N or NXxNY");
    shift->add_option("--stride", shift_stride, "Arrow sampling stride in cells");
    shift->add_option("--min-magnitude", shift_min_mag, "Arrow floor as a fraction of the strongest cell");
    shift->add_flag("--per-day", shift_per_day, "Divide the potential by the day gap between periods");
    shift->add_flag("--strict", shift_strict, "Strict ingest");
    shift->add_option("-o,--output", shift_out, "Output path (default stdout)");

    // field
    auto* field = app.add_subcommand("field", "Export the estimated demand field for one period");
    std::string field_csv, field_out, field_start, field_end, field_band = "full_day", field_bandwidth = "auto";
    int field_grid = 128;
    field->add_option("csv", field_csv, "Consumption CSV")->required();
    field->add_option("--start", field_start, "First day, YYYY-MM-DD (default: dataset start)");
    field->add_option("--end", field_end, "Last day, YYYY-MM-DD (default: dataset end)");
    field->add_option("--band", field_band, "full_day | peak_window | valley_window")
        ->check(CLI::IsMember({"full_day", "peak_window", "valley_window"}));
    field->add_option("--grid", field_grid, "Grid cells per axis")->check(CLI::Range(2, 4096));
    field->add_option("--bandwidth", field_bandwidth, "Kernel bandwidth h in meters, or 'auto'");
    field->add_option("-o,--output", field_out, "Output path (default stdout)");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::string serve_listen = "127.0.0.1:8080", serve_dir;
    std::size_t serve_queue = 16;
    unsigned serve_workers = 0;
    int serve_grid = 128, serve_windows = 8;
    serve->add_option("--listen", serve_listen, "Listen address host:port")->envname("DEMANDFLOW_LISTEN");
    serve->add_option("--data-dir", serve_dir, "Directory for persisted datasets")->envname("DEMANDFLOW_DATA_DIR");
    serve->add_option("--queue-size", serve_queue, "Maximum pending+running tasks")
        ->envname("DEMANDFLOW_QUEUE_SIZE")
        ->check(CLI::PositiveNumber);
    serve->add_option("--workers", serve_workers, "Task worker threads (0 = hardware concurrency)")
        ->envname("DEMANDFLOW_WORKERS");
    serve->add_option("--grid", serve_grid, "Default grid cells per axis")
        ->envname("DEMANDFLOW_GRID")
        ->check(CLI::Range(3, 4096));
    serve->add_option("--windows", serve_windows, "Default windows per axis")
        ->envname("DEMANDFLOW_WINDOWS")
        ->check(CLI::Range(1, 4096));

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*ingest) {
            df::ParseOptions opts;
            opts.strict = ingest_strict;
            opts.consistency_tol = ingest_tol;
            const auto parsed = df::parse_consumption_csv(std::string_view(read_file(ingest_csv)), opts);
            const auto ds = df::build_dataset(parsed.records);
            df::Json out = {{"validation_report", df::to_json(parsed.report)}, {"summary", df::dataset_summary(ds)}};
            std::cout << out.dump(2) << '\n';
            return ingest_strict && !parsed.report.rejected.empty() ? exit_data : 0;
        }

        if (*series) {
            const auto ds = load_dataset(series_csv, false);
            const auto s = df::daily_series(ds);
            const auto g = *df::parse_granularity(series_gran);
            df::Json out = {{"series", df::to_json(s)}, {"aux", df::to_json(df::aux_lines(s, g))}, {"ratio", nullptr}};
            if (!series_ratio.empty()) {
                const auto kind = *df::parse_ratio_kind(series_ratio);
                out["ratio"] = df::ratio_to_json(df::ratio_series(s, kind), kind);
            }
            write_output(series_out, out.dump() + "\n");
            return 0;
        }

        if (*shift) {
            const auto ds = load_dataset(shift_csv, shift_strict);
            df::Json request = {{"kind", shift_kind},
                                {"start", shift_start.empty() ? df::format_day(ds.first_day()) : shift_start},
                                {"end", shift_end.empty() ? df::format_day(ds.last_day()) : shift_end},
                                {"band", shift_band},
                                {"split_count", shift_k},
                                {"grid", shift_grid},
                                {"windows", nullptr},
                                {"arrow_stride", shift_stride},
                                {"min_magnitude", shift_min_mag},
                                {"per_day", shift_per_day}};
            const auto counts = parse_windows(shift_windows);
            if (!counts) {
                std::cerr << "--windows must be N or NXxNY\n";
                return exit_usage;
            }
            request["windows"] = {counts->first, counts->second};
            if (shift_bandwidth == "auto") {
                request["bandwidth"] = "auto";
            } else {
                const auto h = df::detail::parse_number(shift_bandwidth);
                if (!h) {
                    std::cerr << "--bandwidth must be a number of meters or 'auto'\n";
                    return exit_usage;
                }
                request["bandwidth"] = *h;
            }
            if (!shift_periods.empty()) {
                df::Json periods = df::Json::array();
                for (const auto& spec : shift_periods) {
                    std::vector<std::string> parts;
                    std::stringstream ss(spec);
                    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
                    if (parts.size() < 2 || parts.size() > 3) {
                        std::cerr << "--period must be START:END[:BAND]\n";
                        return exit_usage;
                    }
                    df::Json p = {{"start", parts[0]}, {"end", parts[1]}};
                    if (parts.size() == 3) p["band"] = parts[2];
                    periods.push_back(p);
                }
                request["periods"] = periods;
            }
            auto task = df::task_from_json(request);
            const auto result = df::run_task(task, ds);
            write_output(shift_out, df::result_body(result));
            return 0;
        }

        if (*field) {
            const auto ds = load_dataset(field_csv, false);
            df::TimePeriod period = df::full_range(ds);
            for (const auto& [text, day] : {std::pair{&field_start, &period.start}, std::pair{&field_end, &period.end}}) {
                if (text->empty()) continue;
                const auto d = df::parse_day(*text);
                if (!d) {
                    std::cerr << "dates must be YYYY-MM-DD\n";
                    return exit_usage;
                }
                *day = *d;
            }
            period.band = *df::parse_band(field_band);
            df::ShiftTask task;
            task.base_period = period;
            task.grid_nx = task.grid_ny = field_grid;
            if (field_bandwidth != "auto") {
                const auto h = df::detail::parse_number(field_bandwidth);
                if (!h) {
                    std::cerr << "--bandwidth must be a number of meters or 'auto'\n";
                    return exit_usage;
                }
                task.bandwidth = df::Bandwidth::isotropic(*h);
            }
            df::validate_period(ds, period);
            const auto setup = df::resolve_field_setup(task, ds);
            const auto f = df::estimate_demand_field(ds, period, setup.grid, setup.bandwidth);
            const auto origin = ds.projection().origin();
            df::Json out = {{"period", df::to_json(period)},
                            {"bandwidth", df::to_json(setup.bandwidth)},
                            {"origin", {{"lon", origin.lon}, {"lat", origin.lat}}},
                            {"field", df::to_json(f)}};
            write_output(field_out, out.dump() + "\n");
            return 0;
        }

        if (*serve) {
            std::string host;
            int port = 0;
            if (!split_listen(serve_listen, host, port)) {
                std::cerr << "--listen must be host:port\n";
                return exit_usage;
            }
            // Route SIGINT/SIGTERM to a dedicated thread so shutdown runs
            // outside signal context.
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);

            df::ServiceConfig config;
            config.data_dir = serve_dir;
            config.queue_size = serve_queue;
            config.workers = serve_workers;
            config.task_defaults.grid_nx = config.task_defaults.grid_ny = serve_grid;
            config.task_defaults.windows_x = config.task_defaults.windows_y = serve_windows;
            df::Service service(config);
            for (const auto& name : service.load_persisted()) std::cerr << "skipped unreadable dataset " << name << '\n';
            if (port == 0) {
                port = service.bind_to_any_port(host);
                if (port < 0) {
                    std::cerr << "cannot listen on " << serve_listen << '\n';
                    return exit_data;
                }
            } else if (!service.bind(host, port)) {
                std::cerr << "cannot listen on " << serve_listen << '\n';
                return exit_data;
            }
            std::thread waiter([&] {
                int sig = 0;
                sigwait(&signals, &sig);
                service.stop_http();
            });
            std::cerr << "listening on " << host << ':' << port << std::endl;
            service.listen_after_bind();
            service.shutdown();
            // listen may also end without a signal; the blocked signal wakes
            // the waiter or stays pending until exit.
            kill(getpid(), SIGTERM);
            waiter.join();
            return 0;
        }
    } catch (const df::Error& e) {
        std::cerr << "error (" << df::to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_data;
    }
    return exit_usage;
}
