#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "demandflow/service.hpp"
#include "support/golden.hpp"
#include "support/synthetic.hpp"

using namespace demandflow;

using golden::small_config;
using golden::small_csv;
using golden::small_task;

namespace {

class Running : public golden::Running {
public:
    using golden::Running::Running;

    std::string upload(const std::string& csv) {
        auto res = client().Post("/api/datasets", csv, "text/csv");
        EXPECT_EQ(res->status, 201) << res->body;
        return Json::parse(res->body)["dataset_id"].get<std::string>();
    }
    std::string submit(const std::string& ds, const Json& task) {
        auto res = client().Post("/api/datasets/" + ds + "/tasks", task.dump(), "application/json");
        EXPECT_EQ(res->status, 202) << res->body;
        return Json::parse(res->body)["id"].get<std::string>();
    }
};

void expect_golden(const std::string& name, const httplib::Result& res) {
    const auto mismatch = golden::compare(name, res);
    EXPECT_TRUE(mismatch.empty()) << mismatch;
}

}  // namespace

TEST(ServiceGolden, DatasetEndpoints) {
    Running s(small_config());
    golden::dataset_scenario(s, expect_golden);
}

TEST(ServiceGolden, TaskEndpoints) {
    Running s(small_config());
    golden::task_scenario(s, expect_golden);
}

TEST(Service, ResultMatchesDirectRun) {
    Running s(small_config());
    const auto id = s.upload(small_csv);
    const auto tid = s.submit(id, small_task);
    s.service().tasks().wait_idle();
    auto res = s.client().Get("/api/tasks/" + tid + "/result");
    ASSERT_EQ(res->status, 200);

    const auto ds = build_dataset(parse_consumption_csv(std::string_view(small_csv)).records);
    auto task = task_from_json(small_task, small_config().task_defaults);
    EXPECT_EQ(res->body, result_body(run_task(task, ds)));
}

TEST(Service, DuplicateSubmissionsAreBitIdentical) {
    ServiceConfig cfg = small_config();
    cfg.queue_size = 8;
    Running s(cfg);
    synth::CityOptions opt;
    opt.households = 50;
    opt.days = 10;
    const auto id = s.upload(synth::to_csv(synth::random_city(5, opt)));
    const Json task = {{"kind", "regular_split"}, {"start", "2019-07-01"}, {"end", "2019-07-10"}, {"k", 3}};
    const auto a = s.submit(id, task), b = s.submit(id, task);
    EXPECT_NE(a, b);
    s.service().tasks().wait_idle();
    const auto ra = s.client().Get("/api/tasks/" + a + "/result");
    const auto rb = s.client().Get("/api/tasks/" + b + "/result");
    ASSERT_EQ(ra->status, 200);
    EXPECT_EQ(ra->body, rb->body);
    const auto ha = Json::parse(s.client().Get("/api/tasks/" + a)->body);
    const auto hb = Json::parse(s.client().Get("/api/tasks/" + b)->body);
    EXPECT_EQ(ha["badge"], hb["badge"]);
}

TEST(Service, LifecycleIsMonotone) {
    ServiceConfig cfg = small_config();
    cfg.task_defaults = {128, 128, 8, 8, 4, 0.05};
    Running s(cfg);
    synth::CityOptions opt;
    opt.households = 300;
    opt.days = 20;
    const auto id = s.upload(synth::to_csv(synth::random_city(6, opt)));
    const auto tid = s.submit(id, {{"kind", "regular_split"}, {"start", "2019-07-01"}, {"end", "2019-07-20"}, {"k", 4}});
    auto rank = [](const std::string& st) { return st == "pending" ? 0 : st == "running" ? 1 : 2; };
    int last = 0;
    std::string state;
    for (int polls = 0; polls < 100000; ++polls) {
        const auto h = Json::parse(s.client().Get("/api/tasks/" + tid)->body);
        state = h["state"].get<std::string>();
        const int r = rank(state);
        EXPECT_GE(r, last) << state;
        last = r;
        const auto result = s.client().Get("/api/tasks/" + tid + "/result");
        if (r < 2) {
            // The task may finish between the two requests.
            EXPECT_TRUE(result->status == 409 || result->status == 200);
        } else {
            EXPECT_TRUE(h["completed_at"].is_string());
            EXPECT_EQ(result->status, 200);
            break;
        }
    }
    EXPECT_EQ(state, "done");
}

TEST(Service, QueueFullRejectsUntilSlotsFree) {
    Running s(small_config());
    const auto id = s.upload(small_csv);
    s.service().tasks().hold(true);
    s.submit(id, small_task);
    s.submit(id, small_task);
    auto res = s.client().Post("/api/datasets/" + id + "/tasks", small_task.dump(), "application/json");
    EXPECT_EQ(res->status, 429);
    s.service().tasks().hold(false);
    s.service().tasks().wait_idle();
    res = s.client().Post("/api/datasets/" + id + "/tasks", small_task.dump(), "application/json");
    EXPECT_EQ(res->status, 202);
}

TEST(Service, MultipartUploadAndContentHashId) {
    Running s(small_config());
    httplib::MultipartFormDataItems items = {{"file", small_csv, "data.csv", "text/csv"}};
    auto res = s.client().Post("/api/datasets", items);
    ASSERT_EQ(res->status, 201) << res->body;
    const auto id = Json::parse(res->body)["dataset_id"].get<std::string>();
    EXPECT_EQ(id, dataset_id_for(small_csv, false));
    EXPECT_EQ(id.size(), 16u);
    EXPECT_EQ(s.upload(small_csv), id);
    EXPECT_NE(dataset_id_for(small_csv, true), id);
    EXPECT_EQ(Json::parse(s.client().Get("/api/datasets")->body).size(), 1u);
}

TEST(Service, RestartReloadsPersistedDatasets) {
    const auto dir = std::filesystem::temp_directory_path() / ("demandflow-test-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    ServiceConfig cfg = small_config();
    cfg.data_dir = dir;
    std::string id, strict_id, summary;
    {
        Running s(cfg);
        id = s.upload(small_csv);
        auto res = s.client().Post("/api/datasets?strict=true", small_csv, "text/csv");
        ASSERT_EQ(res->status, 201);
        strict_id = Json::parse(res->body)["dataset_id"].get<std::string>();
        summary = s.client().Get("/api/datasets/" + id)->body;
    }
    {
        Service restarted(cfg);
        EXPECT_TRUE(restarted.load_persisted().empty());
        std::vector<std::string> ids;
        for (const auto& d : restarted.datasets().list()) ids.push_back(d.id);
        std::sort(ids.begin(), ids.end());
        std::vector<std::string> expected = {id, strict_id};
        std::sort(expected.begin(), expected.end());
        EXPECT_EQ(ids, expected);
    }
    {
        Running s(cfg);
        s.service().load_persisted();
        EXPECT_EQ(s.client().Get("/api/datasets/" + id)->body, summary);
    }
    std::filesystem::remove_all(dir);
}
