#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <textevo/http_backend.hpp>
#include <textevo/proposer.hpp>

#include "support.hpp"

using namespace textevo;

namespace {

ReflectionContext sample_ctx() {
    ReflectionContext ctx;
    ctx.parent_text = "seed artifact";
    ctx.objective_text = "make it better";
    MinibatchItem item;
    item.example_summary = "Example 0";
    item.score = 0.25;
    item.side_info.add("first_mismatch", 3.0);
    item.side_info.add("expected", std::string("c"));
    ctx.minibatch.push_back(item);
    return ctx;
}

} // namespace

TEST_CASE("scripted backend passes through") {
    ScriptedBackend backend([](const ReflectionContext&) { return std::string("abc"); });
    const auto resp = propose(sample_ctx(), backend);
    CHECK(resp.raw_text == "abc");
    CHECK(resp.refined_text == "abc");
    CHECK_FALSE(resp.refiner_applied);
}

TEST_CASE("fenced responses are refined") {
    ScriptedBackend backend([](const ReflectionContext&) { return std::string("```\nxyz\n```"); });
    const auto resp = propose(sample_ctx(), backend);
    CHECK(resp.raw_text == "```\nxyz\n```");
    CHECK(resp.refined_text == "xyz");
    CHECK(resp.refiner_applied);
}

TEST_CASE("whitespace-only responses are a proposer failure") {
    ScriptedBackend backend([](const ReflectionContext&) { return std::string("   \n  "); });
    CHECK_THROWS_AS(propose(sample_ctx(), backend), ProposerFailure);
}

TEST_CASE("prompt rendering") {
    SECTION("omitted sections leave no empty headers") {
        ReflectionContext ctx = sample_ctx();
        ctx.objective_text.reset();
        ctx.background_text.reset();
        const std::string prompt = render_reflection_prompt(ctx);
        CHECK(prompt.find("# Objective") == std::string::npos);
        CHECK(prompt.find("# Background") == std::string::npos);
        CHECK(prompt.find("# Current artifact") != std::string::npos);
    }
    SECTION("sub-scores render with names in order") {
        ReflectionContext ctx = sample_ctx();
        ctx.minibatch[0].side_info.add("scores", SubScores{{"a", 0.1}, {"b", 0.9}});
        const std::string prompt = render_reflection_prompt(ctx);
        const auto pos_a = prompt.find("a=0.1");
        const auto pos_b = prompt.find("b=0.9");
        CHECK(pos_a != std::string::npos);
        CHECK(pos_b != std::string::npos);
        CHECK(pos_a < pos_b);
    }
    SECTION("rendering is deterministic") {
        CHECK(render_reflection_prompt(sample_ctx()) == render_reflection_prompt(sample_ctx()));
    }
    SECTION("changing any score changes the prompt") {
        ReflectionContext a = sample_ctx();
        ReflectionContext b = sample_ctx();
        b.minibatch[0].score = 0.250000001;
        CHECK(render_reflection_prompt(a) != render_reflection_prompt(b));
        // even a one-ulp difference must be observable
        ReflectionContext c = sample_ctx();
        c.minibatch[0].score = std::nextafter(0.25, 1.0);
        CHECK(render_reflection_prompt(a) != render_reflection_prompt(c));
    }
    SECTION("image entries render as attachment placeholders") {
        ReflectionContext ctx = sample_ctx();
        ctx.minibatch[0].side_info.add("view", ImageRef{"image/png", {}, "rawbytes"});
        const std::string prompt = render_reflection_prompt(ctx);
        CHECK(prompt.find("[image attachment: image/png]") != std::string::npos);
        CHECK(prompt.find("rawbytes") == std::string::npos);
        CHECK(prompt_attachments(ctx).size() == 1);
    }
    SECTION("bootstrap prompts carry no artifact or feedback") {
        ReflectionContext ctx;
        ctx.bootstrap = true;
        ctx.objective_text = "build a widget";
        const std::string prompt = render_reflection_prompt(ctx);
        CHECK(prompt.find("build a widget") != std::string::npos);
        CHECK(prompt.find("# Current artifact") == std::string::npos);
        CHECK(prompt.find("# Evaluation feedback") == std::string::npos);
    }
}

TEST_CASE("prefix fixer strategy") {
    ScriptedBackend backend(scripted::prefix_fixer());
    SECTION("applies the one-character fix at the mismatch") {
        // parent "seed artifact", mismatch at 3 expecting 'c'
        const auto resp = propose(sample_ctx(), backend);
        CHECK(resp.refined_text == "seec");
    }
    SECTION("no mismatch returns the parent verbatim") {
        ReflectionContext ctx = sample_ctx();
        ctx.minibatch[0].side_info = SideInfo{};
        ctx.minibatch[0].side_info.add("first_mismatch", -1.0);
        ctx.minibatch[0].side_info.add("expected", std::string());
        const auto resp = propose(ctx, backend);
        CHECK(resp.refined_text == ctx.parent_text);
    }
    SECTION("picks the lowest-scoring minibatch item") {
        ReflectionContext ctx = sample_ctx();
        MinibatchItem worse;
        worse.example_summary = "Example 1";
        worse.score = 0.1;
        worse.side_info.add("first_mismatch", 0.0);
        worse.side_info.add("expected", std::string("Z"));
        ctx.minibatch.push_back(worse);
        const auto resp = propose(ctx, backend);
        CHECK(resp.refined_text == "Z");
    }
}

TEST_CASE("record then replay reproduces responses without the backend") {
    test_support::TempDir tmp;
    const auto log = (tmp / "replay.jsonl").string();
    {
        auto inner = std::make_unique<ScriptedBackend>(
            [](const ReflectionContext& ctx) { return ctx.parent_text + "!"; });
        RecordingBackend recorder(std::move(inner), log);
        CHECK(propose(sample_ctx(), recorder).refined_text == "seed artifact!");
        ReflectionContext second = sample_ctx();
        second.parent_text = "other";
        CHECK(propose(second, recorder).refined_text == "other!");
    }
    ReplayBackend replay(log);
    CHECK(replay.remaining() == 2);
    CHECK(propose(sample_ctx(), replay).refined_text == "seed artifact!");
    ReflectionContext second = sample_ctx();
    second.parent_text = "other";
    CHECK(propose(second, replay).refined_text == "other!");
    // exhausted or diverging prompts fail as transport
    CHECK_THROWS_AS(propose(sample_ctx(), replay, 0), ProposerFailure);
}

TEST_CASE("replay diverges on a different prompt") {
    test_support::TempDir tmp;
    const auto log = (tmp / "replay.jsonl").string();
    {
        auto inner = std::make_unique<ScriptedBackend>([](const ReflectionContext&) { return "x"; });
        RecordingBackend recorder(std::move(inner), log);
        propose(sample_ctx(), recorder);
    }
    ReplayBackend replay(log);
    ReflectionContext changed = sample_ctx();
    changed.minibatch[0].score = 0.9;
    CHECK_THROWS_AS(propose(changed, replay, 0), ProposerFailure);
}

TEST_CASE("http chat backend against a stub server") {
    httplib::Server server;
    std::atomic<int> calls{0};

    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++calls;
        const json body = json::parse(req.body);
        const std::string prompt = body.at("messages").at(0).at("content").get<std::string>();
        json reply;
        if (n == 1 && prompt.find("fail-once") != std::string::npos) {
            res.status = 500;
            res.set_content("boom", "text/plain");
            return;
        }
        reply["choices"] = json::array(
            {{{"message", {{"role", "assistant"}, {"content", "ok:" + std::to_string(prompt.size())}}}}});
        res.set_content(reply.dump(), "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpChatConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "stub-model";
    cfg.timeout_seconds = 5;

    SECTION("echo round trip") {
        HttpChatBackend backend(cfg);
        const auto resp = propose(sample_ctx(), backend, 0);
        CHECK(resp.refined_text.rfind("ok:", 0) == 0);
    }

    SECTION("one retry recovers from a 500") {
        HttpChatBackend backend(cfg);
        ReflectionContext ctx = sample_ctx();
        ctx.objective_text = "fail-once please";
        const auto resp = propose(ctx, backend, 1);
        CHECK(resp.refined_text.rfind("ok:", 0) == 0);
        CHECK(calls.load() == 2);
    }

    SECTION("no retries surfaces the failure") {
        HttpChatBackend backend(cfg);
        ReflectionContext ctx = sample_ctx();
        ctx.objective_text = "fail-once please";
        CHECK_THROWS_AS(propose(ctx, backend, 0), ProposerFailure);
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend sends attachments and credentials") {
    httplib::Server server;
    json seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = json::parse(req.body);
        seen_auth = req.has_header("Authorization") ? req.get_header_value("Authorization") : "";
        json reply;
        reply["choices"] =
            json::array({{{"message", {{"role", "assistant"}, {"content", "fine"}}}}});
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpChatConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "stub-model";
    cfg.timeout_seconds = 5;
    cfg.multimodal = true;
    cfg.api_key_env = "TEXTEVO_TEST_KEY";
    ::setenv("TEXTEVO_TEST_KEY", "sk-test-123", 1);

    ReflectionContext ctx = sample_ctx();
    ctx.minibatch[0].side_info.add("view", ImageRef{"image/png", {}, "pixels"});

    HttpChatBackend backend(cfg);
    CHECK(propose(ctx, backend, 0).refined_text == "fine");

    CHECK(seen_auth == "Bearer sk-test-123");
    const json& content = seen_body.at("messages").at(0).at("content");
    REQUIRE(content.is_array());
    CHECK(content.at(0).at("type") == "text");
    bool has_image = false;
    for (const auto& part : content)
        if (part.at("type") == "image_url" &&
            part.at("image_url").at("url").get<std::string>().rfind("data:image/png;base64,", 0) == 0)
            has_image = true;
    CHECK(has_image);
    ::unsetenv("TEXTEVO_TEST_KEY");

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend timeout is a transport failure") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::seconds(3));
        res.set_content("{}", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpChatConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "stub-model";
    cfg.timeout_seconds = 1;
    HttpChatBackend backend(cfg);
    CHECK_THROWS_AS(propose(sample_ctx(), backend, 0), ProposerFailure);

    server.stop();
    server_thread.join();
}
