// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/evaldb.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "evalbench/error.hpp"

namespace evalbench {

namespace fs = std::filesystem;

void to_json(Json& j, const EvaluationResult& v) {
    j = Json{{"evaluation_id", v.evaluation_id},
             {"request", v.request},
             {"agent", v.agent},
             {"started_at_ms", v.started_at_ms},
             {"finished_at_ms", v.finished_at_ms},
             {"measurements", v.measurements},
             {"model_name", v.model_name},
             {"model_version", v.model_version.to_string()},
             {"framework_name", v.framework_name},
             {"framework_version", v.framework_version.to_string()},
             {"virtual_clock", v.virtual_clock},
             {"success", v.success}};
    if (v.trace_id) j["trace_id"] = *v.trace_id;
    if (!v.error.empty()) j["error"] = v.error;
}

void from_json(const Json& j, EvaluationResult& v) {
    v.evaluation_id = j.at("evaluation_id").get<std::string>();
    v.request = j.at("request").get<OpenRequest>();
    v.agent = j.at("agent").get<AgentRecord>();
    v.started_at_ms = j.value("started_at_ms", std::int64_t{0});
    v.finished_at_ms = j.value("finished_at_ms", std::int64_t{0});
    v.measurements = j.value("measurements", std::vector<RequestMeasurement>{});
    v.model_name = j.value("model_name", std::string{});
    v.model_version = SemVer::parse(j.value("model_version", std::string("0.0.0")));
    v.framework_name = j.value("framework_name", std::string{});
    v.framework_version = SemVer::parse(j.value("framework_version", std::string("0.0.0")));
    v.virtual_clock = j.value("virtual_clock", false);
    v.success = j.value("success", true);
    v.error = j.value("error", std::string{});
    v.trace_id.reset();
    if (j.contains("trace_id")) v.trace_id = j.at("trace_id").get<std::string>();
}

bool QueryFilter::matches(const EvaluationResult& r) const {
    if (model_name && *model_name != r.model_name) return false;
    if (model_version && !satisfies(r.model_version, *model_version)) return false;
    if (framework_name && *framework_name != r.framework_name) return false;
    if (framework_version && !satisfies(r.framework_version, *framework_version)) return false;
    if (architecture && *architecture != r.agent.architecture) return false;
    if (scenario_kind && *scenario_kind != r.request.benchmark_scenario.kind) return false;
    if (started_after_ms && r.started_at_ms < *started_after_ms) return false;
    if (started_before_ms && r.started_at_ms > *started_before_ms) return false;
    return true;
}

void to_json(Json& j, const QueryFilter& v) {
    j = Json::object();
    if (v.model_name) j["model_name"] = *v.model_name;
    if (v.model_version) j["model_version"] = v.model_version->to_string();
    if (v.framework_name) j["framework_name"] = *v.framework_name;
    if (v.framework_version) j["framework_version"] = v.framework_version->to_string();
    if (v.architecture) j["architecture"] = *v.architecture;
    if (v.scenario_kind) j["scenario_kind"] = std::string(to_string(*v.scenario_kind));
    if (v.started_after_ms) j["started_after_ms"] = *v.started_after_ms;
    if (v.started_before_ms) j["started_before_ms"] = *v.started_before_ms;
}

void from_json(const Json& j, QueryFilter& v) {
    if (!j.is_object()) throw Error(Errc::validation, "query filter must be an object");
    v = QueryFilter{};
    auto str = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        if (!j.at(key).is_string()) throw Error(Errc::validation, "expected a string", key);
        return j.at(key).get<std::string>();
    };
    v.model_name = str("model_name");
    if (auto c = str("model_version")) v.model_version = parse_constraint(*c);
    v.framework_name = str("framework_name");
    if (auto c = str("framework_version")) v.framework_version = parse_constraint(*c);
    v.architecture = str("architecture");
    if (auto k = str("scenario_kind")) {
        if (*k == "batched") v.scenario_kind = ScenarioKind::batched;
        else if (*k == "online") v.scenario_kind = ScenarioKind::online;
        else throw Error(Errc::validation, "scenario_kind must be batched or online", "scenario_kind");
    }
    if (j.contains("started_after_ms")) v.started_after_ms = j.at("started_after_ms").get<std::int64_t>();
    if (j.contains("started_before_ms")) v.started_before_ms = j.at("started_before_ms").get<std::int64_t>();
}

std::string EvalDb::file_name_for(std::int64_t started_at_ms) {
    std::time_t secs = static_cast<std::time_t>(started_at_ms / 1000 - (started_at_ms % 1000 < 0 ? 1 : 0));
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "results-%Y-%m-%d.jsonl", &tm);
    return buf;
}

EvalDb::EvalDb(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    // Cut torn tails left by a crash so later appends start on a fresh line.
    for (const auto& e : fs::directory_iterator(dir_)) {
        const auto name = e.path().filename().string();
        if (!e.is_regular_file() || name.rfind("results-", 0) != 0 || e.path().extension() != ".jsonl") continue;
        std::ifstream in(e.path(), std::ios::binary);
        const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (data.empty() || data.back() == '\n') continue;
        const auto keep = data.rfind('\n');
        fs::resize_file(e.path(), keep == std::string::npos ? 0 : keep + 1);
    }
    refresh_locked();
}

void EvalDb::refresh() {
    std::lock_guard lock(mu_);
    refresh_locked();
}

void EvalDb::refresh_locked() const {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir_)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("results-", 0) == 0 && e.path().extension() == ".jsonl") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f);
}

void EvalDb::load_file(const fs::path& file) const {
    auto& offset = offsets_[file];
    if (fs::file_size(file) <= offset) return;
    std::ifstream in(file, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(offset));
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (true) {
        const auto nl = data.find('\n', pos);
        if (nl == std::string::npos) break;  // incomplete line: wait for the writer
        const std::string line = data.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        try {
            auto r = Json::parse(line).get<EvaluationResult>();
            if (!by_id_.count(r.evaluation_id)) index(std::make_shared<const EvaluationResult>(std::move(r)));
        } catch (const std::exception& e) {
            throw Error(Errc::decode, std::string("malformed result: ") + e.what(), file.string());
        }
    }
    offset += pos;
}

void EvalDb::index(Entry e) const {
    by_id_.emplace(e->evaluation_id, entries_.size());
    entries_.push_back(std::move(e));
}

std::string EvalDb::store(const EvaluationResult& result) {
    if (result.evaluation_id.empty()) throw Error(Errc::validation, "evaluation id is empty", "evaluation_id");
    if (result.success && result.measurements.empty()) {
        throw Error(Errc::validation, "a successful evaluation needs measurements", "measurements");
    }
    const std::string line = Json(result).dump() + "\n";
    std::lock_guard lock(mu_);
    refresh_locked();
    if (by_id_.count(result.evaluation_id)) {
        throw Error(Errc::idempotent_noop, "evaluation " + result.evaluation_id + " is already stored");
    }
    const auto path = dir_ / file_name_for(result.started_at_ms);
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(Errc::internal, "cannot open " + path.string());
    // One write per line keeps concurrent appenders from interleaving.
    const auto n = ::write(fd, line.data(), line.size());
    const bool ok = n == static_cast<ssize_t>(line.size()) && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) throw Error(Errc::internal, "cannot append to " + path.string());
    index(std::make_shared<const EvaluationResult>(result));
    return result.evaluation_id;
}

std::vector<EvaluationResult> EvalDb::query(const QueryFilter& filter) const {
    std::vector<std::pair<std::size_t, Entry>> snapshot;
    {
        std::lock_guard lock(mu_);
        refresh_locked();
        snapshot.reserve(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i) snapshot.emplace_back(i, entries_[i]);
    }
    std::vector<std::pair<std::size_t, Entry>> hits;
    for (auto& s : snapshot) {
        if (filter.matches(*s.second)) hits.push_back(std::move(s));
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.second->started_at_ms != b.second->started_at_ms) {
            return a.second->started_at_ms > b.second->started_at_ms;
        }
        return a.first > b.first;
    });
    std::vector<EvaluationResult> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(*h.second);
    return out;
}

std::optional<EvaluationResult> EvalDb::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    refresh_locked();
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return *entries_[it->second];
}

std::size_t EvalDb::size() const {
    std::lock_guard lock(mu_);
    refresh_locked();
    return entries_.size();
}

} // namespace evalbench
