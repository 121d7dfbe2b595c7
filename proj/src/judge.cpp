#include "cmag/judge.hpp"

#include <algorithm>
#include <fstream>

#include "httplib.h"

#include "cmag/error.hpp"

namespace cmag {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

ScriptedTransport::ScriptedTransport(json script) {
  try {
    repeat_last_ = script.value("repeat_last", true);
    for (const auto& [op, list] : script.at("responses").items()) {
      if (!list.is_array()) throw Error(ErrorCode::kMalformedRecord, "script responses for '" + op + "' must be a list");
      responses_[op] = list.get<std::vector<json>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("judge script: ") + e.what());
  }
}

std::unique_ptr<ScriptedTransport> ScriptedTransport::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  try {
    return std::make_unique<ScriptedTransport>(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
}

json ScriptedTransport::call(const std::string& operation, const json& request) {
  std::lock_guard lock(mu_);
  requests_.emplace_back(operation, request);
  auto it = responses_.find(operation);
  if (it == responses_.end() || it->second.empty()) {
    throw Error(ErrorCode::kTransportError, "script has no responses for '" + operation + "'");
  }
  std::size_t& cursor = cursor_[operation];
  if (cursor >= it->second.size()) {
    if (!repeat_last_) throw Error(ErrorCode::kTransportError, "script exhausted for '" + operation + "'");
    return it->second.back();
  }
  return it->second[cursor++];
}

std::size_t ScriptedTransport::calls(const std::string& operation) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(requests_.begin(), requests_.end(),
                                                [&](const auto& r) { return r.first == operation; }));
}

HttpTransport::HttpTransport(std::string url, std::chrono::milliseconds timeout, std::size_t retries)
    : timeout_(timeout), retries_(retries) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "judge url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme + 3);
  origin_ = url.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

json HttpTransport::call(const std::string& operation, const json& request) {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string body = request.dump();
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= retries_; ++attempt) {
    auto res = client.Post(prefix_ + "/" + operation, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      last_error = std::string("unparseable response: ") + e.what();
    }
  }
  throw Error(ErrorCode::kTransportError, operation + " via " + origin_ + prefix_ + " failed: " + last_error);
}

std::unique_ptr<Transport> make_transport(const std::string& mode, std::chrono::milliseconds timeout) {
  if (mode.rfind("scripted:", 0) == 0) return ScriptedTransport::from_file(mode.substr(9));
  if (mode.rfind("http:", 0) == 0) {
    std::string url = mode.substr(5);
    if (url.rfind("//", 0) == 0) url = "http:" + url;  // "http://host" passed whole
    return std::make_unique<HttpTransport>(url, timeout);
  }
  throw Error(ErrorCode::kInvalidArgument, "transport mode must be scripted:<path> or http:<url>, got '" + mode + "'");
}

// ---------------------------------------------------------------------------
// Transport-backed clients
// ---------------------------------------------------------------------------

namespace {

json pool_to_json(const CandidatePool& pool) {
  json list = json::array();
  for (const auto& c : pool.candidates) {
    list.push_back({{"asset_id", c.asset_id}, {"score", c.score}, {"source", std::string(candidate_source_name(c.source))}});
  }
  return list;
}

double score_sum(const json& descriptor) {
  double total = 0.0;
  for (const auto& [_, sel] : descriptor.at("selections").items()) {
    if (sel.contains("score") && sel.at("score").is_number()) total += sel.at("score").get<double>();
  }
  return total;
}

}  // namespace

json TransportJudge::ask(const std::string& operation, json request, const JudgeContext& ctx) {
  request["op"] = operation;
  request["prompt"] = ctx.prompt.to_json();
  request["context"] = ctx.concept_context;
  try {
    return transport_.call(operation, request);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTransportError) throw;
    throw Error(ErrorCode::kJudgeUnavailable, e.what());
  }
}

std::vector<std::string> TransportJudge::filter_grid(const CandidatePool& pool, const JudgeContext& ctx) {
  json resp = ask("filter_grid", {{"category_id", pool.category_id}, {"candidates", pool_to_json(pool)}}, ctx);
  try {
    if (resp.contains("by_category")) {
      const auto& by_cat = resp.at("by_category");
      resp = by_cat.contains(pool.category_id) ? by_cat.at(pool.category_id) : resp.value("default", json::object());
    }
    std::vector<std::string> kept;
    if (resp.value("keep_all", false)) {
      for (const auto& c : pool.candidates) kept.push_back(c.asset_id);
    } else if (resp.contains("keep_top")) {
      const auto n = resp.at("keep_top").get<std::size_t>();
      for (std::size_t i = 0; i < std::min(n, pool.candidates.size()); ++i) kept.push_back(pool.candidates[i].asset_id);
    } else {
      kept = resp.at("kept").get<std::vector<std::string>>();
    }
    return kept;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kJudgeUnavailable, std::string("malformed filter_grid response: ") + e.what());
  }
}

std::map<std::string, std::string> TransportJudge::select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                                 const JudgeContext& ctx) {
  json pools_doc = json::object();
  for (const auto& [cat, pool] : pools) pools_doc[cat] = pool_to_json(pool);
  const json resp = ask("select_outfit", {{"pools", pools_doc}}, ctx);
  try {
    std::map<std::string, std::string> picks;
    if (resp.value("pick", std::string()) == "top") {
      for (const auto& [cat, pool] : pools) {
        if (!pool.candidates.empty()) picks[cat] = pool.candidates.front().asset_id;
      }
      return picks;
    }
    return resp.at("selections").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kJudgeUnavailable, std::string("malformed select_outfit response: ") + e.what());
  }
}

VerificationReport TransportJudge::verify(const json& look_descriptor, const JudgeContext& ctx) {
  const json resp = ask("verify", {{"look", look_descriptor}}, ctx);
  try {
    return VerificationReport::from_json(resp);
  } catch (const Error& e) {
    throw Error(ErrorCode::kJudgeUnavailable, e.what());
  }
}

std::size_t TransportJudge::compare_batch(const std::vector<json>& look_descriptors, const JudgeContext& ctx) {
  const json resp = ask("compare_batch", {{"looks", look_descriptors}}, ctx);
  try {
    if (resp.contains("winner")) return resp.at("winner").get<std::size_t>();
    const auto prefer = resp.at("prefer").get<std::string>();
    std::size_t best = 0;
    for (std::size_t i = 1; i < look_descriptors.size(); ++i) {
      if (prefer == "max_look_id") {
        if (look_descriptors[i].at("look_id").get<std::uint32_t>() > look_descriptors[best].at("look_id").get<std::uint32_t>()) best = i;
      } else if (prefer == "max_score") {
        if (score_sum(look_descriptors[i]) > score_sum(look_descriptors[best])) best = i;
      } else if (prefer != "first") {
        throw Error(ErrorCode::kJudgeUnavailable, "unknown compare_batch preference '" + prefer + "'");
      }
    }
    return best;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kJudgeUnavailable, std::string("malformed compare_batch response: ") + e.what());
  }
}

AdvisorResponse TransportAdvisor::advise(const PromptSpec& spec, const Taxonomy& taxonomy, const RoutingPlan& plan) {
  json request = make_advisor_request(spec, taxonomy, plan);
  request["op"] = "advise";
  try {
    return AdvisorResponse::from_json(transport_.call("advise", request));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kTransportError) throw;
    throw Error(ErrorCode::kAdvisorUnavailable, e.what());
  }
}

// ---------------------------------------------------------------------------
// In-process judges
// ---------------------------------------------------------------------------

std::vector<std::string> HeuristicJudge::filter_grid(const CandidatePool& pool, const JudgeContext&) {
  std::vector<std::string> kept;
  for (const auto& c : pool.candidates) kept.push_back(c.asset_id);
  return kept;
}

std::map<std::string, std::string> HeuristicJudge::select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                                 const JudgeContext&) {
  pools_ = pools;
  std::map<std::string, std::string> picks;
  for (const auto& [cat, pool] : pools) {
    if (!pool.candidates.empty()) picks[cat] = pool.candidates.front().asset_id;
  }
  return picks;
}

VerificationReport HeuristicJudge::verify(const json& look_descriptor, const JudgeContext&) {
  VerificationReport report;
  report.pass = true;
  const auto& selections = look_descriptor.at("selections");
  for (const auto& [cat, pool] : pools_) {
    if (selections.contains(cat) || pool.candidates.empty()) continue;
    report.pass = false;
    report.issues.push_back({IssueKind::kMissingCategory, cat});
    report.edits.push_back({EditAction::kAdd, cat, pool.candidates.front().asset_id});
  }
  return report;
}

std::size_t HeuristicJudge::compare_batch(const std::vector<json>& look_descriptors, const JudgeContext&) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < look_descriptors.size(); ++i) {
    if (score_sum(look_descriptors[i]) > score_sum(look_descriptors[best])) best = i;
  }
  return best;
}

std::vector<std::string> CountingJudge::filter_grid(const CandidatePool& pool, const JudgeContext& ctx) {
  ++filter_calls;
  return inner_.filter_grid(pool, ctx);
}

std::map<std::string, std::string> CountingJudge::select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                                const JudgeContext& ctx) {
  ++select_calls;
  return inner_.select_outfit(pools, ctx);
}

VerificationReport CountingJudge::verify(const json& look_descriptor, const JudgeContext& ctx) {
  ++verify_calls;
  return inner_.verify(look_descriptor, ctx);
}

std::size_t CountingJudge::compare_batch(const std::vector<json>& look_descriptors, const JudgeContext& ctx) {
  ++compare_calls;
  return inner_.compare_batch(look_descriptors, ctx);
}

}  // namespace cmag
