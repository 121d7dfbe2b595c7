#pragma once
// Judge and advisor clients over a JSON request/response transport.
//
// Every call is one operation name plus a JSON request; the answer is a JSON
// document. Two transports exist:
//   scripted:<path>  canned responses per operation, consumed in order
//   http:<url>       POST <url>/<operation> with the request as body
// See docs/formats.md for request and response schemas.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmag/assembly.hpp"
#include "cmag/router.hpp"

namespace cmag {

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws Error(kTransportError) when no answer can be obtained.
  virtual nlohmann::json call(const std::string& operation, const nlohmann::json& request) = 0;
};

// Script document:
//   {"schema": "cmag.judge_script", "version": 1, "repeat_last": true,
//    "responses": {"verify": [{...}, {...}], "compare_batch": [...], ...}}
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(nlohmann::json script);
  static std::unique_ptr<ScriptedTransport> from_file(const std::filesystem::path& path);

  nlohmann::json call(const std::string& operation, const nlohmann::json& request) override;

  std::size_t calls(const std::string& operation) const;
  const std::vector<std::pair<std::string, nlohmann::json>>& requests() const { return requests_; }

 private:
  std::map<std::string, std::vector<nlohmann::json>> responses_;
  std::map<std::string, std::size_t> cursor_;
  bool repeat_last_ = true;
  std::vector<std::pair<std::string, nlohmann::json>> requests_;
  mutable std::mutex mu_;
};

class HttpTransport : public Transport {
 public:
  // `url` is "http://host:port[/prefix]". One retry after a failed attempt.
  HttpTransport(std::string url, std::chrono::milliseconds timeout, std::size_t retries = 1);

  nlohmann::json call(const std::string& operation, const nlohmann::json& request) override;

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::milliseconds timeout_;
  std::size_t retries_;
};

// "scripted:<path>" or "http:<url>". Timeout applies to http only.
std::unique_ptr<Transport> make_transport(const std::string& mode, std::chrono::milliseconds timeout);

// Judge driven through a transport. Response shorthands understood here:
//   filter_grid    {"kept": [...]} | {"keep_all": true} | {"keep_top": n}
//                  optionally wrapped as {"by_category": {cat: resp}, "default": resp}
//   select_outfit  {"selections": {cat: asset}} | {"pick": "top"}
//   verify         {"verdict": "pass" | "fail", "issues": [...], "edits": [...]}
//   compare_batch  {"winner": i} | {"prefer": "first" | "max_look_id" | "max_score"}
class TransportJudge : public JudgeClient {
 public:
  explicit TransportJudge(Transport& transport) : transport_(transport) {}

  std::vector<std::string> filter_grid(const CandidatePool& pool, const JudgeContext& ctx) override;
  std::map<std::string, std::string> select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                   const JudgeContext& ctx) override;
  VerificationReport verify(const nlohmann::json& look_descriptor, const JudgeContext& ctx) override;
  std::size_t compare_batch(const std::vector<nlohmann::json>& look_descriptors, const JudgeContext& ctx) override;

 private:
  nlohmann::json ask(const std::string& operation, nlohmann::json request, const JudgeContext& ctx);

  Transport& transport_;
};

class TransportAdvisor : public AdvisorClient {
 public:
  explicit TransportAdvisor(Transport& transport) : transport_(transport) {}

  AdvisorResponse advise(const PromptSpec& spec, const Taxonomy& taxonomy, const RoutingPlan& plan) override;

 private:
  Transport& transport_;
};

// Deterministic in-process judge for evaluation runs: keeps every candidate,
// picks per-category top-1, fails verification with add edits while a
// category of the last selected pools is unfilled, and prefers the look with
// the highest score sum in comparisons.
class HeuristicJudge : public JudgeClient {
 public:
  std::vector<std::string> filter_grid(const CandidatePool& pool, const JudgeContext& ctx) override;
  std::map<std::string, std::string> select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                   const JudgeContext& ctx) override;
  VerificationReport verify(const nlohmann::json& look_descriptor, const JudgeContext& ctx) override;
  std::size_t compare_batch(const std::vector<nlohmann::json>& look_descriptors, const JudgeContext& ctx) override;

  // Pools the verifier checks completeness against; select_outfit also sets them.
  void set_pools(std::map<std::string, CandidatePool> pools) { pools_ = std::move(pools); }

 private:
  std::map<std::string, CandidatePool> pools_;
};

// Decorator counting calls per operation.
class CountingJudge : public JudgeClient {
 public:
  explicit CountingJudge(JudgeClient& inner) : inner_(inner) {}

  std::vector<std::string> filter_grid(const CandidatePool& pool, const JudgeContext& ctx) override;
  std::map<std::string, std::string> select_outfit(const std::map<std::string, CandidatePool>& pools,
                                                   const JudgeContext& ctx) override;
  VerificationReport verify(const nlohmann::json& look_descriptor, const JudgeContext& ctx) override;
  std::size_t compare_batch(const std::vector<nlohmann::json>& look_descriptors, const JudgeContext& ctx) override;

  std::size_t filter_calls = 0;
  std::size_t select_calls = 0;
  std::size_t verify_calls = 0;
  std::size_t compare_calls = 0;

 private:
  JudgeClient& inner_;
};

}  // namespace cmag
