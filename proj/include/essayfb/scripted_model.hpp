#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "essayfb/corpus.hpp"
#include "essayfb/llm_client.hpp"
#include "essayfb/prompting.hpp"

namespace essayfb::llm {

/// Deterministic stand-in for a chat model, used by the offline mock server
/// and the tests. It recognises grid prompts, score re-prompts and judge
/// prompts, and answers each with a response derived from a hash of the
/// strategy and essay, so the score every run should produce is known up
/// front.
class ScriptedModel {
 public:
  struct Outcome {
    std::optional<int> score;  // what extraction should end up with
    bool needs_reprompt = false;
    std::string response;
  };

  struct Decoded {
    prompting::Strategy strategy;
    const corpus::Essay* essay = nullptr;
  };

  explicit ScriptedModel(const corpus::Corpus& corpus, std::uint64_t seed = 0,
                         const prompting::TemplateLibrary* library = nullptr);

  /// Recovers strategy and essay from an assembled grid prompt.
  std::optional<Decoded> decode(std::string_view prompt) const;

  Outcome outcome(const prompting::Strategy& strategy, const corpus::Essay& essay) const;

  /// Helpfulness the scripted judge assigns to a piece of feedback.
  int helpfulness(std::string_view feedback) const;

  MockReply reply(std::string_view prompt) const;
  MockEndpoint::Responder responder() const;

 private:
  const corpus::Corpus& corpus_;
  std::uint64_t seed_;
  const prompting::TemplateLibrary& library_;
  std::map<std::string, const corpus::Essay*, std::less<>> by_text_;
};

/// In-process Generator over a ScriptedModel; counts calls.
class ScriptedGenerator : public Generator {
 public:
  ScriptedGenerator(const ScriptedModel& model, std::string name = "scripted")
      : model_(model), name_(std::move(name)) {}
  GenerationResponse generate(const GenerationRequest& req) override;
  std::string model_name() const override { return name_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  const ScriptedModel& model_;
  std::string name_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace essayfb::llm
