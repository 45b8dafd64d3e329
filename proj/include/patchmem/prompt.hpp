#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchmem/compress.hpp"
#include "patchmem/gateway.hpp"
#include "patchmem/localizer.hpp"
#include "patchmem/retrieval.hpp"

namespace patchmem {

/// System prompt text of a phase (from data/prompts, compiled in).
std::string_view phase_prompt(Phase phase);

struct PromptInputs {
  RetrievalKeys keys;
  int attempt = 1;
  std::string crash_output;                        // locator: latest PoC output
  std::optional<LocalizationObject> localization;  // patcher
  std::string failed_patch;                        // patcher, after a failed verification
  std::string accepted_patch;                      // verifier
  std::optional<CompressedContext> compressed;
};

struct RenderedPrompt {
  ChatTurn system;
  ChatTurn user;
  std::vector<std::string> included;  // "<tier>:<instance_id>" in rank order
  std::size_t dropped = 0;            // memories removed to fit the budget

  std::size_t size() const { return system.content.size() + user.content.size(); }
};

inline constexpr std::size_t kDefaultPromptBudget = 24000;
inline constexpr std::size_t kMemoryPatchCap = 6000;
inline constexpr std::size_t kCrashOutputCap = 4000;

/// Deterministic prompt assembly. Memories are rendered in the given (rank)
/// order; while over `budget` the lowest-ranked one is dropped. L3 entries
/// are never rendered into a Patcher prompt that has no failed patch.
RenderedPrompt render_prompt(Phase phase, const PromptInputs& inputs, const std::vector<RankedEntry>& memories,
                             std::size_t budget = kDefaultPromptBudget);

/// One memory as it appears in prompts.
std::string render_memory(std::size_t rank, const RankedEntry& ranked);

}  // namespace patchmem
