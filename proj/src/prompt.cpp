#include "patchmem/prompt.hpp"

#include <cstdio>

#include "patchmem/text.hpp"

namespace patchmem {
namespace {

std::string fenced(std::string_view lang, std::string_view body) {
  std::string out = "```" + std::string(lang) + "\n" + std::string(body);
  if (!body.empty() && body.back() != '\n') out += '\n';
  return out + "```\n";
}

std::string task_section(const PromptInputs& in) {
  const auto& k = in.keys;
  return "# Task\ninstance: " + k.instance_id + "\nproject: " + k.project + "\nweakness: " + k.cwe +
         "\nlanguage: " + k.language + "\nattempt: " + std::to_string(in.attempt) + "\n\ndescription:\n" +
         k.description + "\n";
}

std::string phase_section(Phase phase, const PromptInputs& in) {
  std::string out;
  if (phase == Phase::Locator && !in.crash_output.empty())
    out += "\n# Proof-of-concept output\n" + fenced("", text::cap_head_tail(in.crash_output, kCrashOutputCap));
  if (phase == Phase::Patcher && in.localization) {
    const auto& l = *in.localization;
    out += "\n# Location\n" + l.file + " lines " + std::to_string(l.line_start) + "-" + std::to_string(l.line_end) +
           "\nreason: " + l.reason + "\n";
  }
  if (phase == Phase::Patcher && !in.failed_patch.empty())
    out += "\n# Previous candidate (rejected)\n" + fenced("diff", text::cap_head(in.failed_patch, kMemoryPatchCap));
  if (phase == Phase::Verifier && !in.accepted_patch.empty())
    out += "\n# Accepted patch\n" + fenced("diff", text::cap_head(in.accepted_patch, kMemoryPatchCap));
  return out;
}

}  // namespace

std::string render_memory(std::size_t rank, const RankedEntry& r) {
  const auto& e = r.entry;
  char sim[32];
  std::snprintf(sim, sizeof sim, "%.3f", r.similarity);
  std::string out = "## [" + std::to_string(rank) + "] " + std::string(to_string(e.tier)) + " " +
                    std::string(to_string(r.priority)) + " similarity " + sim + "\n";
  out += "instance: " + e.keys.instance_id + " | project " + e.keys.project + " | " + e.keys.cwe + " | " +
         e.keys.language + "\n";
  out += "description: " + e.keys.description + "\n";
  switch (e.tier) {
    case Tier::L1:
      out += "fix:\n" + fenced("diff", text::cap_head(e.fix_patch, kMemoryPatchCap));
      break;
    case Tier::L2:
      out += "rationale: " + e.rationale + "\nfix:\n" + fenced("diff", text::cap_head(e.fix_patch, kMemoryPatchCap));
      break;
    case Tier::L3:
      out += "insight: " + e.transition_insight + "\nfailed candidate:\n" +
             fenced("diff", text::cap_head(e.fail_patch, kMemoryPatchCap)) + "correction that made it pass:\n" +
             fenced("diff", text::cap_head(e.correction_delta, kMemoryPatchCap));
      break;
  }
  return out;
}

RenderedPrompt render_prompt(Phase phase, const PromptInputs& inputs, const std::vector<RankedEntry>& memories,
                             std::size_t budget) {
  std::vector<const RankedEntry*> kept;
  for (const auto& m : memories) {
    if (m.entry.tier == Tier::L3 && phase == Phase::Patcher && inputs.failed_patch.empty()) continue;
    kept.push_back(&m);
  }

  RenderedPrompt out;
  out.system = ChatTurn::system(std::string(phase_prompt(phase)));
  const std::string head = task_section(inputs) + phase_section(phase, inputs);
  const std::string tail =
      inputs.compressed ? "\n# Previous attempt (compressed)\n" + inputs.compressed->render() : std::string();

  std::vector<std::string> rendered;
  for (std::size_t i = 0; i < kept.size(); ++i) rendered.push_back(render_memory(i + 1, *kept[i]));

  auto assemble = [&](std::size_t n) {
    std::string body = head;
    if (n > 0) {
      body += "\n# Retrieved experience\n";
      for (std::size_t i = 0; i < n; ++i) body += rendered[i];
    }
    return body + tail;
  };

  std::size_t n = kept.size();
  std::string user = assemble(n);
  while (n > 0 && out.system.content.size() + user.size() > budget) {
    --n;
    user = assemble(n);
  }
  if (out.system.content.size() + user.size() > budget) {
    auto room = budget > out.system.content.size() ? budget - out.system.content.size() : 0;
    user = text::cap_head(user, room);
  }
  out.dropped = kept.size() - n;
  for (std::size_t i = 0; i < n; ++i)
    out.included.push_back(std::string(to_string(kept[i]->entry.tier)) + ":" + kept[i]->entry.keys.instance_id);
  out.user = ChatTurn::user(std::move(user));
  return out;
}

}  // namespace patchmem
