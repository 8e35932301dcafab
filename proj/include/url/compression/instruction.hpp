#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace url::compression {

// A text is embedded either as a claim (the query side: it searches) or as a
// reference (the corpus side: it gets matched). The instruction wording and
// the contrastive pairing both key off this.
enum class Role { kClaim, kReference };

std::string role_name(Role role);
Role role_from_name(const std::string& name);

// Instruction text specialized for one role in one domain, with a single {}
// slot that receives the description of the counterpart role. The claim
// phrasing asks to "search for" its counterpart; the reference phrasing asks
// to "match" its counterpart.
struct InstructionTemplate {
  Role role = Role::kClaim;
  std::string domain;
  std::string text_template;  // exactly one "{}" slot

  std::string render(const std::string& counterpart_description) const;
};

// Fully rendered instruction, ready for prompt assembly.
struct RenderedInstruction {
  Role role = Role::kClaim;
  std::string domain;
  std::string text;
};

// Two wordings of the same task framing: the long evaluation wording and a
// compact one that keeps synthetic-corpus prompts (and attention windows)
// short. Both keep the role-specific search/match verbs.
enum class InstructionStyle { kFull, kCompact };

std::string instruction_style_name(InstructionStyle s);
InstructionStyle instruction_style_from_name(const std::string& name);

// What a domain's two sides are called, e.g. "government policy" (claim) vs
// "company profile" (reference). Everything instruction-shaped derives from
// this plus a style.
struct DomainInstructionSet {
  std::string domain;
  std::string claim_description;
  std::string reference_description;
  InstructionStyle style = InstructionStyle::kFull;

  InstructionTemplate claim_template() const;
  InstructionTemplate reference_template() const;
  InstructionTemplate for_role(Role role) const;
  RenderedInstruction rendered(Role role) const;

  void validate() const;
  nlohmann::json to_json() const;
  static DomainInstructionSet from_json(const nlohmann::json& j);
};

// The four evaluation domains shipped with the tool.
std::vector<DomainInstructionSet> builtin_domains();

// The single generic instruction set used by the "fixed" instruction-ablation
// arm: one wording for every domain, no task awareness.
DomainInstructionSet generic_domain();

// Lookup by domain name; DataError when absent.
const DomainInstructionSet& find_domain(
    std::span<const DomainInstructionSet> sets, const std::string& domain);

}  // namespace url::compression
