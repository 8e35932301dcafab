#include "url/compression/instruction.hpp"

#include "url/errors.hpp"

namespace url::compression {

std::string role_name(Role role) {
  return role == Role::kClaim ? "claim" : "reference";
}

Role role_from_name(const std::string& name) {
  if (name == "claim") return Role::kClaim;
  if (name == "reference") return Role::kReference;
  throw DataError("unknown role: " + name + " (expected claim or reference)");
}

std::string InstructionTemplate::render(
    const std::string& counterpart_description) const {
  if (counterpart_description.empty()) {
    throw DataError("instruction for domain '" + domain +
                    "' rendered with an empty counterpart description");
  }
  const size_t slot = text_template.find("{}");
  if (slot == std::string::npos) {
    throw DataError("instruction template for domain '" + domain +
                    "' has no {} slot");
  }
  std::string out = text_template;
  out.replace(slot, 2, counterpart_description);
  if (out.empty()) {
    throw DataError("instruction for domain '" + domain +
                    "' rendered to empty text");
  }
  return out;
}

std::string instruction_style_name(InstructionStyle s) {
  return s == InstructionStyle::kFull ? "full" : "compact";
}

InstructionStyle instruction_style_from_name(const std::string& name) {
  if (name == "full") return InstructionStyle::kFull;
  if (name == "compact") return InstructionStyle::kCompact;
  throw DataError("unknown instruction style: " + name +
                  " (expected full or compact)");
}

InstructionTemplate DomainInstructionSet::claim_template() const {
  InstructionTemplate t;
  t.role = Role::kClaim;
  t.domain = domain;
  if (style == InstructionStyle::kFull) {
    t.text_template = "Above text is description of a " + claim_description +
                      ". Based on your own knowledge, compress it into an "
                      "embedding that can be used to search for relevant {}.";
  } else {
    t.text_template = "Above text is a " + claim_description +
                      ". Compress it into an embedding to search for the "
                      "relevant {}.";
  }
  return t;
}

InstructionTemplate DomainInstructionSet::reference_template() const {
  InstructionTemplate t;
  t.role = Role::kReference;
  t.domain = domain;
  if (style == InstructionStyle::kFull) {
    t.text_template = "Above text is a " + reference_description +
                      ". Based on your own knowledge, compress it into an "
                      "embedding that can be used to match relevant {}.";
  } else {
    t.text_template = "Above text is a " + reference_description +
                      ". Compress it into an embedding to match the "
                      "relevant {}.";
  }
  return t;
}

InstructionTemplate DomainInstructionSet::for_role(Role role) const {
  return role == Role::kClaim ? claim_template() : reference_template();
}

RenderedInstruction DomainInstructionSet::rendered(Role role) const {
  validate();
  const std::string& counterpart =
      role == Role::kClaim ? reference_description : claim_description;
  return RenderedInstruction{role, domain, for_role(role).render(counterpart)};
}

void DomainInstructionSet::validate() const {
  if (domain.empty()) throw DataError("instruction set with empty domain name");
  if (claim_description.empty() || reference_description.empty()) {
    throw DataError("instruction set for domain '" + domain +
                    "' is missing a side description");
  }
}

nlohmann::json DomainInstructionSet::to_json() const {
  return nlohmann::json{{"domain", domain},
                        {"claim_description", claim_description},
                        {"reference_description", reference_description},
                        {"style", instruction_style_name(style)}};
}

DomainInstructionSet DomainInstructionSet::from_json(const nlohmann::json& j) {
  DomainInstructionSet s;
  try {
    s.domain = j.at("domain").get<std::string>();
    s.claim_description = j.at("claim_description").get<std::string>();
    s.reference_description = j.at("reference_description").get<std::string>();
    s.style = instruction_style_from_name(
        j.value("style", std::string("full")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad instruction set record: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<DomainInstructionSet> builtin_domains() {
  return {
      {"finance", "government policy", "company profile",
       InstructionStyle::kFull},
      {"law", "legal case", "legal provision", InstructionStyle::kFull},
      {"medicine", "patient symptom", "drug description",
       InstructionStyle::kFull},
      {"education", "training objective", "course introduction",
       InstructionStyle::kFull},
  };
}

DomainInstructionSet generic_domain() {
  return {"generic", "passage", "related passage", InstructionStyle::kFull};
}

const DomainInstructionSet& find_domain(
    std::span<const DomainInstructionSet> sets, const std::string& domain) {
  for (const auto& s : sets) {
    if (s.domain == domain) return s;
  }
  throw DataError("unknown domain: " + domain);
}

}  // namespace url::compression
