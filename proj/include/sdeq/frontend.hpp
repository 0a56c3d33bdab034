#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdeq/derivation.hpp"

namespace sdeq {

struct TheorySpec {
  std::string name;
  std::vector<Symbol> symbols;
  std::vector<RewriteRule> rules;
  std::vector<std::string> precedence;
  std::string cmin = "cmin";
};

/// Parses a theory file: symbol declarations, oriented rules, an optional
/// precedence, and the least constant. Orientation is checked on sampled
/// instances at load time.
std::pair<TheorySpec, DeductionSystem> parse_theory(const std::string& text);

struct NarrationMessage {
  std::string from;
  std::string to;
  Term payload;  // sender's view
  int line = 0;
};

struct NarrationCheck {
  std::string role;
  Term expected;       // receiver's view of the last message it received
  int after_message;   // index into messages
  int line = 0;
};

struct NarrationSpec {
  std::string name;
  std::vector<NarrationMessage> messages;
  std::map<std::string, std::vector<Term>> knowledge;  // role -> initial terms
  std::vector<NarrationCheck> checks;
  std::vector<Term> fresh;
  std::vector<Term> published;
  std::vector<std::string> role_order;  // first-appearance order
};

/// Parses a protocol narration: message lines `X -> Y : term`, knowledge
/// blocks `where X knows t1, t2`, test annotations `X checks recv == term`,
/// `fresh` declarations and a `publish` block. sk(t) is sugar for
/// inv(pk(t)).
NarrationSpec parse_narration(const std::string& text, const DeductionSystem& D);

/// Builds one honest derivation per role: memory states for the knowledge,
/// reception states plus eager decompositions for incoming messages,
/// deduction states for outgoing ones (visible at multiplicity 2), and one
/// equality test per check annotation.
std::map<std::string, Derivation> compile_narration(const NarrationSpec& spec,
                                                    const DeductionSystem& D);

/// The auxiliary derivation publishing the narration's `publish` terms.
Derivation build_knowledge_derivation(const NarrationSpec& spec, const DeductionSystem& D);

/// Roles in first-appearance order composed with the published knowledge,
/// all unconnected: the analysis target for satisfiability and equivalence.
Derivation narration_composite(const NarrationSpec& spec, const DeductionSystem& D);

}  // namespace sdeq
