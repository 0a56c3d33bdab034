#pragma once

#include <string>

#include "sdeq/equivalence.hpp"

namespace sdeq {

/// Canonical JSON form of a derivation: states with payloads, variables,
/// order edges, inputs, output multiplicities, tests and the derived
/// knowledge. Serialization round-trips bit-exactly.
std::string derivation_to_json(const Derivation& d);
Derivation derivation_from_json(const std::string& text);

std::string connection_to_json(const Connection& phi);
Connection connection_from_json(const std::string& text);

/// A satisfiability witness: the attacker derivation, its connection and
/// the trace as a variable table.
std::string witness_to_json(const Solution& sol, const std::map<std::string, Term>& trace);
struct Witness {
  Solution solution;
  std::map<std::string, Term> trace;
};
Witness witness_from_json(const std::string& text);

/// A distinguishing witness: the probe, the solution, both valuations and
/// the failing equation.
std::string counterexample_to_json(const Counterexample& cex, int direction);
struct ParsedCounterexample {
  Counterexample cex;
  int direction = 0;
};
ParsedCounterexample counterexample_from_json(const std::string& text);

std::string solution_set_to_json(const SolutionSet& set);

}  // namespace sdeq
