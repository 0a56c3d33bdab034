#pragma once

#include <cstdint>
#include <optional>

#include "sdeq/derivation.hpp"

namespace sdeq {

struct SolverConfig {
  /// Attacker deduction states per candidate; -1 picks
  /// |visible outputs| + |inputs| + 4.
  int max_deductions = -1;
  int narrowing_depth = 12;
  /// Safety cap on explored search branches.
  int branch_cap = 200000;
  /// Reserved for schedule-independent parallel search.
  uint64_t seed = 0;
};

/// A stutter-free attacker derivation together with the connection that
/// closes the honest derivation.
struct Solution {
  Derivation asd;
  Connection phi;  // side 0: the honest derivation, side 1: the attacker
};

struct SolutionSet {
  std::vector<Solution> solutions;
  /// False when some bound (deductions, narrowing, branches) cut the search;
  /// an empty incomplete set is not a proof of unsatisfiability.
  bool complete = true;
};

enum class Membership { Yes, No, NotClosed };

/// True iff the connection closes the honest derivation and the resulting
/// system is satisfiable.
Membership membership(const Derivation& hsd, const Derivation& asd, const Connection& phi,
                      const DeductionSystem& D);

/// Finite complete set of stutter-free solutions, minimized under the
/// attacker ordering modulo a renaming of fresh values. Deterministic.
SolutionSet solve_complete(const Derivation& hsd, const DeductionSystem& D,
                           const SolverConfig& cfg = {});

struct SatResult {
  enum class Status { Sat, Unsat, Unknown } status = Status::Unknown;
  std::optional<Solution> witness;
};

/// Satisfiability of an honest derivation; `ground` restricts to derivations
/// whose input messages are forced to fixed ground terms.
SatResult check_sat(const Derivation& hsd, const DeductionSystem& D, const SolverConfig& cfg = {},
                    bool ground = false);

/// The forced ground input values of a ground honest derivation. Throws
/// PreconditionViolation when the derivation is not ground.
std::map<int, Term> ground_input_values(const Derivation& hsd, const DeductionSystem& D,
                                        int narrowing_depth = 12);

}  // namespace sdeq
