#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdeq/theory.hpp"

namespace sdeq {

struct Equation {
  Term left;
  Term right;
  bool operator==(const Equation& o) const { return left == o.left && right == o.right; }
};

/// Finite conjunction of equations u =? v.
using UnificationSystem = std::vector<Equation>;

std::string to_string(const UnificationSystem& s);

/// Most general syntactic unifier (occurs check enforced), or nullopt when
/// the system has no syntactic unifier.
std::optional<Substitution> unify_syntactic(const UnificationSystem& system);

struct EUnifyResult {
  std::vector<Substitution> unifiers;
  /// False when the narrowing depth cap cut live branches; the set may then
  /// be incomplete.
  bool complete = true;
};

/// Complete set of unifiers modulo the rewrite system, computed by narrowing
/// with the oriented rules plus syntactic unification, then minimized under
/// the instantiation ordering. Requires a subterm-convergent system.
EUnifyResult e_unify(const UnificationSystem& system, const DeductionSystem& D, int depth_cap = 12);

/// True iff normalize(u sigma) == normalize(v sigma) for every equation.
/// Throws NonGroundingSubstitution when sigma leaves a variable of the
/// system uninstantiated by a ground term.
bool satisfies(const Substitution& sigma, const UnificationSystem& system, const DeductionSystem& D);

/// Instantiation ordering: true iff some theta makes sigma*theta equal to
/// tau modulo the theory on the union of both supports.
bool is_more_general(const Substitution& sigma, const Substitution& tau, const DeductionSystem& D,
                     int depth_cap = 12);

/// Drops every unifier that is an instance of another member; keeps the
/// earlier member on ties. Result is canonically sorted.
std::vector<Substitution> minimize_unifiers(std::vector<Substitution> unifiers,
                                            const DeductionSystem& D, int depth_cap = 12);

/// Deterministic fresh-name source: yields base, base1, base2, ... skipping
/// the given used set.
class NameSource {
 public:
  explicit NameSource(std::set<std::string> used) : used_(std::move(used)) {}
  std::string fresh(const std::string& base);

 private:
  std::set<std::string> used_;
  std::map<std::string, int> counters_;
};

}  // namespace sdeq
