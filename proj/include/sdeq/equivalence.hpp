#pragma once

#include "sdeq/solver.hpp"

namespace sdeq {

/// An attacker-side test of bounded shape: either an equality between two
/// observed positions, or one public application compared against an
/// observed position. A slot holds a visible-output ordinal of the honest
/// derivation, or kOpenSlot for a value supplied by the attacker.
struct TestProbe {
  enum class Kind { Equality, Deduction } kind = Kind::Equality;
  std::string symbol;       // Deduction probes
  std::vector<int> slots;   // Equality: 2; Deduction: arity arguments then the target
  bool operator==(const TestProbe& o) const = default;
};

inline constexpr int kOpenSlot = -1;

std::string to_string(const TestProbe& p);

/// All probes against the visible outputs, in deterministic order: equality
/// probes over position pairs and open slots, then one deduction probe per
/// public symbol and slot tuple.
std::vector<TestProbe> enumerate_probes(const Derivation& hsd, const DeductionSystem& D);

/// The testing derivation of a probe together with its attachment links
/// into a host composite (side 0).
struct ProbeInstance {
  Derivation derivation;
  Connection attachment;
};
ProbeInstance instantiate_probe(const TestProbe& probe, const Derivation& host,
                                const DeductionSystem& D);

/// Rewrites a connection against `from` into the positionally aligned
/// derivation `to`: the k-th input maps to the k-th input, the k-th visible
/// output to the k-th visible output.
Connection align_connection(const Connection& phi, const Derivation& from, const Derivation& to);

/// Adds the equality tests tying every re-derived value to its first
/// deduction and redirects argument references there, per the trace sigma.
Derivation make_well_formed(const Derivation& ci, const std::map<std::string, Term>& sigma);

struct Counterexample {
  std::optional<TestProbe> probe;  // nullopt: the empty probe
  Solution solution;               // distinguishing solution of the accepting composite
  std::map<std::string, Term> accepted_trace;
  std::map<std::string, Term> rejected_trace;      // valuation on the rejecting side
  std::optional<std::pair<Term, Term>> failing;    // differing values, when a test failed
  bool rejected_not_closed = false;                // the rejecting side never closed
};

struct EquivResult {
  enum class Verdict { Included, NotIncluded, Equivalent, Inequivalent, Unknown } verdict;
  std::optional<Counterexample> counterexample;
  /// Which direction produced the counterexample: 0 = first argument's
  /// solutions, 1 = second's.
  int direction = 0;
};

struct EquivConfig {
  SolverConfig solver;
  AsdBudget leq;
};

/// Does every solution of `a` carry over to `b`? Decided probe by probe via
/// complete solution sets; the first failing minimal solution becomes the
/// counterexample. Requires positionally aligned interfaces.
EquivResult check_inclusion(const Derivation& a, const Derivation& b, const DeductionSystem& D,
                            const EquivConfig& cfg = {});

EquivResult check_equiv(const Derivation& a, const Derivation& b, const DeductionSystem& D,
                        const EquivConfig& cfg = {});

/// Equivalence of derivations whose messages are forced ground terms.
EquivResult ground_check_equiv(const Derivation& a, const Derivation& b, const DeductionSystem& D,
                               const EquivConfig& cfg = {});

}  // namespace sdeq
