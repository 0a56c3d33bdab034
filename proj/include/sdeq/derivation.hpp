#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sdeq/theory.hpp"
#include "sdeq/unify.hpp"

namespace sdeq {

enum class StateKind : uint8_t { Memory, Reception, Deduction, Reuse };

std::string to_string(StateKind k);

struct State {
  StateKind kind = StateKind::Memory;
  std::optional<Term> value;  // Memory: its ground term
  std::string symbol;         // Deduction: public symbol
  std::vector<int> args;      // Deduction: strictly earlier states
  int target = -1;            // Reuse: earlier state with the same variable
  bool operator==(const State& o) const = default;
};

/// A symbolic derivation: states over an integer index set with an explicit
/// strict-order DAG, one variable per state (shared by re-use states), an
/// input subset, an output multiset, and equality tests between state
/// variables. The knowledge set is derived from the memory states. The
/// unification system of the derivation is exactly the defining equation of
/// each memory/deduction state plus the tests.
struct Derivation {
  std::vector<State> states;
  std::vector<std::string> vars;
  std::vector<std::pair<int, int>> order;  // DAG edges i < j
  std::set<int> inputs;
  std::map<int, int> outputs;  // index -> multiplicity >= 1
  std::vector<std::pair<int, int>> tests;

  int size() const { return static_cast<int>(states.size()); }
  std::vector<Term> knowledge() const;           // sorted unique memory terms
  std::vector<int> topo_order() const;           // smallest-index-first; throws on cycles
  std::vector<int> visible_outputs() const;      // multiplicity >= 2, topo-ordered
  UnificationSystem system() const;
  bool closed() const { return inputs.empty(); }
  std::set<std::string> variable_names() const;

  bool operator==(const Derivation& o) const = default;
};

/// Strict precedence relation of a derivation, precomputed.
class Reach {
 public:
  explicit Reach(const Derivation& d);
  bool precedes(int i, int j) const { return m_[static_cast<size_t>(i) * n_ + j]; }

 private:
  size_t n_;
  std::vector<bool> m_;
};

enum class DerivationClass { General, Honest, Attacker };

struct Diagnostic {
  std::string code;
  int state = -1;
  std::string message;
};

/// Structural validation; one diagnostic per violated clause, empty when ok.
std::vector<Diagnostic> validate(const Derivation& d, const DeductionSystem& D,
                                 DerivationClass cls = DerivationClass::General);
void require_valid(const Derivation& d, const DeductionSystem& D,
                   DerivationClass cls = DerivationClass::General);

/// Endpoint of a connection link: side 0 is the first derivation of
/// connect(), side 1 the second.
struct ConnEnd {
  int side = 0;
  int index = 0;
  bool operator==(const ConnEnd& o) const = default;
};

struct ConnLink {
  ConnEnd input;
  ConnEnd output;
  bool operator==(const ConnLink& o) const = default;
};

struct Connection {
  std::vector<ConnLink> links;
  bool operator==(const Connection& o) const = default;
};

struct ConnectResult {
  Derivation derivation;
  /// Old index -> new index. A connected input maps to the new index of the
  /// output state it was identified with.
  std::vector<int> map1, map2;
};

/// Connection of two derivations over the given links. Variables are renamed
/// apart automatically; each link consumes one output occurrence. Throws
/// InvalidConnection on side errors, capacity violations, or when the merged
/// order would be cyclic (a non-monotone connection function).
ConnectResult connect(const Derivation& c1, const Derivation& c2, const Connection& phi,
                      const DeductionSystem& D);

struct TraceResult {
  bool satisfiable = false;
  /// Variable -> ground normal form; filled even when a test fails, so a
  /// rejection can name the offending values.
  std::map<std::string, Term> values;
  std::optional<std::pair<int, int>> failing_test;  // first failing test when unsat
};

/// Ground normal-form valuation of a closed derivation, evaluated along the
/// given linear extension (default: the canonical one). Throws NotClosed.
TraceResult trace(const Derivation& d, const DeductionSystem& D,
                  const std::optional<std::vector<int>>& extension = std::nullopt);

/// Turns the first memory state of each listed fresh-value constant into a
/// reception state. Requires every constant to be a nonce in the knowledge
/// and not a subterm of the remaining knowledge.
Derivation open_on(const Derivation& d, const std::set<Term>& constants, const DeductionSystem& D);

/// Renames fresh-value constants to ~n1, ~n2, ... in first-occurrence order
/// along the canonical linear extension.
Derivation canonicalize_nonces(const Derivation& d, const DeductionSystem& D);

struct EqualOpts {
  bool nonce_bijection = false;   // compare memory terms modulo a nonce renaming
  bool outputs_as_sets = false;   // ignore output multiplicities
  bool order_refinement = false;  // b's order may linearly extend a's
};

/// Equality modulo a renaming of variables (and optionally of nonces):
/// an order-isomorphism matching kinds, payloads, inputs, outputs and tests.
bool equal_modulo(const Derivation& a, const Derivation& b, const EqualOpts& opts = {});

enum class LeqVerdict { Yes, No, Unknown };

struct AsdBudget {
  int extension_deductions = 3;  // deduction states allowed in the auxiliary part
};

/// Ordering on attacker derivations: c1 <= c2 iff some opening of c1
/// composed with a bounded deduction-only extension equals c2 modulo
/// renaming, or c1 is c2 minus unused memory states. Sound; within the
/// budget only, with exhaustion reported as Unknown.
LeqVerdict asd_leq(const Derivation& c1, const Derivation& c2, const DeductionSystem& D,
                   const AsdBudget& budget = {});

struct Decomposition {
  Derivation deduction_part;  // tests stripped, duplicate deductions migrated
  Derivation testing_part;    // empty knowledge, relays plus tests
  Connection psi;             // testing inputs -> deduction-part outputs
};

/// Splits an attacker derivation into a deduction-only part and a testing
/// part; sigma is its trace against the intended honest context.
Decomposition decompose(const Derivation& ci, const std::map<std::string, Term>& sigma,
                        const DeductionSystem& D);

/// Well-formedness of an attacker derivation w.r.t. a trace: a value
/// deduced twice must be tied to its first deduction by a test.
bool is_well_formed(const Derivation& ci, const std::map<std::string, Term>& sigma);

/// Compact single-line dump, also used as a deterministic sort key.
std::string to_string(const Derivation& d);
std::string to_string(const Connection& phi);

/// Convenience constructor for sequential derivations.
class DerivationBuilder {
 public:
  explicit DerivationBuilder(std::string var_prefix = "x") : prefix_(std::move(var_prefix)) {}

  int memory(const Term& t, int out_mult = 1);
  int reception(int out_mult = 0);
  int deduction(const std::string& symbol, std::vector<int> args, int out_mult = 1);
  int reuse(int target, int out_mult = 1);
  void test(int i, int j);
  void set_output(int i, int mult);
  /// Total order 0 < 1 < ... < n-1.
  Derivation chain() const;
  /// Explicit order edges instead of the chain.
  Derivation with_order(std::vector<std::pair<int, int>> edges) const;

 private:
  std::string prefix_;
  Derivation d_;
};

}  // namespace sdeq
