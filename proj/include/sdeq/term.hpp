#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdeq {

enum class ErrorCode {
  InvalidPosition,
  NonGroundTerm,
  RewriteDepthExceeded,
  NonGroundingSubstitution,
  InvalidTheory,
  InvalidDerivation,
  InvalidConnection,
  NotClosed,
  PreconditionViolation,
  InterfaceMismatch,
  ParseError,
  IoError,
};

struct Error : std::runtime_error {
  Error(ErrorCode c, const std::string& what) : std::runtime_error(what), code(c) {}
  ErrorCode code;
};

enum class TermKind : uint8_t { Constant, Variable, Application };

class Term;

namespace detail {
struct TermNode {
  TermKind kind;
  bool nonce;              // Constant only: member of the reserved fresh-value namespace
  std::string name;        // constant name, variable name, or function symbol
  std::vector<Term> args;  // Application only
  // cached structural facts
  bool ground;
  bool has_nonce;
  uint32_t size;  // node count
  size_t hash;
};
}  // namespace detail

/// Immutable first-order term. Structurally equal terms share one node
/// (hash-consed), so equality and hashing are O(1) and term sets behave
/// like DAG node sets.
class Term {
 public:
  /// Null handle; only assignment and destruction are valid on it.
  Term() : node_(nullptr) {}

  static Term variable(const std::string& name);
  static Term constant(const std::string& name);  // free constant
  static Term nonce(const std::string& name);     // fresh-value constant, prints as ~name
  static Term app(const std::string& symbol, std::vector<Term> args);

  TermKind kind() const { return node_->kind; }
  bool is_variable() const { return node_->kind == TermKind::Variable; }
  bool is_constant() const { return node_->kind == TermKind::Constant; }
  bool is_application() const { return node_->kind == TermKind::Application; }
  bool is_nonce() const { return node_->kind == TermKind::Constant && node_->nonce; }
  bool is_free_constant() const { return node_->kind == TermKind::Constant && !node_->nonce; }

  const std::string& name() const { return node_->name; }
  const std::vector<Term>& args() const { return node_->args; }
  std::size_t arity() const { return node_->args.size(); }

  bool ground() const { return node_->ground; }
  bool has_nonce() const { return node_->has_nonce; }
  uint32_t size() const { return node_->size; }

  bool operator==(const Term& o) const { return node_ == o.node_; }
  bool operator!=(const Term& o) const { return node_ != o.node_; }

  /// Deterministic structural order, stable across processes.
  static int compare(const Term& a, const Term& b);
  bool operator<(const Term& o) const { return compare(*this, o) < 0; }

  size_t hash() const { return node_->hash; }
  std::string str() const;

 private:
  explicit Term(const detail::TermNode* n) : node_(n) {}
  const detail::TermNode* node_;
  friend struct detail::TermNode;
  friend Term intern(detail::TermNode&&);
};

std::ostream& operator<<(std::ostream& os, const Term& t);

struct TermHash {
  size_t operator()(const Term& t) const { return t.hash(); }
};

/// Sequence of 1-based argument indices; the empty sequence addresses the root.
using Position = std::vector<unsigned>;

std::set<Term> subterms(const Term& t);
bool is_subterm(const Term& s, const Term& t);

/// Subterm of t at position p. Throws InvalidPosition.
Term subterm_at(const Term& t, const Position& p);

/// t[p <- s]. Throws InvalidPosition.
Term replace_at(const Term& t, const Position& p, const Term& s);

/// All positions of t whose addressed subterm is not a variable,
/// in preorder (root first).
std::vector<Position> non_variable_positions(const Term& t);

std::set<std::string> variables_of(const Term& t);
std::set<Term> constants_of(const Term& t);
std::set<Term> nonces_of(const Term& t);

/// Replaces every occurrence of the free constant c in t by s.
Term replace_const(const Term& t, const Term& c, const Term& s);

/// Idempotent finite mapping from variables to terms: no variable of the
/// support occurs in any image term.
class Substitution {
 public:
  Substitution() = default;

  /// Builds a substitution, erasing identity bindings. Throws if the
  /// result cannot be made idempotent (support variable in an image).
  static Substitution make(std::map<std::string, Term> bindings);
  static Substitution single(const std::string& var, const Term& t);

  const std::map<std::string, Term>& bindings() const { return bindings_; }
  bool empty() const { return bindings_.empty(); }
  bool contains(const std::string& var) const { return bindings_.count(var) != 0; }
  std::optional<Term> lookup(const std::string& var) const;

  Term apply(const Term& t) const;
  Term operator()(const Term& t) const { return apply(t); }

  /// this followed by theta: x -> theta(this(x)), plus theta's bindings on
  /// variables outside this support. Result is idempotent.
  Substitution composed(const Substitution& theta) const;

  /// Restriction to the given variables.
  Substitution restricted(const std::set<std::string>& vars) const;

  bool is_ground() const;
  bool operator==(const Substitution& o) const { return bindings_ == o.bindings_; }
  std::string str() const;

 private:
  std::map<std::string, Term> bindings_;
};

inline Term apply_subst(const Substitution& sigma, const Term& t) { return sigma.apply(t); }

/// Term concrete syntax: f(t1,...,tn), bare identifiers for constants,
/// ?x for variables, ~n for fresh-value constants. Arity-0 symbols listed
/// in `symbols` parse as applications rather than free constants.
Term parse_term(const std::string& text, const std::map<std::string, unsigned>* symbols = nullptr);

}  // namespace sdeq

template <>
struct std::hash<sdeq::Term> {
  size_t operator()(const sdeq::Term& t) const { return t.hash(); }
};
