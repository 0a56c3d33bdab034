#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sdeq/term.hpp"

namespace sdeq {

struct Symbol {
  std::string name;
  unsigned arity = 0;
  bool is_public = false;
};

/// Declared function symbols; names are unique, arities fixed.
class Signature {
 public:
  void declare(const Symbol& s);
  const Symbol* find(const std::string& name) const;
  const std::vector<Symbol>& symbols() const { return symbols_; }
  std::vector<Symbol> public_symbols() const;
  std::map<std::string, unsigned> arity_map() const;

 private:
  std::vector<Symbol> symbols_;
  std::map<std::string, size_t> index_;
};

struct RewriteRule {
  Term lhs;
  Term rhs;
};

/// Oriented rules l -> r, convergent on ground terms by assumption, plus a
/// total precedence on symbols: cmin is the least constant, all other free
/// constants come next (nonces above plain constants, each block ordered by
/// name), and function symbols sit above every constant, ordered by the
/// declared precedence list and then by name.
class RewriteSystem {
 public:
  RewriteSystem() = default;
  RewriteSystem(std::vector<RewriteRule> rules, std::vector<std::string> precedence,
                std::string cmin_name);

  const std::vector<RewriteRule>& rules() const { return rules_; }
  const std::string& cmin_name() const { return cmin_; }
  Term cmin() const { return Term::constant(cmin_); }

  /// Lexicographic path ordering on ground terms; total for distinct terms.
  /// Throws NonGroundTerm on non-ground input.
  bool lpo_greater(const Term& s, const Term& t) const;

  /// Unique normal form of a ground term under innermost-leftmost rewriting.
  /// Throws NonGroundTerm, or RewriteDepthExceeded after `step_cap` steps.
  Term normalize(const Term& t) const;

  /// Every right-hand side is a subterm of its left-hand side or ground.
  bool is_subterm_convergent() const;

  /// Checks vars(r) <= vars(l) and that sampled ground instances of every
  /// rule decrease in the ordering; throws InvalidTheory on failure.
  void validate_orientation() const;

  int step_cap = 10000;

 private:
  int head_rank(const Term& t) const;  // precedence key for the head symbol
  int compare_heads(const Term& s, const Term& t) const;

  std::vector<RewriteRule> rules_;
  std::vector<std::string> precedence_;
  std::map<std::string, int> prec_rank_;
  std::string cmin_ = "cmin";

  struct Cache;
  std::shared_ptr<Cache> cache_;
};

/// One-way syntactic matching: binds pattern variables so that
/// pattern*sigma == subject. Subject variables are treated as atoms.
std::optional<Substitution> match(const Term& pattern, const Term& subject);

/// Equational theory, signature and public-symbol subset, together with the
/// distinguished least constant and the reserved fresh-value namespace.
class DeductionSystem {
 public:
  DeductionSystem() = default;
  DeductionSystem(Signature sig, RewriteSystem rw) : sig_(std::move(sig)), rw_(std::move(rw)) {}

  const Signature& signature() const { return sig_; }
  const RewriteSystem& rewrites() const { return rw_; }

  bool is_public(const std::string& symbol) const {
    const Symbol* s = sig_.find(symbol);
    return s && s->is_public;
  }

  Term normalize(const Term& t) const { return rw_.normalize(t); }

 private:
  Signature sig_;
  RewriteSystem rw_;
};

/// The public-key theory used throughout the test fixtures: pair/fst/snd,
/// penc/pdec with private inv, public pk, and a free public f.
DeductionSystem dolev_yao();

}  // namespace sdeq
