#include "sdeq/theory.hpp"

#include <algorithm>
#include <mutex>
#include <unordered_map>

namespace sdeq {

void Signature::declare(const Symbol& s) {
  if (index_.count(s.name))
    throw Error(ErrorCode::InvalidTheory, "duplicate symbol declaration: " + s.name);
  index_[s.name] = symbols_.size();
  symbols_.push_back(s);
}

const Symbol* Signature::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &symbols_[it->second];
}

std::vector<Symbol> Signature::public_symbols() const {
  std::vector<Symbol> out;
  for (const Symbol& s : symbols_)
    if (s.is_public) out.push_back(s);
  return out;
}

std::map<std::string, unsigned> Signature::arity_map() const {
  std::map<std::string, unsigned> out;
  for (const Symbol& s : symbols_) out[s.name] = s.arity;
  return out;
}

struct RewriteSystem::Cache {
  std::mutex mu;
  std::unordered_map<Term, Term, TermHash> normal;
};

RewriteSystem::RewriteSystem(std::vector<RewriteRule> rules, std::vector<std::string> precedence,
                             std::string cmin_name)
    : rules_(std::move(rules)),
      precedence_(std::move(precedence)),
      cmin_(std::move(cmin_name)),
      cache_(std::make_shared<Cache>()) {
  for (size_t i = 0; i < precedence_.size(); ++i)
    prec_rank_[precedence_[i]] = static_cast<int>(precedence_.size() - i);
}

// Head classes, least first: cmin < free constants < nonces < symbols.
int RewriteSystem::compare_heads(const Term& s, const Term& t) const {
  auto cls = [&](const Term& u) {
    if (u.is_constant()) {
      if (!u.is_nonce() && u.name() == cmin_) return 0;
      return u.is_nonce() ? 2 : 1;
    }
    return 3;
  };
  int cs = cls(s), ct = cls(t);
  if (cs != ct) return cs < ct ? -1 : 1;
  if (cs == 0) return 0;
  if (cs == 3) {
    auto rank = [&](const Term& u) {
      auto it = prec_rank_.find(u.name());
      return it == prec_rank_.end() ? 0 : it->second;
    };
    int rs = rank(s), rt = rank(t);
    if (rs != rt) return rs < rt ? -1 : 1;
  }
  int c = s.name().compare(t.name());
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

bool RewriteSystem::lpo_greater(const Term& s, const Term& t) const {
  if (!s.ground() || !t.ground())
    throw Error(ErrorCode::NonGroundTerm, "ordering is defined on ground terms only");
  if (s == t) return false;
  // subterm case: some argument of s is >= t
  for (const Term& a : s.args())
    if (a == t || lpo_greater(a, t)) return true;
  int hc = compare_heads(s, t);
  if (hc > 0) {
    // s's head dominates: s > t iff s > every argument of t
    for (const Term& b : t.args())
      if (!lpo_greater(s, b)) return false;
    return true;
  }
  if (hc == 0) {
    // equal heads: lexicographic on arguments, and s > every argument of t
    const auto& sa = s.args();
    const auto& ta = t.args();
    size_t n = std::min(sa.size(), ta.size());
    for (size_t i = 0; i < n; ++i) {
      if (sa[i] == ta[i]) continue;
      if (!lpo_greater(sa[i], ta[i])) return false;
      for (size_t j = 0; j < ta.size(); ++j)
        if (!lpo_greater(s, ta[j])) return false;
      return true;
    }
    return sa.size() > ta.size();
  }
  return false;
}

std::optional<Substitution> match(const Term& pattern, const Term& subject) {
  std::map<std::string, Term> bind;
  struct Walk {
    std::map<std::string, Term>& bind;
    bool go(const Term& p, const Term& s) {
      if (p.is_variable()) {
        auto it = bind.find(p.name());
        if (it == bind.end()) {
          bind.emplace(p.name(), s);
          return true;
        }
        return it->second == s;
      }
      if (p.kind() != s.kind() || p.name() != s.name() || p.is_nonce() != s.is_nonce() ||
          p.arity() != s.arity())
        return false;
      for (size_t i = 0; i < p.arity(); ++i)
        if (!go(p.args()[i], s.args()[i])) return false;
      return true;
    }
  } w{bind};
  if (!w.go(pattern, subject)) return std::nullopt;
  Substitution out;
  for (auto& [v, img] : bind) out = out.composed(Substitution::single(v, img));
  return out;
}

Term RewriteSystem::normalize(const Term& t) const {
  if (!t.ground()) throw Error(ErrorCode::NonGroundTerm, "cannot normalize non-ground term " + t.str());
  if (cache_) {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->normal.find(t);
    if (it != cache_->normal.end()) return it->second;
  }

  int steps = 0;
  // Innermost-leftmost: arguments first, then rules at the root to fixpoint.
  struct Rec {
    const RewriteSystem& rs;
    int& steps;
    std::unordered_map<Term, Term, TermHash> memo;

    Term norm(Term t) {
      auto it = memo.find(t);
      if (it != memo.end()) return it->second;
      Term orig = t;
      if (t.is_application()) {
        std::vector<Term> args;
        args.reserve(t.arity());
        bool changed = false;
        for (const Term& a : t.args()) {
          Term r = norm(a);
          changed = changed || r != a;
          args.push_back(r);
        }
        if (changed) t = Term::app(t.name(), std::move(args));
      }
      while (true) {
        bool fired = false;
        for (const RewriteRule& rule : rs.rules_) {
          if (auto sigma = match(rule.lhs, t)) {
            if (++steps > rs.step_cap)
              throw Error(ErrorCode::RewriteDepthExceeded,
                          "rewrite step cap exceeded; rule set looks non-terminating");
            t = norm(sigma->apply(rule.rhs));
            fired = true;
            break;
          }
        }
        if (!fired) break;
      }
      memo.emplace(orig, t);
      return t;
    }
  } rec{*this, steps, {}};

  Term result = rec.norm(t);
  if (cache_) {
    std::lock_guard<std::mutex> lock(cache_->mu);
    cache_->normal.emplace(t, result);
  }
  return result;
}

bool RewriteSystem::is_subterm_convergent() const {
  for (const RewriteRule& r : rules_)
    if (!r.rhs.ground() && !is_subterm(r.rhs, r.lhs)) return false;
  return true;
}

void RewriteSystem::validate_orientation() const {
  // Sample ground instantiations; a full check over all ground instances is
  // not decidable.
  std::vector<Term> samples = {cmin(), Term::constant("a0"), Term::nonce("s0")};
  if (!rules_.empty()) {
    samples.push_back(Term::app(rules_.front().lhs.name(),
                                std::vector<Term>(rules_.front().lhs.arity(), cmin())));
  }
  for (const RewriteRule& r : rules_) {
    auto lv = variables_of(r.lhs);
    for (const std::string& v : variables_of(r.rhs))
      if (!lv.count(v))
        throw Error(ErrorCode::InvalidTheory,
                    "rule " + r.lhs.str() + " -> " + r.rhs.str() + " introduces variable ?" + v);
    for (const Term& s : samples) {
      std::map<std::string, Term> b;
      for (const std::string& v : lv) b[v] = s;
      Substitution sigma = Substitution::make(std::move(b));
      Term l = sigma.apply(r.lhs);
      Term rr = sigma.apply(r.rhs);
      if (l == rr || !lpo_greater(l, rr))
        throw Error(ErrorCode::InvalidTheory,
                    "rule " + r.lhs.str() + " -> " + r.rhs.str() + " is not decreasing on instance " +
                        l.str() + " -> " + rr.str());
    }
  }
}

DeductionSystem dolev_yao() {
  Signature sig;
  sig.declare({"pair", 2, true});
  sig.declare({"fst", 1, true});
  sig.declare({"snd", 1, true});
  sig.declare({"penc", 2, true});
  sig.declare({"pdec", 2, true});
  sig.declare({"inv", 1, false});
  sig.declare({"pk", 1, true});
  sig.declare({"f", 1, true});

  Term x = Term::variable("x");
  Term y = Term::variable("y");
  std::vector<RewriteRule> rules = {
      {Term::app("pdec", {Term::app("penc", {x, y}), Term::app("inv", {y})}), x},
      {Term::app("fst", {Term::app("pair", {x, y})}), x},
      {Term::app("snd", {Term::app("pair", {x, y})}), y},
  };
  RewriteSystem rw(std::move(rules), {"pdec", "fst", "snd", "penc", "pair", "inv", "pk", "f"}, "cmin");
  rw.validate_orientation();
  return DeductionSystem(std::move(sig), std::move(rw));
}

}  // namespace sdeq
