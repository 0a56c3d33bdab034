#include "sdeq/unify.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace sdeq {

std::string to_string(const UnificationSystem& s) {
  std::ostringstream os;
  os << '{';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i].left << " =? " << s[i].right;
  }
  os << '}';
  return os.str();
}

std::string NameSource::fresh(const std::string& base) {
  int& k = counters_[base];
  while (true) {
    std::string cand = k == 0 ? base : base + std::to_string(k);
    ++k;
    if (used_.insert(cand).second) return cand;
  }
}

namespace {

std::set<std::string> system_vars(const UnificationSystem& s) {
  std::set<std::string> out;
  for (const Equation& e : s) {
    auto l = variables_of(e.left);
    auto r = variables_of(e.right);
    out.insert(l.begin(), l.end());
    out.insert(r.begin(), r.end());
  }
  return out;
}

int compare_subst(const Substitution& a, const Substitution& b) {
  const auto& ma = a.bindings();
  const auto& mb = b.bindings();
  if (ma.size() != mb.size()) return ma.size() < mb.size() ? -1 : 1;
  auto ia = ma.begin();
  auto ib = mb.begin();
  for (; ia != ma.end(); ++ia, ++ib) {
    if (int c = ia->first.compare(ib->first); c != 0) return c;
    if (int c = Term::compare(ia->second, ib->second); c != 0) return c;
  }
  return 0;
}

}  // namespace

std::optional<Substitution> unify_syntactic(const UnificationSystem& system) {
  std::deque<Equation> work(system.begin(), system.end());
  std::map<std::string, Term> solved;

  auto substitute_everywhere = [&](const std::string& var, const Term& img) {
    Substitution s = Substitution::single(var, img);
    for (Equation& e : work) {
      e.left = s.apply(e.left);
      e.right = s.apply(e.right);
    }
    for (auto& [v, t] : solved) t = s.apply(t);
    solved[var] = img;
  };

  while (!work.empty()) {
    Equation e = work.front();
    work.pop_front();
    if (e.left == e.right) continue;
    if (e.left.is_variable()) {
      if (variables_of(e.right).count(e.left.name())) return std::nullopt;  // occurs check
      substitute_everywhere(e.left.name(), e.right);
      continue;
    }
    if (e.right.is_variable()) {
      work.push_front({e.right, e.left});
      continue;
    }
    // clash unless same constructor
    if (e.left.kind() != e.right.kind() || e.left.name() != e.right.name() ||
        e.left.is_nonce() != e.right.is_nonce() || e.left.arity() != e.right.arity())
      return std::nullopt;
    for (size_t i = 0; i < e.left.arity(); ++i)
      work.push_back({e.left.args()[i], e.right.args()[i]});
  }
  Substitution out;
  out = Substitution::make(std::move(solved));
  return out;
}

namespace {

// One narrowing state: the system under the substitution accumulated so far.
struct NarrowState {
  UnificationSystem system;
  Substitution sigma;
  int depth = 0;
};

struct Narrower {
  const DeductionSystem& D;
  int depth_cap;
  std::set<std::string> protected_vars;  // variables of the input system
  NameSource names;
  std::vector<Substitution> found;
  bool complete = true;

  void emit(const NarrowState& st, const Substitution& mgu) {
    Substitution full = st.sigma.composed(mgu);
    found.push_back(full.restricted(protected_vars));
  }

  void run(NarrowState st) {
    // Any state may already be syntactically solvable.
    if (auto mgu = unify_syntactic(st.system)) emit(st, *mgu);
    if (st.depth >= depth_cap) {
      // Unexplored narrowing below this state.
      for (const Equation& e : st.system) {
        if (!non_variable_positions(e.left).empty() || !non_variable_positions(e.right).empty()) {
          complete = false;
          return;
        }
      }
      return;
    }
    for (size_t ei = 0; ei < st.system.size(); ++ei) {
      for (int side = 0; side < 2; ++side) {
        const Term& target = side == 0 ? st.system[ei].left : st.system[ei].right;
        for (const Position& pos : non_variable_positions(target)) {
          Term sub = subterm_at(target, pos);
          for (const RewriteRule& rule : D.rewrites().rules()) {
            // Rename the rule apart from everything in sight.
            std::map<std::string, Term> ren;
            for (const std::string& v : variables_of(rule.lhs)) ren[v] = Term::variable(names.fresh("_n"));
            Substitution renaming = Substitution::make(std::move(ren));
            Term lhs = renaming.apply(rule.lhs);
            Term rhs = renaming.apply(rule.rhs);
            auto mgu = unify_syntactic({{sub, lhs}});
            if (!mgu) continue;
            NarrowState next;
            next.depth = st.depth + 1;
            next.sigma = st.sigma.composed(*mgu);
            next.system = st.system;
            Term& slot = side == 0 ? next.system[ei].left : next.system[ei].right;
            slot = replace_at(slot, pos, rhs);
            for (Equation& e : next.system) {
              e.left = mgu->apply(e.left);
              e.right = mgu->apply(e.right);
            }
            run(std::move(next));
          }
        }
      }
    }
  }
};

}  // namespace

EUnifyResult e_unify(const UnificationSystem& system, const DeductionSystem& D, int depth_cap) {
  if (!D.rewrites().is_subterm_convergent())
    throw Error(ErrorCode::PreconditionViolation,
                "equational unification requires a subterm-convergent rewrite system");
  std::set<std::string> vars = system_vars(system);
  std::set<std::string> used = vars;
  Narrower n{D, depth_cap, vars, NameSource(std::move(used)), {}, true};
  n.run(NarrowState{system, Substitution{}, 0});
  EUnifyResult out;
  out.complete = n.complete;
  out.unifiers = minimize_unifiers(std::move(n.found), D, depth_cap);
  return out;
}

bool satisfies(const Substitution& sigma, const UnificationSystem& system, const DeductionSystem& D) {
  for (const Equation& e : system) {
    Term l = sigma.apply(e.left);
    Term r = sigma.apply(e.right);
    if (!l.ground() || !r.ground())
      throw Error(ErrorCode::NonGroundingSubstitution,
                  "substitution does not ground equation " + e.left.str() + " =? " + e.right.str());
    if (D.normalize(l) != D.normalize(r)) return false;
  }
  return true;
}

bool is_more_general(const Substitution& sigma, const Substitution& tau, const DeductionSystem& D,
                     int depth_cap) {
  std::set<std::string> domain;
  for (const auto& [v, t] : sigma.bindings()) domain.insert(v);
  for (const auto& [v, t] : tau.bindings()) domain.insert(v);

  // Freeze the free variables of tau's side as fresh constants; matching
  // modulo the theory then reduces to unification against ground terms.
  std::set<std::string> frozen;
  for (const std::string& v : domain) {
    auto img = tau.lookup(v);
    auto vs = img ? variables_of(*img) : std::set<std::string>{v};
    frozen.insert(vs.begin(), vs.end());
  }
  std::map<std::string, Term> freeze_map;
  for (const std::string& v : frozen) freeze_map[v] = Term::constant("__frz_" + v);
  Substitution freeze = Substitution::make(std::move(freeze_map));

  UnificationSystem matching;
  for (const std::string& v : domain) {
    Term lhs = sigma.apply(Term::variable(v));
    Term rhs = freeze.apply(tau.apply(Term::variable(v)));
    matching.push_back({lhs, rhs});
  }

  if (!D.rewrites().is_subterm_convergent()) return unify_syntactic(matching).has_value();
  std::set<std::string> vars = system_vars(matching);
  Narrower n{D, depth_cap, vars, NameSource(vars), {}, true};
  n.run(NarrowState{matching, Substitution{}, 0});
  return !n.found.empty();
}

std::vector<Substitution> minimize_unifiers(std::vector<Substitution> unifiers,
                                            const DeductionSystem& D, int depth_cap) {
  // Canonical order first so ties break deterministically.
  std::sort(unifiers.begin(), unifiers.end(),
            [](const Substitution& a, const Substitution& b) { return compare_subst(a, b) < 0; });
  unifiers.erase(std::unique(unifiers.begin(), unifiers.end()), unifiers.end());

  std::vector<Substitution> kept;
  for (const Substitution& cand : unifiers) {
    bool redundant = false;
    for (const Substitution& k : kept) {
      if (is_more_general(k, cand, D, depth_cap)) {
        redundant = true;
        break;
      }
    }
    if (redundant) continue;
    // A later, more general unifier evicts covered members.
    std::vector<Substitution> next;
    for (const Substitution& k : kept)
      if (!is_more_general(cand, k, D, depth_cap)) next.push_back(k);
    next.push_back(cand);
    kept = std::move(next);
  }
  std::sort(kept.begin(), kept.end(),
            [](const Substitution& a, const Substitution& b) { return compare_subst(a, b) < 0; });
  return kept;
}

}  // namespace sdeq
