#pragma once

// Test-only generators and brute-force oracles, independent of the solver's
// search: attacker enumeration by recipe, and static-equivalence checking by
// recipe-table comparison.

#include <functional>
#include <random>

#include "sdeq/equivalence.hpp"
#include "sdeq/solver.hpp"

namespace oracles {

using namespace sdeq;

// ---------------------------------------------------------------------------
// Random ground terms over the fixture theory.

inline Term random_ground(std::mt19937& rng, int depth,
                          const std::vector<std::string>& constants) {
  std::uniform_int_distribution<int> pick(0, 9);
  int r = pick(rng);
  if (depth <= 1 || r < 4) {
    std::uniform_int_distribution<size_t> c(0, constants.size() - 1);
    return Term::constant(constants[c(rng)]);
  }
  switch (r) {
    case 4:
    case 5: return Term::app("pair", {random_ground(rng, depth - 1, constants),
                                      random_ground(rng, depth - 1, constants)});
    case 6:
    case 7: return Term::app("penc", {random_ground(rng, depth - 1, constants),
                                      random_ground(rng, depth - 1, constants)});
    case 8: return Term::app("pk", {random_ground(rng, depth - 1, constants)});
    default: return Term::app("inv", {Term::app("pk", {random_ground(rng, depth - 2 > 0 ? depth - 2 : 1, constants)})});
  }
}

// Random honest derivation: memory states (some visible), up to two
// receptions, deductions over earlier states, and occasional tests.
inline Derivation random_hsd(std::mt19937& rng, const DeductionSystem& D, int max_states = 6,
                             int depth = 3) {
  std::uniform_int_distribution<int> nstates(2, max_states);
  std::uniform_int_distribution<int> coin(0, 1);
  std::vector<std::string> constants = {"a", "b", "k"};
  DerivationBuilder b("h");
  int n = nstates(rng);
  int receptions = 0;
  std::vector<int> states;
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> kindpick(0, 5);
    int kp = kindpick(rng);
    if (kp <= 2 || states.empty()) {
      states.push_back(b.memory(random_ground(rng, depth, constants), coin(rng) ? 2 : 1));
    } else if (kp == 3 && receptions < 2) {
      ++receptions;
      states.push_back(b.reception(1));
    } else {
      // random public application over earlier states
      static const std::vector<std::pair<std::string, int>> symbols = {
          {"pair", 2}, {"penc", 2}, {"f", 1}, {"pk", 1}, {"fst", 1}, {"snd", 1}};
      std::uniform_int_distribution<size_t> sp(0, symbols.size() - 1);
      auto [sym, arity] = symbols[sp(rng)];
      std::vector<int> args;
      std::uniform_int_distribution<size_t> ap(0, states.size() - 1);
      for (int k = 0; k < arity; ++k) args.push_back(states[ap(rng)]);
      states.push_back(b.deduction(sym, std::move(args), coin(rng) ? 2 : 1));
    }
  }
  Derivation d = b.chain();
  // a test between states of the honest run, sometimes satisfiable-by-design
  if (d.size() >= 2 && coin(rng)) {
    std::uniform_int_distribution<size_t> sp(0, static_cast<size_t>(d.size()) - 1);
    size_t i = sp(rng), j = sp(rng);
    if (i != j) d.tests.push_back({static_cast<int>(std::min(i, j)), static_cast<int>(std::max(i, j))});
  }
  require_valid(d, D, DerivationClass::Honest);
  return d;
}

// ---------------------------------------------------------------------------
// Brute-force enumeration of stutter-free solutions by attacker recipe.

struct Recipe {
  // leaf: observed output state (>= 0) or fresh value (-1 .. -2 for two
  // distinct nonces); node: public application
  int leaf = 0;
  std::string symbol;
  std::vector<Recipe> args;
  bool is_leaf() const { return symbol.empty(); }
};

inline int recipe_applications(const Recipe& r, std::set<std::string>* seen) {
  if (r.is_leaf()) return 0;
  int n = 1;
  for (const Recipe& a : r.args) n += recipe_applications(a, seen);
  return n;
}

// All recipes with at most `max_apps` application nodes over the given
// observed outputs and two fresh values.
inline std::vector<Recipe> enumerate_recipes(const std::vector<int>& outputs, int max_apps,
                                             const DeductionSystem& D) {
  std::vector<std::vector<Recipe>> by_apps(static_cast<size_t>(max_apps) + 1);
  for (int o : outputs) by_apps[0].push_back({o, "", {}});
  by_apps[0].push_back({-1, "", {}});
  by_apps[0].push_back({-2, "", {}});
  for (int k = 1; k <= max_apps; ++k) {
    for (const Symbol& f : D.signature().public_symbols()) {
      if (f.arity == 1) {
        for (const Recipe& a : by_apps[static_cast<size_t>(k - 1)])
          by_apps[static_cast<size_t>(k)].push_back({0, f.name, {a}});
      } else if (f.arity == 2) {
        for (int ka = 0; ka < k; ++ka) {
          int kb = k - 1 - ka;
          for (const Recipe& a : by_apps[static_cast<size_t>(ka)])
            for (const Recipe& b : by_apps[static_cast<size_t>(kb)])
              by_apps[static_cast<size_t>(k)].push_back({0, f.name, {a, b}});
        }
      }
    }
  }
  std::vector<Recipe> out;
  for (auto& bucket : by_apps)
    for (Recipe& r : bucket) out.push_back(std::move(r));
  return out;
}

// Builds an attacker derivation from per-input recipes, the way an attacker
// executes them: observe as soon as available, share repeated values.
struct BruteCandidate {
  Derivation asd;
  Connection phi;
  bool feasible = false;
};

inline BruteCandidate build_candidate(const Derivation& hsd, const DeductionSystem& D,
                                      const std::map<int, Recipe>& recipes,
                                      const std::map<int, Term>& output_values) {
  BruteCandidate out;
  // schedule: outputs used by a recipe must be observed before the send
  std::set<int> used;
  std::function<void(const Recipe&, std::set<int>&)> deps = [&](const Recipe& r, std::set<int>& ds) {
    if (r.is_leaf()) {
      if (r.leaf >= 0) ds.insert(r.leaf);
      return;
    }
    for (const Recipe& a : r.args) deps(a, ds);
  };
  std::vector<std::pair<int, int>> edges = hsd.order;
  std::map<int, std::set<int>> per_input;
  for (const auto& [i, r] : recipes) {
    deps(r, per_input[i]);
    for (int o : per_input[i]) edges.push_back({o, i});
    used.insert(per_input[i].begin(), per_input[i].end());
  }
  Derivation sched = hsd;
  sched.order = edges;
  std::vector<int> ext;
  try {
    ext = sched.topo_order();
  } catch (const Error&) {
    return out;
  }

  Derivation& asd = out.asd;
  Connection& phi = out.phi;
  std::map<int, int> reception_of;
  std::map<Term, int> by_value;
  std::vector<Term> values;
  int last_send = -1;
  auto append = [&](State st, const Term& v) {
    int idx = asd.size();
    asd.states.push_back(std::move(st));
    asd.vars.push_back("q" + std::to_string(idx));
    asd.outputs[idx] = 1;
    values.push_back(v);
    by_value.emplace(v, idx);
    return idx;
  };
  std::function<int(const Recipe&)> mat = [&](const Recipe& r) -> int {
    if (r.is_leaf()) {
      if (r.leaf >= 0) return reception_of.at(r.leaf);
      Term nonce = Term::nonce("q" + std::to_string(-r.leaf));
      auto it = by_value.find(nonce);
      if (it != by_value.end()) return it->second;
      return append({StateKind::Memory, nonce, "", {}, -1}, nonce);
    }
    std::vector<int> args;
    std::vector<Term> argv;
    for (const Recipe& a : r.args) {
      int s = mat(a);
      args.push_back(s);
      argv.push_back(values[static_cast<size_t>(s)]);
    }
    Term v = D.normalize(Term::app(r.symbol, std::move(argv)));
    if (auto it = by_value.find(v); it != by_value.end()) return it->second;
    return append({StateKind::Deduction, std::nullopt, r.symbol, std::move(args), -1}, v);
  };

  for (int h : ext) {
    if (used.count(h)) {
      int idx = append({StateKind::Reception, std::nullopt, "", {}, -1}, output_values.at(h));
      asd.inputs.insert(idx);
      reception_of[h] = idx;
      phi.links.push_back({{1, idx}, {0, h}});
    }
    if (recipes.count(h)) {
      int s = mat(recipes.at(h));
      if (s <= last_send || asd.states[s].kind == StateKind::Reception) {
        int ru = asd.size();
        asd.states.push_back({StateKind::Reuse, std::nullopt, "", {}, s});
        asd.vars.push_back(asd.vars[s]);
        asd.outputs[ru] = 1;
        values.push_back(values[static_cast<size_t>(s)]);
        s = ru;
      }
      asd.outputs[s] += 1;
      phi.links.push_back({{0, h}, {1, s}});
      last_send = s;
    }
  }
  for (int k = 0; k + 1 < asd.size(); ++k) asd.order.push_back({k, k + 1});
  out.feasible = true;
  return out;
}

// Every stutter-free solution of the honest derivation with at most
// `max_apps` distinct deduction applications, found by recipe enumeration
// and membership checking.
inline std::vector<Solution> brute_force_solutions(const Derivation& hsd, const DeductionSystem& D,
                                                   int max_apps) {
  std::vector<int> inputs;
  for (int i : hsd.topo_order())
    if (hsd.inputs.count(i)) inputs.push_back(i);
  std::vector<int> visible = hsd.visible_outputs();
  Reach reach(hsd);

  std::map<int, std::vector<int>> avail;
  for (int i : inputs) {
    for (int o : visible)
      if (!reach.precedes(i, o)) avail[i].push_back(o);
  }

  std::function<void(const Recipe&, std::set<int>&)> deps = [&](const Recipe& r,
                                                                std::set<int>& ds) {
    if (r.is_leaf()) {
      if (r.leaf >= 0) ds.insert(r.leaf);
      return;
    }
    for (const Recipe& a : r.args) deps(a, ds);
  };

  // Evaluate the honest run under the candidate recipes along a schedule
  // where observations precede the sends that use them, then build the
  // attacker derivation against the resulting output values.
  auto simulate = [&](const std::map<int, Recipe>& recipes) -> BruteCandidate {
    std::vector<std::pair<int, int>> edges = hsd.order;
    for (const auto& [i, r] : recipes) {
      std::set<int> ds;
      deps(r, ds);
      for (int o : ds) edges.push_back({o, i});
    }
    Derivation sched = hsd;
    sched.order = edges;
    std::vector<int> ext;
    try {
      ext = sched.topo_order();
    } catch (const Error&) {
      return {};
    }
    std::map<int, Term> val;
    std::function<Term(const Recipe&)> eval = [&](const Recipe& r) -> Term {
      if (r.is_leaf()) {
        if (r.leaf >= 0) return val.at(r.leaf);
        return Term::nonce("q" + std::to_string(-r.leaf));
      }
      std::vector<Term> args;
      for (const Recipe& a : r.args) args.push_back(eval(a));
      return D.normalize(Term::app(r.symbol, std::move(args)));
    };
    for (int h : ext) {
      const State& s = hsd.states[h];
      switch (s.kind) {
        case StateKind::Memory: val[h] = D.normalize(*s.value); break;
        case StateKind::Reuse: val[h] = val.at(s.target); break;
        case StateKind::Reception: val[h] = eval(recipes.at(h)); break;
        case StateKind::Deduction: {
          std::vector<Term> args;
          for (int a : s.args) args.push_back(val.at(a));
          val[h] = D.normalize(Term::app(s.symbol, std::move(args)));
          break;
        }
      }
    }
    std::map<int, Term> output_values;
    for (auto [o, m] : hsd.outputs) {
      (void)m;
      output_values[o] = val.at(o);
    }
    return build_candidate(hsd, D, recipes, output_values);
  };

  std::vector<Solution> found;
  std::function<void(size_t, std::map<int, Recipe>)> assign = [&](size_t k,
                                                                  std::map<int, Recipe> acc) {
    if (k == inputs.size()) {
      int apps = 0;
      for (auto& [i, r] : acc) {
        (void)i;
        apps += recipe_applications(r, nullptr);
      }
      if (apps > max_apps) return;
      BruteCandidate cand = simulate(acc);
      if (!cand.feasible) return;
      try {
        if (membership(hsd, cand.asd, cand.phi, D) == Membership::Yes)
          found.push_back({canonicalize_nonces(cand.asd, D), cand.phi});
      } catch (const Error&) {
      }
      return;
    }
    int input = inputs[k];
    for (const Recipe& r : enumerate_recipes(avail[input], max_apps, D)) {
      auto acc2 = acc;
      acc2[input] = r;
      assign(k + 1, std::move(acc2));
    }
  };
  assign(0, {});

  std::vector<Solution> unique_found;
  for (Solution& s : found) {
    bool dup = false;
    for (const Solution& u : unique_found)
      if (equal_modulo(s.asd, u.asd, {.nonce_bijection = true, .outputs_as_sets = true}) &&
          s.phi == u.phi)
        dup = true;
    if (!dup) unique_found.push_back(std::move(s));
  }
  return unique_found;
}

// ---------------------------------------------------------------------------
// Static-equivalence oracle: recipe tables up to a size bound.

inline std::vector<Term> enumerate_recipe_terms(size_t positions, int max_size,
                                                const DeductionSystem& D) {
  std::vector<std::vector<Term>> by_size(static_cast<size_t>(max_size) + 1);
  for (size_t p = 0; p < positions; ++p)
    by_size[1].push_back(Term::variable("p" + std::to_string(p)));
  by_size[1].push_back(Term::nonce("r1"));
  for (int s = 2; s <= max_size; ++s) {
    for (const Symbol& f : D.signature().public_symbols()) {
      if (f.arity == 1) {
        for (const Term& a : by_size[static_cast<size_t>(s - 1)])
          by_size[static_cast<size_t>(s)].push_back(Term::app(f.name, {a}));
      } else if (f.arity == 2) {
        for (int ka = 1; ka + 1 < s; ++ka)
          for (const Term& a : by_size[static_cast<size_t>(ka)])
            for (const Term& b : by_size[static_cast<size_t>(s - 1 - ka)])
              by_size[static_cast<size_t>(s)].push_back(Term::app(f.name, {a, b}));
      }
    }
  }
  std::vector<Term> out;
  for (auto& bucket : by_size)
    for (Term& t : bucket) out.push_back(std::move(t));
  return out;
}

/// True iff no pair of recipes up to the size bound distinguishes the two
/// frames: equality of recipe values agrees on both sides.
inline bool static_equivalent_oracle(const std::vector<Term>& frame1,
                                     const std::vector<Term>& frame2, const DeductionSystem& D,
                                     int max_size = 5) {
  if (frame1.size() != frame2.size()) return false;
  std::map<std::string, Term> m1, m2;
  for (size_t p = 0; p < frame1.size(); ++p) {
    m1["p" + std::to_string(p)] = frame1[p];
    m2["p" + std::to_string(p)] = frame2[p];
  }
  Substitution s1 = Substitution::make(std::move(m1));
  Substitution s2 = Substitution::make(std::move(m2));
  std::map<Term, Term> table;  // value under frame1 -> value under frame2
  std::map<Term, Term> rev;
  for (const Term& r : enumerate_recipe_terms(frame1.size(), max_size, D)) {
    Term v1 = D.normalize(s1.apply(r));
    Term v2 = D.normalize(s2.apply(r));
    auto [it, fresh] = table.emplace(v1, v2);
    if (!fresh && it->second != v2) return false;
    auto [jt, fresh2] = rev.emplace(v2, v1);
    if (!fresh2 && jt->second != v1) return false;
  }
  return true;
}

}  // namespace oracles
