#include "sdeq/solver.hpp"

#include <algorithm>
#include <sstream>

namespace sdeq {

Membership membership(const Derivation& hsd, const Derivation& asd, const Connection& phi,
                      const DeductionSystem& D) {
  require_valid(hsd, D, DerivationClass::Honest);
  require_valid(asd, D, DerivationClass::Attacker);
  ConnectResult r = connect(hsd, asd, phi, D);
  if (!r.derivation.closed()) return Membership::NotClosed;
  return trace(r.derivation, D).satisfiable ? Membership::Yes : Membership::No;
}

namespace {

// Construction plan for one attacker message, built as constraints get
// discharged: receive a visible output, mint a fresh value, or apply a
// public symbol to earlier plans.
struct RecipeNode {
  enum class Kind { Hole, Output, Nonce, Apply } kind = Kind::Hole;
  int output_state = -1;
  Term nonce;
  std::string symbol;
  std::vector<int> children;
};

struct Constraint {
  int input;    // honest reception state this message feeds
  Term target;  // what the message must unify with, under the current sigma
  int node;     // recipe slot filled on discharge
  /// Analysis payloads must be observed messages, never constructed ones;
  /// building a term only to take it apart would re-derive its pieces.
  bool unify_only = false;
};

struct Branch {
  std::vector<Constraint> todo;
  Substitution sigma;
  std::vector<RecipeNode> arena;
  std::map<int, int> roots;  // input state -> arena root
  int deductions = 0;
};

struct Solver {
  const Derivation& hsd;
  const DeductionSystem& D;
  const SolverConfig& cfg;

  std::vector<int> topo;
  Reach reach;
  std::vector<Term> val;  // symbolic value of every honest state
  std::vector<int> inputs_topo;
  std::vector<int> visible;
  std::map<int, std::vector<int>> avail;
  UnificationSystem test_system;
  int max_deductions;
  const std::map<int, Term>* forced;  // ground mode

  bool complete = true;
  long branches = 0;
  std::vector<Solution> found;

  Solver(const Derivation& h, const DeductionSystem& d, const SolverConfig& c,
         const std::map<int, Term>* forced_inputs)
      : hsd(h), D(d), cfg(c), topo(h.topo_order()), reach(h), forced(forced_inputs) {
    val.resize(hsd.size());
    for (int i : topo) {
      const State& s = hsd.states[i];
      switch (s.kind) {
        case StateKind::Memory: val[i] = D.normalize(*s.value); break;
        case StateKind::Reception: val[i] = Term::variable(hsd.vars[i]); break;
        case StateKind::Reuse: val[i] = val[s.target]; break;
        case StateKind::Deduction: {
          std::vector<Term> args;
          for (int a : s.args) args.push_back(val[a]);
          Term t = Term::app(s.symbol, std::move(args));
          val[i] = t.ground() ? D.normalize(t) : t;
          break;
        }
      }
    }
    for (int i : topo)
      if (hsd.inputs.count(i)) inputs_topo.push_back(i);
    visible = hsd.visible_outputs();
    for (int i : inputs_topo) {
      std::vector<int>& a = avail[i];
      for (int o : visible)
        if (o != i && !reach.precedes(i, o)) a.push_back(o);
    }
    for (auto [i, j] : hsd.tests) test_system.push_back({val[i], val[j]});
    max_deductions = cfg.max_deductions >= 0
                         ? cfg.max_deductions
                         : static_cast<int>(visible.size() + inputs_topo.size()) + 4;
  }

  void run() {
    EUnifyResult taus = e_unify(test_system, D, cfg.narrowing_depth);
    complete = complete && taus.complete;
    for (const Substitution& tau : taus.unifiers) {
      Branch b;
      b.sigma = tau;
      for (int i : inputs_topo) {
        Term goal = forced ? forced->at(i) : b.sigma.apply(Term::variable(hsd.vars[i]));
        int node = static_cast<int>(b.arena.size());
        b.arena.push_back({});
        b.roots[i] = node;
        b.todo.push_back({i, goal, node});
      }
      if (forced) {
        // The forced values must still satisfy the instantiated tests.
        std::map<std::string, Term> m;
        for (int i : inputs_topo) m[hsd.vars[i]] = forced->at(i);
        Substitution ground_inputs = Substitution::make(std::move(m));
        Substitution full = tau.composed(ground_inputs);
        bool ok = true;
        for (const Equation& e : test_system) {
          Term l = full.apply(e.left), r = full.apply(e.right);
          if (!l.ground() || !r.ground() || D.normalize(l) != D.normalize(r)) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        for (Constraint& c : b.todo) c.target = forced->at(c.input);
        b.sigma = full;
      }
      solve(std::move(b));
    }
  }

  void solve(Branch b) {
    if (++branches > cfg.branch_cap) {
      complete = false;
      return;
    }
    size_t idx = b.todo.size();
    for (size_t k = 0; k < b.todo.size(); ++k) {
      if (!b.todo[k].target.is_variable()) {
        idx = k;
        break;
      }
    }
    if (idx == b.todo.size()) {
      finalize(std::move(b));
      return;
    }
    Constraint c = b.todo[idx];

    auto child_with = [&](const Substitution& u) {
      Branch nb = b;
      nb.sigma = nb.sigma.composed(u);
      for (Constraint& t : nb.todo) t.target = u.apply(t.target);
      return nb;
    };

    // Unify with an available observed message.
    for (int o : avail.at(c.input)) {
      Term source = b.sigma.apply(val[o]);
      EUnifyResult r = e_unify({{c.target, source}}, D, cfg.narrowing_depth);
      complete = complete && r.complete;
      for (const Substitution& u : r.unifiers) {
        Branch nb = child_with(u);
        nb.arena[c.node] = {RecipeNode::Kind::Output, o, Term(), "", {}};
        nb.todo.erase(nb.todo.begin() + static_cast<long>(idx));
        solve(std::move(nb));
      }
    }
    if (c.unify_only) return;

    auto spawn = [&](const Substitution& u, const std::string& symbol,
                     const std::vector<Term>& arg_terms, const std::vector<bool>& arg_locked) {
      Branch nb = child_with(u);
      ++nb.deductions;
      RecipeNode apply;
      apply.kind = RecipeNode::Kind::Apply;
      apply.symbol = symbol;
      std::vector<Constraint> subs;
      for (size_t k = 0; k < arg_terms.size(); ++k) {
        int slot = static_cast<int>(nb.arena.size());
        nb.arena.push_back({});
        apply.children.push_back(slot);
        subs.push_back({c.input, u.apply(arg_terms[k]), slot, arg_locked[k]});
      }
      nb.arena[c.node] = std::move(apply);
      nb.todo.erase(nb.todo.begin() + static_cast<long>(idx));
      nb.todo.insert(nb.todo.begin() + static_cast<long>(idx), subs.begin(), subs.end());
      solve(std::move(nb));
    };

    if (b.deductions >= max_deductions) {
      complete = false;
      return;
    }

    // Build with a public constructor: plain decomposition of the target.
    if (c.target.is_application() && D.is_public(c.target.name())) {
      std::vector<bool> locked(c.target.args().size(), false);
      spawn(Substitution{}, c.target.name(), c.target.args(), locked);
    }

    // Take an observed message apart: one destructor application per rule,
    // with the analyzed argument restricted to observed messages.
    for (const RewriteRule& rule : D.rewrites().rules()) {
      if (!rule.lhs.is_application() || !D.is_public(rule.lhs.name())) continue;
      std::set<std::string> seen;
      {
        auto vs = variables_of(c.target);
        seen.insert(vs.begin(), vs.end());
        for (const Constraint& tc : b.todo) {
          auto ws = variables_of(tc.target);
          seen.insert(ws.begin(), ws.end());
        }
      }
      NameSource fresh(std::move(seen));
      std::map<std::string, Term> ren;
      for (const std::string& v : variables_of(rule.lhs)) ren[v] = Term::variable(fresh.fresh("Z"));
      Substitution renaming = Substitution::make(std::move(ren));
      Term lhs = renaming.apply(rule.lhs);
      Term rhs = renaming.apply(rule.rhs);
      EUnifyResult r = e_unify({{c.target, rhs}}, D, cfg.narrowing_depth);
      complete = complete && r.complete;
      for (const Substitution& u : r.unifiers) {
        std::vector<Term> args;
        std::vector<bool> locked;
        bool payload_marked = false;
        for (const Term& l : lhs.args()) {
          args.push_back(u.apply(l));
          bool lock = !payload_marked && !l.is_variable();
          payload_marked = payload_marked || lock;
          locked.push_back(lock);
        }
        spawn(u, lhs.name(), args, locked);
      }
    }
  }

  // All remaining targets are attacker-chosen variables: fill them with
  // distinct fresh values and build the derivation.
  void finalize(Branch b) {
    std::map<std::string, Term> fill;
    int next_nonce = 1;
    for (const Constraint& c : b.todo) {
      const std::string& v = c.target.name();
      auto [it, inserted] = fill.emplace(v, Term());
      if (inserted) it->second = Term::nonce("w" + std::to_string(next_nonce++));
      b.arena[c.node] = {RecipeNode::Kind::Nonce, -1, it->second, "", {}};
    }
    Substitution full = b.sigma.composed(Substitution::make(std::move(fill)));

    std::map<int, Term> message;  // input state -> ground message
    for (int i : inputs_topo) {
      Term m = full.apply(Term::variable(hsd.vars[i]));
      if (!m.ground()) return;  // an unconstrained variable escaped a recipe
      message[i] = D.normalize(m);
    }
    for (const Equation& e : test_system) {
      Term l = full.apply(e.left), r = full.apply(e.right);
      if (!l.ground() || !r.ground()) return;
      if (D.normalize(l) != D.normalize(r)) return;
    }

    // Observed messages each recipe depends on.
    std::map<int, std::set<int>> deps;
    for (int i : inputs_topo) {
      std::set<int>& ds = deps[i];
      std::vector<int> stack{b.roots[i]};
      while (!stack.empty()) {
        const RecipeNode& n = b.arena[static_cast<size_t>(stack.back())];
        stack.pop_back();
        if (n.kind == RecipeNode::Kind::Output) ds.insert(n.output_state);
        for (int ch : n.children) stack.push_back(ch);
      }
    }

    // Schedule: honest order extended by "observe before use". A cycle means
    // this combination of observations is not executable.
    std::vector<std::pair<int, int>> edges = hsd.order;
    for (auto& [i, ds] : deps)
      for (int o : ds) edges.push_back({o, i});
    Derivation sched = hsd;
    sched.order = edges;
    std::vector<int> ext;
    try {
      ext = sched.topo_order();
    } catch (const Error&) {
      return;
    }

    // Materialize the attacker chain along the schedule.
    Derivation asd;
    Connection phi;
    std::map<int, int> reception_of;   // honest output -> attacker state
    std::map<Term, int> state_of;      // ground value -> first attacker state
    std::map<std::string, int> nonce_state;
    NameSource names({});
    int last_send = -1;

    std::set<int> received;
    for (auto& [i, ds] : deps) received.insert(ds.begin(), ds.end());

    std::vector<Term> state_values;
    auto append = [&](State st, const Term& value) {
      int idx = asd.size();
      asd.states.push_back(std::move(st));
      asd.vars.push_back(names.fresh("s"));
      asd.outputs[idx] = 1;
      state_values.push_back(value);
      state_of.emplace(value, idx);  // keeps the first state of each value
      return idx;
    };

    std::function<int(int)> materialize = [&](int node) -> int {
      const RecipeNode& n = b.arena[static_cast<size_t>(node)];
      switch (n.kind) {
        case RecipeNode::Kind::Output:
          return reception_of.at(n.output_state);
        case RecipeNode::Kind::Nonce: {
          auto it = nonce_state.find(n.nonce.name());
          if (it != nonce_state.end()) return it->second;
          int idx = append({StateKind::Memory, n.nonce, "", {}, -1}, n.nonce);
          nonce_state.emplace(n.nonce.name(), idx);
          return idx;
        }
        case RecipeNode::Kind::Apply: {
          std::vector<int> args;
          std::vector<Term> arg_vals;
          for (int ch : n.children) {
            int s = materialize(ch);
            args.push_back(s);
            arg_vals.push_back(state_values[static_cast<size_t>(s)]);
          }
          Term value = D.normalize(Term::app(n.symbol, std::move(arg_vals)));
          if (auto it = state_of.find(value); it != state_of.end()) return it->second;
          return append({StateKind::Deduction, std::nullopt, n.symbol, std::move(args), -1}, value);
        }
        case RecipeNode::Kind::Hole:
          break;
      }
      throw Error(ErrorCode::PreconditionViolation, "unfilled recipe slot");
    };

    for (int h : ext) {
      if (received.count(h)) {
        Term v = D.normalize(full.apply(val[h]));
        int idx = append({StateKind::Reception, std::nullopt, "", {}, -1}, v);
        asd.inputs.insert(idx);
        reception_of[h] = idx;
        phi.links.push_back({{1, idx}, {0, h}});
      }
      if (message.count(h)) {
        int s = materialize(b.roots[h]);
        // A reception cannot itself feed an honest input: the connection
        // would identify the consumed output with a later input. Relays go
        // through a re-use state, which also keeps sends monotone.
        if (s <= last_send || asd.states[s].kind == StateKind::Reception) {
          int r = asd.size();
          asd.states.push_back({StateKind::Reuse, std::nullopt, "", {}, s});
          asd.vars.push_back(asd.vars[s]);
          asd.outputs[r] = 1;
          state_values.push_back(state_values[static_cast<size_t>(s)]);
          s = r;
        }
        asd.outputs[s] += 1;
        phi.links.push_back({{0, h}, {1, s}});
        last_send = s;
      }
    }
    for (int k = 0; k + 1 < asd.size(); ++k) asd.order.push_back({k, k + 1});

    Solution sol{std::move(asd), std::move(phi)};
    try {
      if (membership(hsd, sol.asd, sol.phi, D) != Membership::Yes) {
        complete = false;  // never emit an unchecked witness
        return;
      }
    } catch (const Error&) {
      complete = false;
      return;
    }
    found.push_back(std::move(sol));
  }

};

}  // namespace

SolutionSet solve_complete(const Derivation& hsd, const DeductionSystem& D,
                           const SolverConfig& cfg) {
  require_valid(hsd, D, DerivationClass::Honest);
  Solver solver(hsd, D, cfg, nullptr);
  solver.run();
  SolutionSet out;
  out.complete = solver.complete;
  out.solutions = std::move(solver.found);

  for (Solution& s : out.solutions) s.asd = canonicalize_nonces(s.asd, D);

  auto ded_count = [](const Derivation& d) {
    int n = 0;
    for (const State& s : d.states) n += s.kind == StateKind::Deduction ? 1 : 0;
    return n;
  };
  std::stable_sort(out.solutions.begin(), out.solutions.end(),
                   [&](const Solution& x, const Solution& y) {
                     int dx = ded_count(x.asd), dy = ded_count(y.asd);
                     if (dx != dy) return dx < dy;
                     if (x.asd.size() != y.asd.size()) return x.asd.size() < y.asd.size();
                     std::string kx = to_string(x.asd) + "|" + to_string(x.phi);
                     std::string ky = to_string(y.asd) + "|" + to_string(y.phi);
                     return kx < ky;
                   });
  out.solutions.erase(std::unique(out.solutions.begin(), out.solutions.end(),
                                  [](const Solution& x, const Solution& y) {
                                    return to_string(x.asd) == to_string(y.asd) &&
                                           to_string(x.phi) == to_string(y.phi);
                                  }),
                      out.solutions.end());

  // Minimal members only: drop any solution some kept one is below.
  std::vector<Solution> kept;
  for (Solution& cand : out.solutions) {
    bool covered = false;
    for (const Solution& k : kept)
      if (asd_leq(k.asd, cand.asd, D) == LeqVerdict::Yes) {
        covered = true;
        break;
      }
    if (!covered) kept.push_back(std::move(cand));
  }
  out.solutions = std::move(kept);
  return out;
}

std::map<int, Term> ground_input_values(const Derivation& hsd, const DeductionSystem& D,
                                        int narrowing_depth) {
  require_valid(hsd, D, DerivationClass::Honest);
  Reach reach(hsd);
  std::vector<Term> val(hsd.size());
  for (int i : hsd.topo_order()) {
    const State& s = hsd.states[i];
    switch (s.kind) {
      case StateKind::Memory: val[i] = D.normalize(*s.value); break;
      case StateKind::Reception: val[i] = Term::variable(hsd.vars[i]); break;
      case StateKind::Reuse: val[i] = val[s.target]; break;
      case StateKind::Deduction: {
        std::vector<Term> args;
        for (int a : s.args) args.push_back(val[a]);
        Term t = Term::app(s.symbol, std::move(args));
        val[i] = t.ground() ? D.normalize(t) : t;
        break;
      }
    }
  }
  UnificationSystem tsys;
  for (auto [i, j] : hsd.tests) tsys.push_back({val[i], val[j]});
  EUnifyResult r = e_unify(tsys, D, narrowing_depth);
  if (!r.complete)
    throw Error(ErrorCode::PreconditionViolation,
                "cannot certify forced input values within the narrowing bound");
  if (r.unifiers.empty())
    throw Error(ErrorCode::PreconditionViolation,
                "not a ground derivation: its system is unsatisfiable");
  std::map<int, Term> out;
  for (int i : hsd.inputs) {
    Term v = Term::variable(hsd.vars[i]);
    Term forced0 = r.unifiers.front().apply(v);
    if (!forced0.ground())
      throw Error(ErrorCode::PreconditionViolation,
                  "not a ground derivation: input " + std::to_string(i) + " is unconstrained");
    forced0 = D.normalize(forced0);
    for (const Substitution& u : r.unifiers) {
      Term w = u.apply(v);
      if (!w.ground() || D.normalize(w) != forced0)
        throw Error(ErrorCode::PreconditionViolation,
                    "not a ground derivation: input " + std::to_string(i) + " is not forced");
    }
    out[i] = forced0;
  }
  return out;
}

SatResult check_sat(const Derivation& hsd, const DeductionSystem& D, const SolverConfig& cfg,
                    bool ground) {
  SatResult res;
  if (ground) {
    std::map<int, Term> forced = ground_input_values(hsd, D, cfg.narrowing_depth);
    Solver solver(hsd, D, cfg, &forced);
    solver.run();
    SolutionSet set;
    set.complete = solver.complete;
    set.solutions = std::move(solver.found);
    if (!set.solutions.empty()) {
      res.status = SatResult::Status::Sat;
      res.witness = set.solutions.front();
      res.witness->asd = canonicalize_nonces(res.witness->asd, D);
    } else {
      res.status = set.complete ? SatResult::Status::Unsat : SatResult::Status::Unknown;
    }
    return res;
  }
  SolutionSet set = solve_complete(hsd, D, cfg);
  if (!set.solutions.empty()) {
    res.status = SatResult::Status::Sat;
    res.witness = set.solutions.front();
  } else {
    res.status = set.complete ? SatResult::Status::Unsat : SatResult::Status::Unknown;
  }
  return res;
}

}  // namespace sdeq
