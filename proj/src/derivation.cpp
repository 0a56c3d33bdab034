#include "sdeq/derivation.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <sstream>

namespace sdeq {

std::string to_string(StateKind k) {
  switch (k) {
    case StateKind::Memory: return "memory";
    case StateKind::Reception: return "reception";
    case StateKind::Deduction: return "deduction";
    case StateKind::Reuse: return "reuse";
  }
  return "?";
}

std::vector<Term> Derivation::knowledge() const {
  std::set<Term> k;
  for (const State& s : states)
    if (s.kind == StateKind::Memory && s.value) k.insert(*s.value);
  return {k.begin(), k.end()};
}

std::vector<int> Derivation::topo_order() const {
  int n = size();
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  for (auto [i, j] : order) {
    succ[i].push_back(j);
    ++indeg[j];
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<int> out;
  out.reserve(n);
  while (!ready.empty()) {
    int i = ready.top();
    ready.pop();
    out.push_back(i);
    for (int j : succ[i])
      if (--indeg[j] == 0) ready.push(j);
  }
  if (static_cast<int>(out.size()) != n)
    throw Error(ErrorCode::InvalidDerivation, "state order is cyclic");
  return out;
}

std::vector<int> Derivation::visible_outputs() const {
  std::vector<int> out;
  for (int i : topo_order()) {
    auto it = outputs.find(i);
    if (it != outputs.end() && it->second >= 2) out.push_back(i);
  }
  return out;
}

UnificationSystem Derivation::system() const {
  UnificationSystem s;
  for (int i = 0; i < size(); ++i) {
    const State& st = states[i];
    Term v = Term::variable(vars[i]);
    if (st.kind == StateKind::Memory && st.value) {
      s.push_back({v, *st.value});
    } else if (st.kind == StateKind::Deduction) {
      std::vector<Term> args;
      for (int a : st.args) args.push_back(Term::variable(vars[a]));
      s.push_back({v, Term::app(st.symbol, std::move(args))});
    }
  }
  for (auto [i, j] : tests) s.push_back({Term::variable(vars[i]), Term::variable(vars[j])});
  return s;
}

std::set<std::string> Derivation::variable_names() const {
  return {vars.begin(), vars.end()};
}

Reach::Reach(const Derivation& d) : n_(d.states.size()), m_(n_ * n_, false) {
  std::vector<std::vector<int>> succ(n_);
  for (auto [i, j] : d.order) succ[i].push_back(j);
  for (size_t s = 0; s < n_; ++s) {
    std::vector<int> stack{static_cast<int>(s)};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : succ[u]) {
        if (!m_[s * n_ + v]) {
          m_[s * n_ + v] = true;
          stack.push_back(v);
        }
      }
    }
  }
}

std::vector<Diagnostic> validate(const Derivation& d, const DeductionSystem& D,
                                 DerivationClass cls) {
  std::vector<Diagnostic> out;
  auto add = [&](const std::string& code, int state, const std::string& msg) {
    out.push_back({code, state, msg});
  };
  int n = d.size();
  if (static_cast<int>(d.vars.size()) != n) {
    add("vars-size", -1, "variable map does not cover the index set");
    return out;
  }
  for (auto [i, j] : d.order)
    if (i < 0 || i >= n || j < 0 || j >= n || i == j) {
      add("order-range", -1, "order edge out of range");
      return out;
    }
  bool cyclic = false;
  try {
    d.topo_order();
  } catch (const Error&) {
    cyclic = true;
    add("order-cyclic", -1, "state order is cyclic");
  }
  std::optional<Reach> reach;
  if (!cyclic) reach.emplace(d);

  for (int i = 0; i < n; ++i) {
    const State& s = d.states[i];
    bool is_input = d.inputs.count(i) != 0;
    switch (s.kind) {
      case StateKind::Memory:
        if (!s.value)
          add("memory-missing-term", i, "memory state carries no term");
        else if (!s.value->ground())
          add("memory-not-ground", i, "memory term " + s.value->str() + " is not ground");
        if (is_input) add("input-kind-conflict", i, "memory state listed as an input");
        break;
      case StateKind::Deduction: {
        const Symbol* sym = D.signature().find(s.symbol);
        if (!sym)
          add("unknown-symbol", i, "deduction uses undeclared symbol " + s.symbol);
        else {
          if (!sym->is_public) add("symbol-not-public", i, "deduction uses private symbol " + s.symbol);
          if (sym->arity != s.args.size())
            add("arity-mismatch", i, "deduction arity does not match symbol " + s.symbol);
        }
        for (int a : s.args) {
          if (a < 0 || a >= n)
            add("deduction-arg-range", i, "deduction argument out of range");
          else if (reach && !reach->precedes(a, i))
            add("deduction-arg-order", i,
                "deduction argument " + std::to_string(a) + " does not strictly precede state " +
                    std::to_string(i));
        }
        if (is_input) add("input-kind-conflict", i, "deduction state listed as an input");
        break;
      }
      case StateKind::Reuse:
        if (s.target < 0 || s.target >= n)
          add("reuse-target-range", i, "re-use target out of range");
        else {
          if (reach && !reach->precedes(s.target, i))
            add("reuse-target-order", i, "re-use target does not strictly precede the state");
          if (d.vars[s.target] != d.vars[i])
            add("reuse-variable-mismatch", i, "re-use state does not share its target's variable");
        }
        if (is_input) add("input-kind-conflict", i, "re-use state listed as an input");
        break;
      case StateKind::Reception:
        if (!is_input) add("reception-not-input", i, "reception state missing from the input set");
        break;
    }
  }
  for (int i : d.inputs)
    if (i < 0 || i >= n)
      add("input-range", -1, "input index out of range");
  for (auto [i, m] : d.outputs)
    if (i < 0 || i >= n || m < 1) add("output-range", i, "output entry out of range");
  for (auto [i, j] : d.tests)
    if (i < 0 || i >= n || j < 0 || j >= n) add("test-index-range", -1, "test endpoint out of range");

  // V injective on non-re-use states; re-use states share their target's name.
  std::map<std::string, int> first;
  for (int i = 0; i < n; ++i) {
    if (d.states[i].kind == StateKind::Reuse) continue;
    auto [it, inserted] = first.emplace(d.vars[i], i);
    if (!inserted)
      add("variable-not-injective", i,
          "variable ?" + d.vars[i] + " already names state " + std::to_string(it->second));
  }

  if (cls == DerivationClass::Honest) {
    for (int i = 0; i < n; ++i) {
      const State& s = d.states[i];
      if (s.kind == StateKind::Memory && s.value && s.value->has_nonce())
        add("honest-contains-nonce", i, "fresh-value constant in honest knowledge");
    }
  }
  if (cls == DerivationClass::Attacker && !cyclic) {
    for (int i = 0; i < n && reach; ++i)
      for (int j = i + 1; j < n; ++j)
        if (!reach->precedes(i, j) && !reach->precedes(j, i)) {
          add("asd-order-not-total", i,
              "states " + std::to_string(i) + " and " + std::to_string(j) + " are incomparable");
          i = n;
          break;
        }
    for (int i = 0; i < n; ++i)
      if (!d.outputs.count(i)) {
        add("asd-output-missing", i, "attacker state is not an output");
        break;
      }
    for (int i = 0; i < n; ++i) {
      const State& s = d.states[i];
      if (s.kind == StateKind::Memory && s.value && !s.value->is_nonce()) {
        add("asd-knowledge-not-nonce", i, "attacker knowledge outside the fresh-value namespace");
        break;
      }
    }
  }
  return out;
}

void require_valid(const Derivation& d, const DeductionSystem& D, DerivationClass cls) {
  auto diags = validate(d, D, cls);
  if (!diags.empty()) {
    std::ostringstream os;
    os << "invalid derivation:";
    for (const auto& g : diags) os << " [" << g.code << "] " << g.message << ";";
    throw Error(ErrorCode::InvalidDerivation, os.str());
  }
}

ConnectResult connect(const Derivation& c1, const Derivation& c2, const Connection& phi,
                      const DeductionSystem& D) {
  (void)D;
  auto side = [&](int s) -> const Derivation& { return s == 0 ? c1 : c2; };

  std::map<std::pair<int, int>, int> consumed;  // (side,index) -> output occurrences used
  std::set<std::pair<int, int>> connected_inputs;
  for (const ConnLink& l : phi.links) {
    if (l.input.side == l.output.side)
      throw Error(ErrorCode::InvalidConnection, "link connects a derivation to itself");
    if (l.input.side < 0 || l.input.side > 1 || l.output.side < 0 || l.output.side > 1)
      throw Error(ErrorCode::InvalidConnection, "link side out of range");
    const Derivation& din = side(l.input.side);
    const Derivation& dout = side(l.output.side);
    if (l.input.index < 0 || l.input.index >= din.size() || !din.inputs.count(l.input.index))
      throw Error(ErrorCode::InvalidConnection,
                  "link source is not an input state of its derivation");
    auto it = dout.outputs.find(l.output.index);
    if (l.output.index < 0 || l.output.index >= dout.size() || it == dout.outputs.end())
      throw Error(ErrorCode::InvalidConnection, "link target is not an output state");
    if (!connected_inputs.insert({l.input.side, l.input.index}).second)
      throw Error(ErrorCode::InvalidConnection, "input state connected twice");
    int& used = consumed[{l.output.side, l.output.index}];
    if (++used > it->second)
      throw Error(ErrorCode::InvalidConnection, "output multiplicity exhausted");
  }

  // Rename the second derivation apart when variable names collide.
  std::vector<std::string> vars2 = c2.vars;
  {
    std::set<std::string> used = c1.variable_names();
    auto names2 = c2.variable_names();
    used.insert(names2.begin(), names2.end());
    NameSource names(used);
    std::map<std::string, std::string> ren;
    for (const std::string& v : c2.vars) {
      if (c1.variable_names().count(v) && !ren.count(v)) ren[v] = names.fresh("v");
    }
    for (std::string& v : vars2)
      if (auto it = ren.find(v); it != ren.end()) v = it->second;
  }

  // New index space: survivors of side 0 then survivors of side 1.
  std::vector<int> map1(c1.size(), -1), map2(c2.size(), -1);
  Derivation out;
  auto survive = [&](int s, int i) {
    return !connected_inputs.count({s, i});
  };
  for (int i = 0; i < c1.size(); ++i)
    if (survive(0, i)) {
      map1[i] = out.size();
      out.states.push_back(c1.states[i]);
      out.vars.push_back(c1.vars[i]);
    }
  for (int i = 0; i < c2.size(); ++i)
    if (survive(1, i)) {
      map2[i] = out.size();
      out.states.push_back(c2.states[i]);
      out.vars.push_back(vars2[i]);
    }
  // Connected inputs map to the state they are identified with.
  for (const ConnLink& l : phi.links) {
    auto& m = l.input.side == 0 ? map1 : map2;
    const auto& mo = l.output.side == 0 ? map1 : map2;
    m[l.input.index] = mo[l.output.index];
  }

  auto remap = [&](int s, int i) { return s == 0 ? map1[i] : map2[i]; };

  // Payload references, order edges and tests follow the identification.
  for (int s = 0; s < 2; ++s) {
    const Derivation& d = side(s);
    const std::vector<std::string>& dv = s == 0 ? c1.vars : vars2;
    for (int i = 0; i < d.size(); ++i) {
      if (!survive(s, i)) continue;
      State& st = out.states[remap(s, i)];
      for (int& a : st.args) a = remap(s, a);
      if (st.kind == StateKind::Reuse) {
        st.target = remap(s, st.target);
        // A re-use of a connected input now shares the identified variable.
        out.vars[remap(s, i)] = out.vars[st.target];
      }
      (void)dv;
    }
    for (auto [i, j] : d.order) {
      int a = remap(s, i), b = remap(s, j);
      if (a != b) out.order.push_back({a, b});
    }
    for (auto [i, j] : d.tests) out.tests.push_back({remap(s, i), remap(s, j)});
    for (int i : d.inputs)
      if (survive(s, i)) out.inputs.insert(remap(s, i));
    for (auto [i, m] : d.outputs) {
      int mult = m - (consumed.count({s, i}) ? consumed[{s, i}] : 0);
      if (mult > 0) out.outputs[remap(s, i)] += mult;
    }
  }
  std::sort(out.order.begin(), out.order.end());
  out.order.erase(std::unique(out.order.begin(), out.order.end()), out.order.end());
  for (auto& [i, j] : out.tests)
    if (i > j) std::swap(i, j);
  std::sort(out.tests.begin(), out.tests.end());
  out.tests.erase(std::unique(out.tests.begin(), out.tests.end()), out.tests.end());

  try {
    out.topo_order();
  } catch (const Error&) {
    throw Error(ErrorCode::InvalidConnection,
                "connection function is not monotone: the merged order is cyclic");
  }
  return {std::move(out), std::move(map1), std::move(map2)};
}

TraceResult trace(const Derivation& d, const DeductionSystem& D,
                  const std::optional<std::vector<int>>& extension) {
  if (!d.closed())
    throw Error(ErrorCode::NotClosed, "trace is defined for closed derivations only");
  std::vector<int> ext = extension ? *extension : d.topo_order();
  if (extension) {
    if (static_cast<int>(ext.size()) != d.size())
      throw Error(ErrorCode::PreconditionViolation, "linear extension has wrong length");
    std::vector<int> pos(d.size(), -1);
    for (size_t k = 0; k < ext.size(); ++k) {
      if (ext[k] < 0 || ext[k] >= d.size() || pos[ext[k]] != -1)
        throw Error(ErrorCode::PreconditionViolation, "linear extension is not a permutation");
      pos[ext[k]] = static_cast<int>(k);
    }
    for (auto [i, j] : d.order)
      if (pos[i] >= pos[j])
        throw Error(ErrorCode::PreconditionViolation, "permutation violates the state order");
  }

  std::vector<std::optional<Term>> val(d.size());
  for (int i : ext) {
    const State& s = d.states[i];
    switch (s.kind) {
      case StateKind::Memory:
        val[i] = D.normalize(*s.value);
        break;
      case StateKind::Reuse:
        val[i] = val[s.target];
        break;
      case StateKind::Deduction: {
        std::vector<Term> args;
        for (int a : s.args) args.push_back(*val[a]);
        val[i] = D.normalize(Term::app(s.symbol, std::move(args)));
        break;
      }
      case StateKind::Reception:
        throw Error(ErrorCode::NotClosed, "reception state in a closed derivation");
    }
  }

  TraceResult out;
  out.satisfiable = true;
  for (int i = 0; i < d.size(); ++i) out.values[d.vars[i]] = *val[i];
  for (auto [i, j] : d.tests) {
    if (*val[i] != *val[j]) {
      out.satisfiable = false;
      out.failing_test = {i, j};
      break;
    }
  }
  return out;
}

Derivation open_on(const Derivation& d, const std::set<Term>& constants, const DeductionSystem& D) {
  (void)D;
  auto knowledge = d.knowledge();
  std::set<Term> know(knowledge.begin(), knowledge.end());
  for (const Term& c : constants) {
    if (!c.is_nonce())
      throw Error(ErrorCode::PreconditionViolation,
                  "can only open on fresh-value constants, got " + c.str());
    if (!know.count(c))
      throw Error(ErrorCode::PreconditionViolation, c.str() + " is not in the knowledge");
  }
  for (const Term& t : know) {
    if (constants.count(t)) continue;
    for (const Term& c : constants)
      if (is_subterm(c, t))
        throw Error(ErrorCode::PreconditionViolation,
                    c.str() + " occurs inside the remaining knowledge term " + t.str());
  }

  Derivation out = d;
  std::vector<int> topo = d.topo_order();
  for (const Term& c : constants) {
    int first = -1;
    for (int i : topo) {
      const State& s = out.states[i];
      if (s.kind == StateKind::Memory && s.value && *s.value == c) {
        if (first == -1)
          first = i;
        else
          throw Error(ErrorCode::PreconditionViolation,
                      "several memory states carry " + c.str());
      }
    }
    State& st = out.states[first];
    st.kind = StateKind::Reception;
    st.value.reset();
    out.inputs.insert(first);
  }
  return out;
}

Derivation canonicalize_nonces(const Derivation& d, const DeductionSystem& D) {
  (void)D;
  std::map<Term, Term> ren;
  std::function<void(const Term&)> scan = [&](const Term& t) {
    if (t.is_nonce()) {
      if (!ren.count(t)) ren.emplace(t, Term::nonce("n" + std::to_string(ren.size() + 1)));
      return;
    }
    for (const Term& a : t.args()) scan(a);
  };
  for (int i : d.topo_order()) {
    const State& s = d.states[i];
    if (s.kind == StateKind::Memory && s.value && s.value->has_nonce()) scan(*s.value);
  }
  Derivation out = d;
  for (State& s : out.states) {
    if (s.kind != StateKind::Memory || !s.value || !s.value->has_nonce()) continue;
    Term t = *s.value;
    for (const auto& [from, to] : ren) t = replace_const(t, from, to);
    s.value = t;
  }
  return out;
}

namespace {

// Structural match of two memory terms under an evolving nonce bijection.
bool match_terms(const Term& a, const Term& b, bool nonce_bij, std::map<Term, Term>& fwd,
                 std::map<Term, Term>& bwd) {
  if (a.is_nonce() && b.is_nonce() && nonce_bij) {
    auto f = fwd.find(a);
    auto g = bwd.find(b);
    if (f == fwd.end() && g == bwd.end()) {
      fwd.emplace(a, b);
      bwd.emplace(b, a);
      return true;
    }
    return f != fwd.end() && g != bwd.end() && f->second == b && g->second == a;
  }
  if (a.kind() != b.kind() || a.name() != b.name() || a.is_nonce() != b.is_nonce() ||
      a.arity() != b.arity())
    return false;
  for (size_t i = 0; i < a.arity(); ++i)
    if (!match_terms(a.args()[i], b.args()[i], nonce_bij, fwd, bwd)) return false;
  return true;
}

struct IsoSearch {
  const Derivation& a;
  const Derivation& b;
  const EqualOpts& opts;
  Reach ra, rb;
  std::vector<int> seq;          // a's states in topo order
  std::vector<int> assign;       // a-index -> b-index
  std::vector<bool> used;        // b-index taken
  std::map<Term, Term> fwd, bwd;

  IsoSearch(const Derivation& a, const Derivation& b, const EqualOpts& o)
      : a(a), b(b), opts(o), ra(a), rb(b), seq(a.topo_order()), assign(a.size(), -1),
        used(b.size(), false) {}

  bool compatible(int i, int j) {
    const State& sa = a.states[i];
    const State& sb = b.states[j];
    if (sa.kind != sb.kind) return false;
    if (a.inputs.count(i) != b.inputs.count(j)) return false;
    auto oa = a.outputs.find(i);
    auto ob = b.outputs.find(j);
    bool ha = oa != a.outputs.end(), hb = ob != b.outputs.end();
    if (ha != hb) return false;
    if (ha && !opts.outputs_as_sets && oa->second != ob->second) return false;
    switch (sa.kind) {
      case StateKind::Memory: {
        auto f = fwd;
        auto g = bwd;
        if (!match_terms(*sa.value, *sb.value, opts.nonce_bijection, f, g)) return false;
        fwd = std::move(f);
        bwd = std::move(g);
        return true;
      }
      case StateKind::Deduction:
        if (sa.symbol != sb.symbol || sa.args.size() != sb.args.size()) return false;
        for (size_t k = 0; k < sa.args.size(); ++k)
          if (assign[sa.args[k]] != sb.args[k]) return false;
        return true;
      case StateKind::Reuse:
        return assign[sa.target] == sb.target;
      case StateKind::Reception:
        return true;
    }
    return false;
  }

  bool order_consistent(int i, int j) {
    for (int k = 0; k < a.size(); ++k) {
      if (assign[k] == -1 || k == i) continue;
      if (opts.order_refinement) {
        // b may order what a leaves incomparable, never the converse.
        if (ra.precedes(k, i) && !rb.precedes(assign[k], j)) return false;
        if (ra.precedes(i, k) && !rb.precedes(j, assign[k])) return false;
      } else {
        if (ra.precedes(k, i) != rb.precedes(assign[k], j)) return false;
        if (ra.precedes(i, k) != rb.precedes(j, assign[k])) return false;
      }
    }
    return true;
  }

  bool tests_match() {
    auto norm = [](std::pair<int, int> p) {
      return p.first <= p.second ? p : std::make_pair(p.second, p.first);
    };
    std::set<std::pair<int, int>> ta, tb;
    for (auto t : a.tests) ta.insert(norm({assign[t.first], assign[t.second]}));
    for (auto t : b.tests) tb.insert(norm(t));
    return ta == tb;
  }

  bool go(size_t k) {
    if (k == seq.size()) return tests_match();
    int i = seq[k];
    for (int j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      auto saved_fwd = fwd;
      auto saved_bwd = bwd;
      if (compatible(i, j) && order_consistent(i, j)) {
        assign[i] = j;
        used[j] = true;
        if (go(k + 1)) return true;
        assign[i] = -1;
        used[j] = false;
      }
      fwd = std::move(saved_fwd);
      bwd = std::move(saved_bwd);
    }
    return false;
  }
};

}  // namespace

bool equal_modulo(const Derivation& a, const Derivation& b, const EqualOpts& opts) {
  if (a.size() != b.size() || a.tests.size() != b.tests.size() ||
      a.inputs.size() != b.inputs.size() || a.outputs.size() != b.outputs.size())
    return false;
  IsoSearch s(a, b, opts);
  return s.go(0);
}

namespace {

// Deletable memory states: referenced by no deduction, re-use or test.
std::vector<int> removable_memory_states(const Derivation& d) {
  std::vector<bool> referenced(d.size(), false);
  for (const State& s : d.states) {
    for (int a : s.args) referenced[a] = true;
    if (s.kind == StateKind::Reuse && s.target >= 0) referenced[s.target] = true;
  }
  for (auto [i, j] : d.tests) referenced[i] = referenced[j] = true;
  std::vector<int> out;
  for (int i = 0; i < d.size(); ++i)
    if (d.states[i].kind == StateKind::Memory && !referenced[i]) out.push_back(i);
  return out;
}

Derivation erase_states(const Derivation& d, const std::set<int>& victims) {
  Derivation out;
  std::vector<int> map(d.size(), -1);
  Reach reach(d);
  for (int i = 0; i < d.size(); ++i) {
    if (victims.count(i)) continue;
    map[i] = out.size();
    out.states.push_back(d.states[i]);
    out.vars.push_back(d.vars[i]);
  }
  for (int i = 0; i < d.size(); ++i) {
    if (map[i] == -1) continue;
    State& s = out.states[map[i]];
    for (int& a : s.args) a = map[a];
    if (s.kind == StateKind::Reuse) s.target = map[s.target];
  }
  // Keep the induced reachability, not just the surviving edges.
  for (int i = 0; i < d.size(); ++i)
    for (int j = 0; j < d.size(); ++j)
      if (map[i] != -1 && map[j] != -1 && reach.precedes(i, j))
        out.order.push_back({map[i], map[j]});
  for (int i : d.inputs)
    if (map[i] != -1) out.inputs.insert(map[i]);
  for (auto [i, m] : d.outputs)
    if (map[i] != -1) out.outputs[map[i]] = m;
  for (auto [i, j] : d.tests)
    if (map[i] != -1 && map[j] != -1) out.tests.push_back({map[i], map[j]});
  return out;
}

// Embedding search for the first ordering clause: choose an image for every
// state of the opened derivation inside c2; reception states may land on any
// state (a connected relay of the auxiliary part), other kinds must match.
struct LeqSearch {
  const Derivation& c1;  // opened
  const Derivation& c2;
  const DeductionSystem& D;
  int budget;
  std::vector<int> seq1, seq2;
  std::vector<int> pos2;    // c2 index -> position in seq2
  std::vector<int> assign;  // c1 index -> c2 index
  std::vector<bool> taken;
  std::map<Term, Term> fwd, bwd;
  bool budget_hit = false;
  Reach r1, r2;

  LeqSearch(const Derivation& c1, const Derivation& c2, const DeductionSystem& D, int budget)
      : c1(c1), c2(c2), D(D), budget(budget), seq1(c1.topo_order()), seq2(c2.topo_order()),
        pos2(c2.size()), assign(c1.size(), -1), taken(c2.size(), false), r1(c1), r2(c2) {
    for (size_t k = 0; k < seq2.size(); ++k) pos2[seq2[k]] = static_cast<int>(k);
  }

  bool payload_ok(int i, int j) {
    const State& s1 = c1.states[i];
    const State& s2 = c2.states[j];
    if (s1.kind == StateKind::Reception) return true;  // survivor or relay partner
    if (s1.kind != s2.kind) return false;
    switch (s1.kind) {
      case StateKind::Memory: {
        auto f = fwd;
        auto g = bwd;
        if (!match_terms(*s1.value, *s2.value, true, f, g)) return false;
        fwd = std::move(f);
        bwd = std::move(g);
        return true;
      }
      case StateKind::Deduction:
        if (s1.symbol != s2.symbol || s1.args.size() != s2.args.size()) return false;
        for (size_t k = 0; k < s1.args.size(); ++k)
          if (assign[s1.args[k]] != s2.args[k]) return false;
        return true;
      case StateKind::Reuse:
        return assign[s1.target] == s2.target;
      default:
        return false;
    }
  }

  bool order_ok(int i, int j) {
    // c1's order must be preserved; c2 may order more.
    for (int k = 0; k < c1.size(); ++k) {
      if (assign[k] == -1 || k == i) continue;
      if (r1.precedes(k, i) && !r2.precedes(assign[k], j)) return false;
      if (r1.precedes(i, k) && !r2.precedes(j, assign[k])) return false;
    }
    return true;
  }

  bool go(size_t k) {
    if (k == seq1.size()) return finish();
    int i = seq1[k];
    for (int p = 0; p < static_cast<int>(seq2.size()); ++p) {
      int j = seq2[p];
      if (taken[j]) continue;
      auto saved_fwd = fwd;
      auto saved_bwd = bwd;
      if (payload_ok(i, j) && order_ok(i, j)) {
        assign[i] = j;
        taken[j] = true;
        if (go(k + 1)) return true;
        assign[i] = -1;
        taken[j] = false;
      }
      fwd = std::move(saved_fwd);
      bwd = std::move(saved_bwd);
    }
    return false;
  }

  bool finish();
};

// Rebuilds the auxiliary derivation and connection implied by an embedding,
// runs the connection, and compares with c2.
bool LeqSearch::finish() {
  // Survivors: non-connected states. A reception whose image is a reception
  // is treated as staying unconnected.
  std::set<int> image_surv;
  std::set<int> connected;  // c1 reception states riding on an auxiliary state
  for (int i = 0; i < c1.size(); ++i) {
    if (c1.states[i].kind == StateKind::Reception &&
        c2.states[assign[i]].kind != StateKind::Reception)
      connected.insert(i);
    else
      image_surv.insert(assign[i]);
  }

  // Auxiliary part of c2.
  std::vector<int> aux;  // c2 indices, topo order
  for (int j : seq2)
    if (!image_surv.count(j)) aux.push_back(j);

  int deductions = 0;
  for (int j : aux) {
    const State& s = c2.states[j];
    if (s.kind == StateKind::Deduction) ++deductions;
    if (s.kind == StateKind::Memory && !s.value->is_nonce()) return false;
  }
  if (deductions > budget) {
    budget_hit = true;
    return false;
  }
  for (auto [i, j] : c2.tests) {
    if (!image_surv.count(i) || !image_surv.count(j)) return false;
  }
  {
    auto norm = [](std::pair<int, int> p) {
      return p.first <= p.second ? p : std::make_pair(p.second, p.first);
    };
    std::set<std::pair<int, int>> t1, t2;
    for (auto t : c1.tests) t1.insert(norm({assign[t.first], assign[t.second]}));
    for (auto t : c2.tests) t2.insert(norm(t));
    if (t1 != t2) return false;
  }

  // Crossing references from the auxiliary part into the survivor image
  // become relay inputs of the auxiliary derivation.
  std::set<int> aux_set(aux.begin(), aux.end());
  std::set<int> crossing;  // survivor-image c2 indices referenced from aux
  for (int j : aux) {
    const State& s = c2.states[j];
    for (int t : s.args)
      if (!aux_set.count(t)) crossing.insert(t);
    if (s.kind == StateKind::Reuse && !aux_set.count(s.target)) crossing.insert(s.target);
  }

  // Build the auxiliary derivation: relay inputs interleaved with the aux
  // states at the order position of the crossed survivor state.
  struct Slot {
    int pos;      // seq2 position
    int c2index;  // aux state, or crossed survivor for a relay input
    bool relay;
  };
  std::vector<Slot> slots;
  for (int j : aux) slots.push_back({pos2[j], j, false});
  for (int s : crossing) slots.push_back({pos2[s], s, true});
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.relay > b.relay;
  });

  Derivation cc;
  std::map<int, int> aux_local;    // c2 aux index -> local
  std::map<int, int> relay_local;  // crossed survivor c2 index -> local relay
  NameSource names(c1.variable_names());
  std::map<int, int> reuse_relay_var;  // local relay idx -> first local user? (vars fixed below)
  for (const Slot& sl : slots) {
    int local = cc.size();
    if (sl.relay) {
      relay_local[sl.c2index] = local;
      cc.states.push_back({StateKind::Reception, std::nullopt, "", {}, -1});
      cc.vars.push_back(names.fresh("r"));
      cc.inputs.insert(local);
    } else {
      aux_local[sl.c2index] = local;
      cc.states.push_back(c2.states[sl.c2index]);
      cc.vars.push_back(names.fresh("u"));
      if (cc.states[local].kind == StateKind::Reception) cc.inputs.insert(local);
    }
    cc.outputs[local] = 1;
  }
  auto local_of = [&](int c2idx) {
    auto it = aux_local.find(c2idx);
    if (it != aux_local.end()) return it->second;
    return relay_local.at(c2idx);
  };
  for (auto& [c2idx, local] : aux_local) {
    State& s = cc.states[local];
    for (int& a : s.args) a = local_of(a);
    if (s.kind == StateKind::Reuse) {
      s.target = local_of(s.target);
      cc.vars[local] = cc.vars[s.target];
    }
  }
  for (int k = 0; k + 1 < cc.size(); ++k) cc.order.push_back({k, k + 1});

  // Connection: relays consume survivor outputs; connected c1 receptions
  // consume auxiliary outputs.
  std::vector<int> inv_assign(c2.size(), -1);
  for (int i = 0; i < c1.size(); ++i) inv_assign[assign[i]] = i;
  Connection phi;
  std::map<int, int> need_out;  // extra occurrences an aux state must offer
  for (int s : crossing) {
    int c1state = inv_assign[s];
    if (c1state == -1) return false;  // crossing into a state no survivor owns
    phi.links.push_back({{1, relay_local.at(s)}, {0, c1state}});
  }
  for (int i : connected) {
    int local = local_of(assign[i]);
    phi.links.push_back({{0, i}, {1, local}});
    ++need_out[local];
  }
  for (auto [local, extra] : need_out) cc.outputs[local] += extra;

  try {
    ConnectResult r = connect(c1, cc, phi, D);
    EqualOpts opts;
    opts.nonce_bijection = true;
    opts.outputs_as_sets = true;
    opts.order_refinement = true;
    return equal_modulo(r.derivation, c2, opts);
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

LeqVerdict asd_leq(const Derivation& c1, const Derivation& c2, const DeductionSystem& D,
                   const AsdBudget& budget) {
  EqualOpts opts;
  opts.nonce_bijection = true;
  opts.outputs_as_sets = true;
  if (equal_modulo(c1, c2, opts)) return LeqVerdict::Yes;

  // Second clause: c1 is c2 minus unused memory states.
  if (c2.size() > c1.size()) {
    std::vector<int> removable = removable_memory_states(c2);
    int diff = c2.size() - c1.size();
    if (diff <= static_cast<int>(removable.size())) {
      std::vector<bool> pick(removable.size(), false);
      std::fill(pick.end() - diff, pick.end(), true);
      // Subsets in deterministic order via std::next_permutation on the mask.
      std::sort(pick.begin(), pick.end());
      do {
        std::set<int> victims;
        for (size_t k = 0; k < removable.size(); ++k)
          if (pick[k]) victims.insert(removable[k]);
        if (static_cast<int>(victims.size()) == diff &&
            equal_modulo(c1, erase_states(c2, victims), opts))
          return LeqVerdict::Yes;
      } while (std::next_permutation(pick.begin(), pick.end()));
    }
  }

  // First clause: open c1 on a subset of its fresh values and extend by a
  // bounded deduction-only derivation.
  bool budget_hit = false;
  std::vector<Term> know = c1.knowledge();
  std::vector<Term> nonces;
  for (const Term& t : know)
    if (t.is_nonce()) nonces.push_back(t);
  size_t m = nonces.size();
  for (size_t mask = 0; mask < (size_t{1} << m); ++mask) {
    std::set<Term> cs;
    for (size_t k = 0; k < m; ++k)
      if (mask & (size_t{1} << k)) cs.insert(nonces[k]);
    Derivation opened;
    try {
      opened = open_on(c1, cs, D);
    } catch (const Error&) {
      continue;
    }
    if (opened.size() > c2.size()) continue;
    LeqSearch search(opened, c2, D, budget.extension_deductions);
    if (search.go(0)) return LeqVerdict::Yes;
    budget_hit = budget_hit || search.budget_hit;
  }
  return budget_hit ? LeqVerdict::Unknown : LeqVerdict::No;
}

Decomposition decompose(const Derivation& ci, const std::map<std::string, Term>& sigma,
                        const DeductionSystem& D) {
  (void)D;
  auto value_of = [&](int i) -> Term {
    auto it = sigma.find(ci.vars[i]);
    if (it == sigma.end())
      throw Error(ErrorCode::PreconditionViolation,
                  "trace does not cover variable ?" + ci.vars[i]);
    return it->second;
  };

  std::vector<int> topo = ci.topo_order();
  std::vector<int> pos(ci.size());
  for (size_t k = 0; k < topo.size(); ++k) pos[topo[k]] = static_cast<int>(k);

  // First deduction state per value, in order; later deductions of an
  // already-deduced value migrate into the testing part.
  std::map<Term, int> first_deducer;
  std::set<int> migrated;
  for (int i : topo) {
    if (ci.states[i].kind != StateKind::Deduction) continue;
    auto [it, inserted] = first_deducer.emplace(value_of(i), i);
    if (!inserted) migrated.insert(i);
  }

  Derivation ded;
  std::vector<int> dmap(ci.size(), -1);
  for (int i : topo) {
    if (migrated.count(i)) continue;
    dmap[i] = ded.size();
    ded.states.push_back(ci.states[i]);
    ded.vars.push_back(ci.vars[i]);
    int mult = 1;
    if (auto it = ci.outputs.find(i); it != ci.outputs.end()) mult = it->second;
    ded.outputs[dmap[i]] = mult;
  }
  Reach reach(ci);
  auto redirect = [&](int a) {
    // References to a migrated duplicate go to the first deducer instead.
    if (migrated.count(a)) return first_deducer.at(value_of(a));
    return a;
  };
  for (int i : topo) {
    if (dmap[i] == -1) continue;
    State& s = ded.states[dmap[i]];
    for (int& a : s.args) a = dmap[redirect(a)];
    if (s.kind == StateKind::Reuse) s.target = dmap[redirect(s.target)];
  }
  for (int i = 0; i < ci.size(); ++i)
    for (int j = 0; j < ci.size(); ++j)
      if (dmap[i] != -1 && dmap[j] != -1 && reach.precedes(i, j))
        ded.order.push_back({dmap[i], dmap[j]});
  for (int i : ci.inputs) ded.inputs.insert(dmap[i]);

  // Testing part: relays for every tested or migrated-referenced state,
  // plus the migrated deductions, plus the tests.
  std::set<int> needed;  // ci states the testing part observes
  for (auto [i, j] : ci.tests) {
    needed.insert(i);
    needed.insert(j);
  }
  for (int i : migrated)
    for (int a : ci.states[i].args) needed.insert(a);

  Derivation test;
  Connection psi;
  std::map<int, int> tmap;  // ci index -> testing-part local index
  NameSource names(ci.variable_names());
  std::vector<int> members;
  for (int i : topo)
    if (needed.count(i) && !migrated.count(i)) members.push_back(i);
  for (int i : topo)
    if (migrated.count(i)) members.push_back(i);
  std::sort(members.begin(), members.end(), [&](int a, int b) { return pos[a] < pos[b]; });
  for (int i : members) {
    int local = test.size();
    tmap[i] = local;
    if (migrated.count(i)) {
      State s = ci.states[i];
      for (int& a : s.args) a = tmap.at(redirect(a));
      test.states.push_back(s);
      test.vars.push_back(names.fresh("t"));
    } else {
      test.states.push_back({StateKind::Reception, std::nullopt, "", {}, -1});
      test.vars.push_back(names.fresh("t"));
      test.inputs.insert(local);
      psi.links.push_back({{1, local}, {0, dmap[i]}});
      ded.outputs[dmap[i]] += 1;  // occurrence consumed by the relay
    }
    test.outputs[local] = 1;
  }
  for (int k = 0; k + 1 < test.size(); ++k) test.order.push_back({k, k + 1});
  for (auto [i, j] : ci.tests) test.tests.push_back({tmap.at(i), tmap.at(j)});

  return {std::move(ded), std::move(test), std::move(psi)};
}

bool is_well_formed(const Derivation& ci, const std::map<std::string, Term>& sigma) {
  std::vector<int> topo = ci.topo_order();
  auto value_of = [&](int i) { return sigma.at(ci.vars[i]); };
  auto norm = [](std::pair<int, int> p) {
    return p.first <= p.second ? p : std::make_pair(p.second, p.first);
  };
  std::set<std::pair<int, int>> tests;
  for (auto t : ci.tests) tests.insert(norm(t));

  std::map<Term, int> first_deducer;
  for (size_t k = 0; k < topo.size(); ++k) {
    int i = topo[k];
    if (ci.states[i].kind != StateKind::Deduction) continue;
    Term v = value_of(i);
    auto it = first_deducer.find(v);
    if (it == first_deducer.end()) {
      // An earlier state of any kind with this value is fine; only
      // re-derivation is constrained.
      first_deducer.emplace(v, i);
      continue;
    }
    // A later deduction of the same value must be tied to a prior state of
    // that value by a test.
    bool tied = false;
    for (size_t k2 = 0; k2 < k && !tied; ++k2)
      if (value_of(topo[k2]) == v && tests.count(norm({topo[k2], i}))) tied = true;
    if (!tied) return false;
  }
  return true;
}

std::string to_string(const Derivation& d) {
  std::ostringstream os;
  for (int i = 0; i < d.size(); ++i) {
    const State& s = d.states[i];
    if (i) os << ' ';
    os << i << ':';
    switch (s.kind) {
      case StateKind::Memory: os << "mem(" << *s.value << ')'; break;
      case StateKind::Reception: os << "recv"; break;
      case StateKind::Reuse: os << "reuse(" << s.target << ')'; break;
      case StateKind::Deduction: {
        os << s.symbol << '(';
        for (size_t k = 0; k < s.args.size(); ++k) os << (k ? "," : "") << s.args[k];
        os << ')';
        break;
      }
    }
    if (auto it = d.outputs.find(i); it != d.outputs.end() && it->second > 1)
      os << "^" << it->second;
  }
  if (!d.tests.empty()) {
    os << " tests";
    for (auto [i, j] : d.tests) os << ' ' << i << "=" << j;
  }
  Reach reach(d);
  os << " order";
  for (int i = 0; i < d.size(); ++i)
    for (int j = 0; j < d.size(); ++j)
      if (reach.precedes(i, j)) os << ' ' << i << '<' << j;
  return os.str();
}

std::string to_string(const Connection& phi) {
  std::ostringstream os;
  for (const ConnLink& l : phi.links)
    os << '(' << l.input.side << ':' << l.input.index << "<-" << l.output.side << ':'
       << l.output.index << ')';
  return os.str();
}

int DerivationBuilder::memory(const Term& t, int out_mult) {
  int i = d_.size();
  d_.states.push_back({StateKind::Memory, t, "", {}, -1});
  d_.vars.push_back(prefix_ + std::to_string(i));
  if (out_mult > 0) d_.outputs[i] = out_mult;
  return i;
}

int DerivationBuilder::reception(int out_mult) {
  int i = d_.size();
  d_.states.push_back({StateKind::Reception, std::nullopt, "", {}, -1});
  d_.vars.push_back(prefix_ + std::to_string(i));
  d_.inputs.insert(i);
  if (out_mult > 0) d_.outputs[i] = out_mult;
  return i;
}

int DerivationBuilder::deduction(const std::string& symbol, std::vector<int> args, int out_mult) {
  int i = d_.size();
  d_.states.push_back({StateKind::Deduction, std::nullopt, symbol, std::move(args), -1});
  d_.vars.push_back(prefix_ + std::to_string(i));
  if (out_mult > 0) d_.outputs[i] = out_mult;
  return i;
}

int DerivationBuilder::reuse(int target, int out_mult) {
  int i = d_.size();
  d_.states.push_back({StateKind::Reuse, std::nullopt, "", {}, target});
  d_.vars.push_back(d_.vars[target]);
  if (out_mult > 0) d_.outputs[i] = out_mult;
  return i;
}

void DerivationBuilder::test(int i, int j) { d_.tests.push_back({i, j}); }

void DerivationBuilder::set_output(int i, int mult) {
  if (mult <= 0)
    d_.outputs.erase(i);
  else
    d_.outputs[i] = mult;
}

Derivation DerivationBuilder::chain() const {
  Derivation out = d_;
  for (int i = 0; i + 1 < out.size(); ++i) out.order.push_back({i, i + 1});
  return out;
}

Derivation DerivationBuilder::with_order(std::vector<std::pair<int, int>> edges) const {
  Derivation out = d_;
  out.order = std::move(edges);
  return out;
}

}  // namespace sdeq
