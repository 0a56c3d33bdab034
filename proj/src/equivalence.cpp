#include "sdeq/equivalence.hpp"

#include <algorithm>
#include <sstream>

namespace sdeq {

std::string to_string(const TestProbe& p) {
  std::ostringstream os;
  auto slot = [](int s) { return s == kOpenSlot ? std::string("*") : std::to_string(s); };
  if (p.kind == TestProbe::Kind::Equality) {
    os << "eq(" << slot(p.slots[0]) << ',' << slot(p.slots[1]) << ')';
  } else {
    os << p.symbol << '(';
    for (size_t k = 0; k + 1 < p.slots.size(); ++k) os << (k ? "," : "") << slot(p.slots[k]);
    os << ")=" << slot(p.slots.back());
  }
  return os.str();
}

std::vector<TestProbe> enumerate_probes(const Derivation& hsd, const DeductionSystem& D) {
  int m = static_cast<int>(hsd.visible_outputs().size());
  std::vector<TestProbe> out;
  // equality between two observed positions
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) out.push_back({TestProbe::Kind::Equality, "", {i, j}});
  // equality between an observed position and an attacker value
  for (int i = 0; i < m; ++i) out.push_back({TestProbe::Kind::Equality, "", {i, kOpenSlot}});
  out.push_back({TestProbe::Kind::Equality, "", {kOpenSlot, kOpenSlot}});

  for (const Symbol& f : D.signature().public_symbols()) {
    int n = static_cast<int>(f.arity);
    // every (n+1)-tuple over {0..m-1, open}, open enumerated last
    std::vector<int> tuple(static_cast<size_t>(n) + 1, 0);
    std::vector<int> domain;
    for (int v = 0; v < m; ++v) domain.push_back(v);
    domain.push_back(kOpenSlot);
    std::function<void(size_t)> rec = [&](size_t k) {
      if (k == tuple.size()) {
        out.push_back({TestProbe::Kind::Deduction, f.name, tuple});
        return;
      }
      for (int v : domain) {
        tuple[k] = v;
        rec(k + 1);
      }
    };
    rec(0);
  }
  return out;
}

ProbeInstance instantiate_probe(const TestProbe& probe, const Derivation& host,
                                const DeductionSystem& D) {
  (void)D;
  std::vector<int> visible = host.visible_outputs();
  ProbeInstance out;
  Derivation& d = out.derivation;
  auto add_reception = [&](const std::string& var) {
    int i = d.size();
    d.states.push_back({StateKind::Reception, std::nullopt, "", {}, -1});
    d.vars.push_back(var);
    d.inputs.insert(i);
    d.outputs[i] = 1;
    return i;
  };
  if (probe.kind == TestProbe::Kind::Equality) {
    int a = add_reception("p0");
    int b = add_reception("p1");
    d.tests.push_back({a, b});
  } else {
    size_t n = probe.slots.size() - 1;
    std::vector<int> args;
    for (size_t k = 0; k < n; ++k) args.push_back(add_reception("p" + std::to_string(k)));
    int target = add_reception("pt");
    int ded = d.size();
    d.states.push_back({StateKind::Deduction, std::nullopt, probe.symbol, args, -1});
    d.vars.push_back("pd");
    d.outputs[ded] = 1;
    for (int a : args) d.order.push_back({a, ded});
    d.tests.push_back({ded, target});
  }
  // attachments; open slots stay reception states of the composite
  for (size_t k = 0; k < probe.slots.size(); ++k) {
    int s = probe.slots[k];
    if (s == kOpenSlot) continue;
    if (s < 0 || s >= static_cast<int>(visible.size()))
      throw Error(ErrorCode::InvalidConnection, "probe slot outside the visible outputs");
    out.attachment.links.push_back({{1, static_cast<int>(k)}, {0, visible[static_cast<size_t>(s)]}});
  }
  return out;
}

Derivation make_well_formed(const Derivation& ci, const std::map<std::string, Term>& sigma) {
  auto value_of = [&](int i) -> const Term& {
    auto it = sigma.find(ci.vars[i]);
    if (it == sigma.end())
      throw Error(ErrorCode::PreconditionViolation,
                  "trace does not cover variable ?" + ci.vars[i]);
    return it->second;
  };
  std::vector<int> topo = ci.topo_order();
  Reach reach(ci);

  // First deduction state of every value, along the canonical extension.
  std::map<Term, int> first_deducer;
  for (int i : topo)
    if (ci.states[i].kind == StateKind::Deduction) first_deducer.emplace(value_of(i), i);

  Derivation out = ci;
  // Re-route argument references to the first state deducing the value.
  for (State& s : out.states) {
    for (int& a : s.args) {
      auto it = first_deducer.find(value_of(a));
      if (it != first_deducer.end() && it->second != a && reach.precedes(it->second, a))
        a = it->second;
    }
  }
  // Tie every later occurrence of a deduced value to the deducing state.
  auto norm = [](std::pair<int, int> p) {
    return p.first <= p.second ? p : std::make_pair(p.second, p.first);
  };
  std::set<std::pair<int, int>> tests;
  for (auto t : out.tests) tests.insert(norm(t));
  for (int i : topo) {
    if (ci.states[i].kind != StateKind::Deduction) continue;
    for (int j : topo) {
      if (i == j || !reach.precedes(i, j)) continue;
      if (ci.states[j].kind == StateKind::Reuse) continue;
      if (value_of(i) == value_of(j) && tests.insert(norm({i, j})).second)
        out.tests.push_back(norm({i, j}));
    }
  }
  std::sort(out.tests.begin(), out.tests.end());
  out.tests.erase(std::unique(out.tests.begin(), out.tests.end()), out.tests.end());
  return out;
}

namespace {

// Interface positions of a composite: inputs and visible outputs in
// canonical order.
struct Interface {
  std::vector<int> inputs;
  std::vector<int> visible;
  std::map<int, int> input_ordinal;
  std::map<int, int> visible_ordinal;

  explicit Interface(const Derivation& d) {
    for (int i : d.topo_order())
      if (d.inputs.count(i)) inputs.push_back(i);
    visible = d.visible_outputs();
    for (size_t k = 0; k < inputs.size(); ++k) input_ordinal[inputs[k]] = static_cast<int>(k);
    for (size_t k = 0; k < visible.size(); ++k) visible_ordinal[visible[k]] = static_cast<int>(k);
  }
};

// Rewrites a connection built against one composite to the positionally
// aligned one.
Connection translate(const Connection& phi, const Interface& from, const Interface& to) {
  Connection out;
  for (const ConnLink& l : phi.links) {
    ConnLink nl = l;
    if (l.input.side == 0) nl.input.index = to.inputs.at(static_cast<size_t>(
                               from.input_ordinal.at(l.input.index)));
    if (l.output.side == 0) nl.output.index = to.visible.at(static_cast<size_t>(
                                from.visible_ordinal.at(l.output.index)));
    out.links.push_back(nl);
  }
  return out;
}

struct Composite {
  Derivation derivation;
  bool feasible = true;
};

Composite build_composite(const Derivation& hsd, const std::optional<TestProbe>& probe,
                          const DeductionSystem& D) {
  Composite out;
  if (!probe) {
    out.derivation = hsd;
    return out;
  }
  ProbeInstance inst = instantiate_probe(*probe, hsd, D);
  try {
    out.derivation = connect(hsd, inst.derivation, inst.attachment, D).derivation;
  } catch (const Error&) {
    out.feasible = false;  // attachment exceeds an output's capacity
  }
  return out;
}

}  // namespace

Connection align_connection(const Connection& phi, const Derivation& from, const Derivation& to) {
  return translate(phi, Interface(from), Interface(to));
}

EquivResult check_inclusion(const Derivation& a, const Derivation& b, const DeductionSystem& D,
                            const EquivConfig& cfg) {
  require_valid(a, D, DerivationClass::Honest);
  require_valid(b, D, DerivationClass::Honest);
  if (a.inputs.size() != b.inputs.size() ||
      a.visible_outputs().size() != b.visible_outputs().size())
    throw Error(ErrorCode::InterfaceMismatch,
                "derivations expose different interfaces; cannot align positionally");

  bool unknown = false;
  std::vector<std::optional<TestProbe>> probes;
  probes.push_back(std::nullopt);
  for (TestProbe& p : enumerate_probes(a, D)) probes.push_back(std::move(p));

  for (const auto& probe : probes) {
    Composite ca = build_composite(a, probe, D);
    Composite cb = build_composite(b, probe, D);
    if (!ca.feasible || !cb.feasible) {
      if (ca.feasible != cb.feasible) {
        // capacity differs: treat like an interface mismatch
        throw Error(ErrorCode::InterfaceMismatch,
                    "probe attachment feasible on one side only");
      }
      continue;
    }
    SolutionSet set = solve_complete(ca.derivation, D, cfg.solver);
    unknown = unknown || !set.complete;
    Interface ia(ca.derivation), ib(cb.derivation);
    for (const Solution& sol : set.solutions) {
      Connection phi_b = translate(sol.phi, ia, ib);
      Membership m;
      try {
        m = membership(cb.derivation, sol.asd, phi_b, D);
      } catch (const Error&) {
        m = Membership::NotClosed;
      }
      if (m == Membership::Yes) continue;

      Counterexample cex;
      cex.probe = probe;
      cex.solution = sol;
      ConnectResult ra = connect(ca.derivation, sol.asd, sol.phi, D);
      cex.accepted_trace = trace(ra.derivation, D).values;
      if (m == Membership::No) {
        ConnectResult rb = connect(cb.derivation, sol.asd, phi_b, D);
        TraceResult tb = trace(rb.derivation, D);
        cex.rejected_trace = tb.values;
        if (tb.failing_test) {
          auto [i, j] = *tb.failing_test;
          cex.failing = {tb.values.at(rb.derivation.vars[i]), tb.values.at(rb.derivation.vars[j])};
        }
      } else {
        cex.rejected_not_closed = true;
      }
      EquivResult res;
      res.verdict = EquivResult::Verdict::NotIncluded;
      res.counterexample = std::move(cex);
      return res;
    }
  }
  EquivResult res;
  res.verdict = unknown ? EquivResult::Verdict::Unknown : EquivResult::Verdict::Included;
  return res;
}

EquivResult check_equiv(const Derivation& a, const Derivation& b, const DeductionSystem& D,
                        const EquivConfig& cfg) {
  EquivResult ab = check_inclusion(a, b, D, cfg);
  if (ab.verdict == EquivResult::Verdict::NotIncluded) {
    ab.verdict = EquivResult::Verdict::Inequivalent;
    ab.direction = 0;
    return ab;
  }
  EquivResult ba = check_inclusion(b, a, D, cfg);
  if (ba.verdict == EquivResult::Verdict::NotIncluded) {
    ba.verdict = EquivResult::Verdict::Inequivalent;
    ba.direction = 1;
    return ba;
  }
  EquivResult res;
  res.verdict = (ab.verdict == EquivResult::Verdict::Unknown ||
                 ba.verdict == EquivResult::Verdict::Unknown)
                    ? EquivResult::Verdict::Unknown
                    : EquivResult::Verdict::Equivalent;
  return res;
}

EquivResult ground_check_equiv(const Derivation& a, const Derivation& b, const DeductionSystem& D,
                               const EquivConfig& cfg) {
  if (!a.inputs.empty()) ground_input_values(a, D, cfg.solver.narrowing_depth);
  if (!b.inputs.empty()) ground_input_values(b, D, cfg.solver.narrowing_depth);
  return check_equiv(a, b, D, cfg);
}

}  // namespace sdeq
