#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "sdeq/frontend.hpp"
#include "sdeq/json_io.hpp"
#include "sdeq/solver.hpp"

using namespace sdeq;
using fixtures::t;

namespace {
std::string slurp(const std::string& name) {
  std::ifstream in(std::string(SDEQ_FIXTURES_DIR) + "/" + name);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}
}  // namespace

TEST_CASE("theory file parses into the expected system") {
  auto [spec, D] = parse_theory(slurp("dy.thy"));
  CHECK(spec.name == "dy");
  CHECK(spec.symbols.size() == 8);
  CHECK(spec.rules.size() == 3);
  CHECK(D.is_public("penc"));
  CHECK_FALSE(D.is_public("inv"));
  CHECK(D.rewrites().cmin_name() == "cmin");
  CHECK(D.normalize(t("pdec(penc(n,k),inv(k))")) == t("n"));
  CHECK(D.rewrites().is_subterm_convergent());
}

TEST_CASE("theory parse errors carry line numbers") {
  SUBCASE("rule with a fresh right-hand variable") {
    const char* bad =
        "theory broken\nsymbols:\n  g/1 public\n  h/2 public\nrules:\n  g(?x) -> h(?x,?y)\n";
    CHECK_THROWS_WITH_AS(parse_theory(bad), doctest::Contains("introduces variable"), Error);
  }
  SUBCASE("duplicate symbol") {
    const char* bad = "theory broken\nsymbols:\n  g/1 public\n  g/1 private\n";
    CHECK_THROWS_WITH_AS(parse_theory(bad), doctest::Contains("line 4"), Error);
  }
  SUBCASE("syntax error") {
    const char* bad = "theory broken\nsymbols:\n  g1 public\n";
    CHECK_THROWS_WITH_AS(parse_theory(bad), doctest::Contains("line 3"), Error);
  }
  SUBCASE("undeclared symbol in a rule") {
    const char* bad = "theory broken\nsymbols:\n  g/1 public\nrules:\n  h(?x) -> ?x\n";
    CHECK_THROWS_WITH_AS(parse_theory(bad), doctest::Contains("undeclared"), Error);
  }
}

TEST_CASE("narration compiles to the expected role derivations") {
  auto [spec, D] = parse_theory(slurp("dy.thy"));
  (void)spec;
  NarrationSpec ns = parse_narration(slurp("example.prot"), D);
  CHECK(ns.name == "example");
  CHECK(ns.messages.size() == 2);
  CHECK(ns.role_order == std::vector<std::string>{"A", "B"});
  CHECK(ns.published.size() == 4);
  CHECK(ns.fresh == std::vector<Term>{t("Na")});

  auto roles = compile_narration(ns, D);
  REQUIRE(roles.count("A"));
  REQUIRE(roles.count("B"));

  // role B: five memory states, one reception, three deductions
  const Derivation& b = roles.at("B");
  REQUIRE(b.size() == 9);
  for (int i = 0; i <= 4; ++i) CHECK(b.states[i].kind == StateKind::Memory);
  CHECK(b.states[5].kind == StateKind::Reception);
  for (int i = 6; i <= 8; ++i) CHECK(b.states[i].kind == StateKind::Deduction);
  CHECK(b.states[6].symbol == "pdec");
  CHECK(b.states[7].symbol == "f");
  CHECK(b.states[8].symbol == "penc");
  CHECK(b.visible_outputs() == std::vector<int>{8});
  CHECK(b.tests.empty());
  // sk(B) sugar expanded in the knowledge
  CHECK(*b.states[4].value == t("inv(pk(B))"));

  // role A carries the annotated equality test against its reception
  const Derivation& a = roles.at("A");
  REQUIRE(!a.tests.empty());
  auto [ti, tj] = a.tests[0];
  CHECK(a.states[ti].kind == StateKind::Reception);
  CHECK(a.states[tj].kind == StateKind::Deduction);
  CHECK(validate(a, D, DerivationClass::Honest).empty());

  // the full composite is analyzable and the honest run is reachable
  Derivation comp = narration_composite(ns, D);
  CHECK(validate(comp, D, DerivationClass::Honest).empty());
  SatResult sat = check_sat(comp, D);
  CHECK(sat.status == SatResult::Status::Sat);
}

TEST_CASE("narration errors") {
  auto [spec, D] = parse_theory(slurp("dy.thy"));
  (void)spec;
  SUBCASE("empty narration") {
    CHECK_THROWS_WITH_AS(parse_narration("protocol p\n", D), doctest::Contains("no messages"),
                         Error);
  }
  SUBCASE("role without knowledge") {
    CHECK_THROWS_WITH_AS(parse_narration("A -> B : pk(A)\nwhere A knows pk(A)\n", D),
                         doctest::Contains("no knowledge"), Error);
  }
  SUBCASE("message not constructible by the sender") {
    NarrationSpec ns =
        parse_narration("A -> B : penc(Na, pk(B))\nwhere A knows A\nwhere B knows B\n", D);
    CHECK_THROWS_WITH_AS(compile_narration(ns, D), doctest::Contains("cannot produce"), Error);
  }
  SUBCASE("check before any reception") {
    CHECK_THROWS_WITH_AS(
        parse_narration("A checks recv == pk(A)\nA -> B : pk(A)\nwhere A knows pk(A)\n", D),
        doctest::Contains("received nothing"), Error);
  }
  SUBCASE("fresh value never known") {
    CHECK_THROWS_WITH_AS(
        parse_narration("A -> B : pk(A)\nwhere A knows pk(A)\nwhere B knows B\nfresh Nz\n", D),
        doctest::Contains("fresh value"), Error);
  }
}

TEST_CASE("incoming pairs are projected when needed") {
  auto [spec, D] = parse_theory(slurp("dy.thy"));
  (void)spec;
  // B must extract the second component to answer
  NarrationSpec ns = parse_narration(
      "A -> B : pair(A, Na)\n"
      "B -> A : penc(Na, pk(A))\n"
      "where A knows A, Na, pk(A)\n"
      "where B knows pk(A)\n",
      D);
  auto roles = compile_narration(ns, D);
  const Derivation& b = roles.at("B");
  bool has_snd = false;
  for (const State& s : b.states) has_snd = has_snd || (s.kind == StateKind::Deduction && s.symbol == "snd");
  CHECK(has_snd);
  CHECK(validate(b, D, DerivationClass::Honest).empty());
}

TEST_CASE("derivation JSON round trip is exact") {
  DeductionSystem dy = dolev_yao();
  for (const Derivation& d : {fixtures::role_b(), fixtures::c_prime(),
                              fixtures::composite_hsd(dy)}) {
    std::string s1 = derivation_to_json(d);
    Derivation back = derivation_from_json(s1);
    CHECK(back == d);
    CHECK(derivation_to_json(back) == s1);
  }
}

TEST_CASE("witness JSON round trip") {
  DeductionSystem dy = dolev_yao();
  Derivation hsd = fixtures::composite_hsd(dy, 2);
  SolutionSet set = solve_complete(hsd, dy);
  REQUIRE(!set.solutions.empty());
  const Solution& sol = set.solutions.front();
  ConnectResult c = connect(hsd, sol.asd, sol.phi, dy);
  TraceResult tr = trace(c.derivation, dy);
  std::string s1 = witness_to_json(sol, tr.values);
  Witness w = witness_from_json(s1);
  CHECK(w.solution.asd == sol.asd);
  CHECK(w.solution.phi == sol.phi);
  CHECK(witness_to_json(w.solution, w.trace) == s1);
}

TEST_CASE("counterexample JSON names the failing equation") {
  DeductionSystem dy = dolev_yao();
  DerivationBuilder ba("h");
  ba.memory(t("na"), 2);
  ba.memory(t("pk(B)"), 2);
  ba.deduction("penc", {0, 1}, 2);
  DerivationBuilder bb("h");
  bb.memory(t("na"), 2);
  bb.memory(t("pk(B)"), 2);
  bb.memory(t("nb"));
  bb.deduction("penc", {2, 1}, 2);
  EquivResult r = check_equiv(ba.chain(), bb.chain(), dy);
  REQUIRE(r.verdict == EquivResult::Verdict::Inequivalent);
  std::string s1 = counterexample_to_json(*r.counterexample, r.direction);
  ParsedCounterexample back = counterexample_from_json(s1);
  CHECK(back.cex.failing.has_value());
  CHECK(counterexample_to_json(back.cex, back.direction) == s1);
}

TEST_CASE("fixture derivation file traces") {
  auto [spec, D] = parse_theory(slurp("dy.thy"));
  (void)spec;
  Derivation d = derivation_from_json(slurp("closed.json"));
  CHECK(validate(d, D).empty());
  TraceResult tr = trace(d, D);
  CHECK(tr.satisfiable);
  CHECK(tr.values.at("a3") == t("a"));
}
