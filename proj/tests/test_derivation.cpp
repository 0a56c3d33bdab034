#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "sdeq/derivation.hpp"

using namespace sdeq;
using fixtures::t;

namespace {
bool has_code(const std::vector<Diagnostic>& ds, const std::string& code) {
  for (const auto& d : ds)
    if (d.code == code) return true;
  return false;
}
}  // namespace

TEST_CASE("role B validates with the expected state classes") {
  DeductionSystem dy = dolev_yao();
  Derivation b = fixtures::role_b();
  CHECK(validate(b, dy, DerivationClass::Honest).empty());
  for (int i = 0; i <= 4; ++i) CHECK(b.states[i].kind == StateKind::Memory);
  CHECK(b.states[5].kind == StateKind::Reception);
  for (int i = 6; i <= 8; ++i) CHECK(b.states[i].kind == StateKind::Deduction);
  CHECK(b.inputs == std::set<int>{5});
  CHECK(b.visible_outputs() == std::vector<int>{8});
}

TEST_CASE("validate rejects malformed derivations") {
  DeductionSystem dy = dolev_yao();
  SUBCASE("deduction referencing a later state") {
    DerivationBuilder b;
    b.memory(t("A"));
    int d = b.deduction("f", {2});
    b.memory(t("B"));
    (void)d;
    CHECK(has_code(validate(b.chain(), dy), "deduction-arg-order"));
  }
  SUBCASE("state declared both memory and reception") {
    DerivationBuilder b;
    b.memory(t("A"));
    Derivation d = b.chain();
    d.inputs.insert(0);
    CHECK(has_code(validate(d, dy), "input-kind-conflict"));
  }
  SUBCASE("variable map not injective") {
    DerivationBuilder b;
    b.memory(t("A"));
    b.memory(t("B"));
    Derivation d = b.chain();
    d.vars[1] = d.vars[0];
    CHECK(has_code(validate(d, dy), "variable-not-injective"));
  }
  SUBCASE("private symbol in a deduction") {
    DerivationBuilder b;
    b.memory(t("pk(B)"));
    b.deduction("inv", {0});
    CHECK(has_code(validate(b.chain(), dy), "symbol-not-public"));
  }
  SUBCASE("honest derivation with a fresh value") {
    DerivationBuilder b;
    b.memory(t("~n"));
    CHECK(has_code(validate(b.chain(), dy, DerivationClass::Honest), "honest-contains-nonce"));
    CHECK(validate(b.chain(), dy, DerivationClass::Attacker).empty());
  }
  SUBCASE("attacker derivation must be totally ordered and output-covering") {
    DerivationBuilder b;
    b.memory(t("~n"));
    b.memory(t("~m"));
    Derivation d = b.with_order({});
    CHECK(has_code(validate(d, dy, DerivationClass::Attacker), "asd-order-not-total"));
    Derivation d2 = b.chain();
    d2.outputs.erase(1);
    CHECK(has_code(validate(d2, dy, DerivationClass::Attacker), "asd-output-missing"));
    DerivationBuilder b3;
    b3.memory(t("secret"));
    CHECK(has_code(validate(b3.chain(), dy, DerivationClass::Attacker), "asd-knowledge-not-nonce"));
  }
  SUBCASE("cyclic order") {
    DerivationBuilder b;
    b.memory(t("A"));
    b.memory(t("B"));
    Derivation d = b.with_order({{0, 1}, {1, 0}});
    CHECK(has_code(validate(d, dy), "order-cyclic"));
  }
}

TEST_CASE("connection of the running example") {
  DeductionSystem dy = dolev_yao();
  Derivation hsd = fixtures::composite_hsd(dy);
  CHECK(validate(hsd, dy, DerivationClass::Honest).empty());
  CHECK(hsd.size() == 13);

  // empty connection function: plain disjoint union
  CHECK(hsd.inputs == std::set<int>{5});

  ConnectResult r = connect(hsd, fixtures::c_prime(), fixtures::phi_running_example(), dy);
  const Derivation& full = r.derivation;
  CHECK(full.closed());
  CHECK(validate(full, dy).empty());
  CHECK(full.size() == 16);

  // the two order chains of the connected system
  Reach reach(full);
  // role chain: memories, then the attacker's challenge, then B's replies
  CHECK(reach.precedes(r.map1[4], r.map2[5]));
  CHECK(reach.precedes(r.map2[5], r.map1[6]));
  CHECK(reach.precedes(r.map1[6], r.map1[8]));
  // attacker chain: published values, fresh value, deductions, reply
  CHECK(reach.precedes(r.map1[12], r.map2[4]));
  CHECK(reach.precedes(r.map2[7], r.map2[8]));
  CHECK(r.map2[8] == r.map1[8]);  // the reply reception rides on B's output
  // cross-pair that stays incomparable
  CHECK_FALSE(reach.precedes(r.map1[0], r.map1[9]));
  CHECK_FALSE(reach.precedes(r.map1[9], r.map1[0]));
}

TEST_CASE("trace of the running example propagates the equalities") {
  DeductionSystem dy = dolev_yao();
  ConnectResult r = connect(fixtures::composite_hsd(dy), fixtures::c_prime(),
                            fixtures::phi_running_example(), dy);
  TraceResult tr = trace(r.derivation, dy);
  REQUIRE(tr.satisfiable);
  CHECK(tr.values.at("x6") == t("~n"));
  CHECK(tr.values.at("x7") == t("f(~n)"));
  CHECK(tr.values.at("x8") == t("penc(f(~n),pk(A))"));
  CHECK(tr.values.at("z5") == t("penc(~n,pk(B))"));
  // every trace image is ground and in normal form
  for (const auto& [v, term] : tr.values) {
    CHECK(term.ground());
    CHECK(dy.normalize(term) == term);
  }
}

TEST_CASE("trace failures and edge cases") {
  DeductionSystem dy = dolev_yao();
  SUBCASE("memory-only derivation") {
    DerivationBuilder b;
    b.memory(t("A"));
    b.memory(t("pdec(penc(a,k),inv(k))"));  // stored un-normalized
    TraceResult tr = trace(b.chain(), dy);
    REQUIRE(tr.satisfiable);
    CHECK(tr.values.at("x0") == t("A"));
    CHECK(tr.values.at("x1") == t("a"));  // normalized on evaluation
  }
  SUBCASE("failing test over distinct constants") {
    DerivationBuilder b;
    b.memory(t("a"));
    b.memory(t("b"));
    b.test(0, 1);
    TraceResult tr = trace(b.chain(), dy);
    CHECK_FALSE(tr.satisfiable);
    CHECK(tr.failing_test == std::pair<int, int>{0, 1});
  }
  SUBCASE("reception makes the derivation open") {
    DerivationBuilder b;
    b.reception();
    CHECK_THROWS_AS(trace(b.chain(), dy), Error);
  }
  SUBCASE("explicit linear extensions agree") {
    DerivationBuilder b;
    b.memory(t("a"));
    b.memory(t("b"));
    b.deduction("pair", {0, 1});
    Derivation d = b.with_order({{0, 2}, {1, 2}});
    TraceResult t1 = trace(d, dy, std::vector<int>{0, 1, 2});
    TraceResult t2 = trace(d, dy, std::vector<int>{1, 0, 2});
    CHECK(t1.values == t2.values);
    CHECK_THROWS_AS(trace(d, dy, std::vector<int>{2, 0, 1}), Error);
  }
}

TEST_CASE("connection rejects non-monotone functions and capacity overruns") {
  DeductionSystem dy = dolev_yao();
  SUBCASE("cyclic merge") {
    DerivationBuilder b1;
    b1.reception();
    b1.memory(t("a"), 2);
    Derivation d1 = b1.chain();
    DerivationBuilder b2;
    b2.reception();
    b2.memory(t("b"), 2);
    Derivation d2 = b2.chain();
    // each derivation expects the other's output before producing its own
    Connection phi;
    phi.links.push_back({{0, 0}, {1, 1}});
    phi.links.push_back({{1, 0}, {0, 1}});
    CHECK_THROWS_AS(connect(d1, d2, phi, dy), Error);
  }
  SUBCASE("multiplicity exhausted") {
    DerivationBuilder b1;
    b1.memory(t("a"), 1);
    Derivation d1 = b1.chain();
    DerivationBuilder b2;
    b2.reception();
    b2.reception();
    Derivation d2 = b2.chain();
    Connection phi;
    phi.links.push_back({{1, 0}, {0, 0}});
    phi.links.push_back({{1, 1}, {0, 0}});
    CHECK_THROWS_AS(connect(d1, d2, phi, dy), Error);
    d1.outputs[0] = 2;
    CHECK_NOTHROW(connect(d1, d2, phi, dy));
  }
  SUBCASE("variables renamed apart automatically") {
    DerivationBuilder b1;
    b1.memory(t("a"));
    DerivationBuilder b2;
    b2.memory(t("b"));
    ConnectResult r = connect(b1.chain(), b2.chain(), Connection{}, dy);
    CHECK(r.derivation.vars[0] != r.derivation.vars[1]);
    CHECK(validate(r.derivation, dy).empty());
  }
}

TEST_CASE("connection is associative up to renaming") {
  DeductionSystem dy = dolev_yao();
  Derivation b = fixtures::role_b();
  Derivation ck = fixtures::knowledge_ck();
  Derivation cp = fixtures::c_prime();

  // ((B o CK) o C') with the fixture links
  Derivation left = connect(connect(b, ck, Connection{}, dy).derivation, cp,
                            fixtures::phi_running_example(), dy)
                        .derivation;

  // (B o (CK o C')) with the equivalent link split
  Connection inner;  // C' consumes the published values
  for (int k = 0; k < 4; ++k) inner.links.push_back({{1, k}, {0, k}});
  ConnectResult ckcp = connect(ck, cp, inner, dy);
  Connection outer;
  outer.links.push_back({{1, ckcp.map2[8]}, {0, 8}});  // reply into the attacker
  outer.links.push_back({{0, 5}, {1, ckcp.map2[5]}});  // challenge into B
  Derivation right = connect(b, ckcp.derivation, outer, dy).derivation;

  CHECK(equal_modulo(left, right));
}

TEST_CASE("open_on") {
  DeductionSystem dy = dolev_yao();
  Derivation cp = fixtures::c_prime();
  SUBCASE("opening the fresh value turns its memory state into an input") {
    Derivation opened = open_on(cp, {t("~n")}, dy);
    CHECK(opened.states[4].kind == StateKind::Reception);
    CHECK(opened.inputs.count(4) == 1);
    CHECK(opened.knowledge().empty());
    CHECK(validate(opened, dy, DerivationClass::Attacker).empty());
  }
  SUBCASE("identity on the empty set") { CHECK(open_on(cp, {}, dy) == cp); }
  SUBCASE("constant inside another knowledge term") {
    DerivationBuilder b;
    b.memory(t("~n"));
    b.memory(t("penc(~n,k)"));
    CHECK_THROWS_AS(open_on(b.chain(), {t("~n")}, dy), Error);
  }
  SUBCASE("not a fresh value") {
    DerivationBuilder b;
    b.memory(t("a"));
    CHECK_THROWS_AS(open_on(b.chain(), {t("a")}, dy), Error);
  }
}

TEST_CASE("canonicalize_nonces") {
  DeductionSystem dy = dolev_yao();
  DerivationBuilder b;
  b.memory(t("~k"));
  b.memory(t("~a"));
  b.memory(t("pair(~k,~z)"));
  Derivation d = b.chain();
  Derivation canon = canonicalize_nonces(d, dy);
  CHECK(*canon.states[0].value == t("~n1"));
  CHECK(*canon.states[1].value == t("~n2"));
  CHECK(*canon.states[2].value == t("pair(~n1,~n3)"));
  CHECK(canonicalize_nonces(canon, dy) == canon);

  // permuted copies canonicalize identically
  std::mt19937 rng(7);
  std::vector<std::string> names = {"p", "q", "r"};
  for (int round = 0; round < 20; ++round) {
    std::shuffle(names.begin(), names.end(), rng);
    DerivationBuilder pb;
    pb.memory(Term::nonce(names[0]));
    pb.memory(Term::nonce(names[1]));
    pb.memory(Term::app("pair", {Term::nonce(names[0]), Term::nonce(names[2])}));
    CHECK(canonicalize_nonces(pb.chain(), dy) == canon);
  }
}

TEST_CASE("equal_modulo") {
  DeductionSystem dy = dolev_yao();
  Derivation a = fixtures::c_prime();
  SUBCASE("variable renaming is ignored") {
    Derivation b = a;
    for (auto& v : b.vars) v = "w_" + v;
    b.vars[8] = b.vars[8];  // re-use sharing preserved trivially (none here)
    CHECK(equal_modulo(a, b));
  }
  SUBCASE("nonce renaming needs the option") {
    Derivation b = a;
    b.states[4].value = t("~other");
    CHECK_FALSE(equal_modulo(a, b));
    CHECK(equal_modulo(a, b, {.nonce_bijection = true}));
  }
  SUBCASE("output multiplicities") {
    Derivation b = a;
    b.outputs[6] = 5;
    CHECK_FALSE(equal_modulo(a, b));
    CHECK(equal_modulo(a, b, {.nonce_bijection = false, .outputs_as_sets = true}));
  }
  SUBCASE("different tests differ") {
    Derivation b = a;
    b.tests = {{8, 6}};
    CHECK_FALSE(equal_modulo(a, b));
  }
}

TEST_CASE("unused re-use states can be dropped without changing traces") {
  DeductionSystem dy = dolev_yao();
  DerivationBuilder b;
  b.memory(t("a"));
  b.memory(t("b"));
  int r = b.reuse(0);
  b.deduction("pair", {1, 0});
  Derivation with_reuse = b.chain();
  REQUIRE(validate(with_reuse, dy).empty());
  TraceResult t1 = trace(with_reuse, dy);

  Derivation without = with_reuse;
  without.states.erase(without.states.begin() + r);
  without.vars.erase(without.vars.begin() + r);
  without.order = {{0, 1}, {1, 2}};
  without.outputs.erase(3);
  without.outputs[2] = 1;
  without.states[2].args = {1, 0};
  TraceResult t2 = trace(without, dy);
  for (const auto& [v, term] : t2.values) CHECK(t1.values.at(v) == term);
}

TEST_CASE("asd_leq") {
  DeductionSystem dy = dolev_yao();

  // W: the attacker that just sends one fresh value.
  DerivationBuilder wb("w");
  wb.memory(t("~w1"), 2);
  Derivation w = wb.chain();

  // C_d: the deduction part of the fixture attacker (tests stripped).
  DerivationBuilder db("z");
  db.reception(1);                  // A
  db.reception(1);                  // B
  db.reception(1);                  // pk(A)
  db.reception(1);                  // pk(B)
  db.memory(t("~n"));               // 4
  db.deduction("penc", {4, 3}, 2);  // 5
  db.deduction("f", {4});           // 6
  db.deduction("penc", {6, 2});     // 7
  db.reception(1);                  // 8
  Derivation cd = db.chain();

  SUBCASE("reflexive") { CHECK(asd_leq(w, w, dy) == LeqVerdict::Yes); }

  SUBCASE("clause 2: extension by an unused memory state") {
    DerivationBuilder eb("w");
    eb.memory(t("~w1"), 2);
    eb.memory(t("~extra"));
    CHECK(asd_leq(w, eb.chain(), dy) == LeqVerdict::Yes);
  }

  SUBCASE("clause 1 degenerate: appended deduction-only tail") {
    DerivationBuilder eb("w");
    int m = eb.memory(t("~w1"), 2);
    eb.deduction("f", {m});
    CHECK(asd_leq(w, eb.chain(), dy) == LeqVerdict::Yes);
  }

  SUBCASE("the nonce sender is below the full attack's deduction part") {
    CHECK(asd_leq(w, cd, dy) == LeqVerdict::Yes);
  }

  SUBCASE("one-deduction challenge sender is below the deduction part") {
    DerivationBuilder vb("v");
    vb.reception(1);                  // pk(B)
    vb.memory(t("~m"));               // 1
    vb.deduction("penc", {1, 0}, 2);  // 2
    CHECK(asd_leq(vb.chain(), cd, dy) == LeqVerdict::Yes);
  }

  SUBCASE("tests block the deduction-only extension") {
    Derivation cp = fixtures::c_prime();
    CHECK(asd_leq(w, cp, dy) == LeqVerdict::No);
  }

  SUBCASE("opening makes the nonce sender below the pure receiver") {
    // abstracting the fresh value of w leaves exactly one reception
    DerivationBuilder ub("u");
    ub.reception(1);
    CHECK(asd_leq(w, ub.chain(), dy) == LeqVerdict::Yes);
  }

  SUBCASE("kind mismatch is not below") {
    DerivationBuilder ab("a");
    ab.memory(t("~a"));
    ab.deduction("f", {0});
    DerivationBuilder bb("b");
    bb.memory(t("~b"));
    bb.memory(t("~c"));
    CHECK(asd_leq(ab.chain(), bb.chain(), dy) == LeqVerdict::No);
  }

  SUBCASE("strictly bigger is not below smaller") {
    CHECK(asd_leq(cd, w, dy) == LeqVerdict::No);
  }
}

TEST_CASE("decompose splits deductions from tests") {
  DeductionSystem dy = dolev_yao();
  Derivation cp = fixtures::c_prime();
  ConnectResult r = connect(fixtures::composite_hsd(dy), cp, fixtures::phi_running_example(), dy);
  TraceResult tr = trace(r.derivation, dy);
  REQUIRE(tr.satisfiable);

  Decomposition dec = decompose(cp, tr.values, dy);
  CHECK(dec.deduction_part.tests.empty());
  CHECK(dec.deduction_part.size() == 9);
  CHECK(dec.testing_part.knowledge().empty());
  CHECK(dec.testing_part.tests.size() == 1);
  CHECK(dec.testing_part.size() == 2);  // two relays, one equality
  CHECK(dec.psi.links.size() == 2);

  // reconnecting reproduces a derivation with the original behavior
  ConnectResult back = connect(dec.deduction_part, dec.testing_part, dec.psi, dy);
  CHECK(back.derivation.tests.size() == 1);
  CHECK(back.derivation.inputs == cp.inputs);

  SUBCASE("test-free attacker yields an empty testing part") {
    Derivation noTests = cp;
    noTests.tests.clear();
    Decomposition d2 = decompose(noTests, tr.values, dy);
    CHECK(d2.testing_part.system().empty());
  }
}

TEST_CASE("well-formedness") {
  DeductionSystem dy = dolev_yao();
  SUBCASE("re-deduced value without a test is ill-formed") {
    DerivationBuilder b;
    b.reception(1);
    b.memory(t("~n"));
    b.deduction("f", {1});
    b.deduction("f", {1});
    Derivation d = b.chain();
    std::map<std::string, Term> sigma = {{d.vars[0], t("a")},
                                         {d.vars[1], t("~n")},
                                         {d.vars[2], t("f(~n)")},
                                         {d.vars[3], t("f(~n)")}};
    CHECK_FALSE(is_well_formed(d, sigma));
    d.tests.push_back({2, 3});
    CHECK(is_well_formed(d, sigma));
  }
  SUBCASE("the fixture attacker is well-formed") {
    ConnectResult r = connect(fixtures::composite_hsd(dy), fixtures::c_prime(),
                              fixtures::phi_running_example(), dy);
    TraceResult tr = trace(r.derivation, dy);
    std::map<std::string, Term> sigma;
    for (const auto& [v, term] : tr.values) sigma[v] = term;
    CHECK(is_well_formed(fixtures::c_prime(), sigma));
  }
}
