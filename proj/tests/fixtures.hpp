#pragma once

// Shared protocol fixtures: a two-message public-key exchange where role B
// decrypts a challenge, applies f and re-encrypts for A, an auxiliary
// derivation publishing the agent identities and public keys, and an
// attacker derivation that sends an encrypted fresh value and checks B's
// response.

#include "sdeq/derivation.hpp"
#include "sdeq/theory.hpp"

namespace fixtures {

using namespace sdeq;

inline Term t(const std::string& s) { return parse_term(s); }

// Role B: memory A, B, pk(A), pk(B), sk(B); receives a cipher, replies with
// penc(f(decrypted), pk(A)). States 0..8, the reply is the visible output.
inline Derivation role_b() {
  DerivationBuilder b("x");
  b.memory(t("A"));
  b.memory(t("B"));
  b.memory(t("pk(A)"));
  b.memory(t("pk(B)"));
  b.memory(t("inv(pk(B))"));
  b.reception(1);
  b.deduction("pdec", {5, 4});
  b.deduction("f", {6});
  b.deduction("penc", {7, 2}, 2);
  return b.chain();
}

// Intruder-knowledge derivation publishing A, B, pk(A), pk(B).
inline Derivation knowledge_ck(int out_mult = 1) {
  DerivationBuilder b("y");
  b.memory(t("A"), out_mult);
  b.memory(t("B"), out_mult);
  b.memory(t("pk(A)"), out_mult);
  b.memory(t("pk(B)"), out_mult);
  return b.chain();
}

// Attacker: receives the published values, creates a fresh ~n, sends
// penc(~n, pk(B)) and checks the response equals penc(f(~n), pk(A)).
inline Derivation c_prime() {
  DerivationBuilder b("z");
  b.reception(1);                    // 0: A
  b.reception(1);                    // 1: B
  b.reception(1);                    // 2: pk(A)
  b.reception(1);                    // 3: pk(B)
  b.memory(t("~n"));                 // 4
  b.deduction("penc", {4, 3}, 2);    // 5: the challenge, sent to B
  b.deduction("f", {4});             // 6
  b.deduction("penc", {6, 2});       // 7: expected response
  b.reception(1);                    // 8: B's reply
  b.test(8, 7);
  return b.chain();
}

// Connection of c_prime() against role_b() composed with knowledge_ck():
// composite indices 0..8 are role B, 9..12 the published values.
inline Connection phi_running_example() {
  Connection phi;
  for (int k = 0; k < 4; ++k) phi.links.push_back({{1, k}, {0, 9 + k}});
  phi.links.push_back({{1, 8}, {0, 8}});
  phi.links.push_back({{0, 5}, {1, 5}});
  return phi;
}

inline Derivation composite_hsd(const DeductionSystem& D, int ck_mult = 1) {
  return connect(role_b(), knowledge_ck(ck_mult), Connection{}, D).derivation;
}

}  // namespace fixtures
