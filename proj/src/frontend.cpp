#include "sdeq/frontend.hpp"

#include <algorithm>
#include <sstream>

namespace sdeq {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + msg);
}

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& s) {
  size_t h = s.find('#');
  return h == std::string::npos ? s : s.substr(0, h);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!strip(cur).empty() || !out.empty()) out.push_back(strip(cur));
  return out;
}

// sk(t) abbreviates inv(pk(t)) when the theory knows pk and inv but no sk.
Term expand_sugar(const Term& t, const DeductionSystem& D) {
  if (!t.is_application()) return t;
  std::vector<Term> args;
  for (const Term& a : t.args()) args.push_back(expand_sugar(a, D));
  if (t.name() == "sk" && t.arity() == 1 && !D.signature().find("sk") &&
      D.signature().find("pk") && D.signature().find("inv"))
    return Term::app("inv", {Term::app("pk", {args[0]})});
  return Term::app(t.name(), std::move(args));
}

Term parse_message_term(const std::string& text, const DeductionSystem& D, int line) {
  Term t;
  try {
    t = parse_term(text);
  } catch (const Error& e) {
    fail(line, e.what());
  }
  t = expand_sugar(t, D);
  // arity/declaration check after sugar expansion
  std::function<void(const Term&)> check = [&](const Term& u) {
    if (u.is_application()) {
      const Symbol* sym = D.signature().find(u.name());
      if (!sym) fail(line, "undeclared symbol " + u.name());
      if (sym->arity != u.arity())
        fail(line, "symbol " + u.name() + " expects " + std::to_string(sym->arity) + " arguments");
      for (const Term& a : u.args()) check(a);
    }
  };
  check(t);
  return t;
}

}  // namespace

std::pair<TheorySpec, DeductionSystem> parse_theory(const std::string& text) {
  TheorySpec spec;
  Signature sig;
  enum class Section { None, Symbols, Rules } section = Section::None;

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  std::vector<std::pair<std::string, int>> rule_lines;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = strip(strip_comment(raw));
    if (s.empty()) continue;
    if (s.rfind("theory", 0) == 0) {
      spec.name = strip(s.substr(6));
      continue;
    }
    if (s == "symbols:") {
      section = Section::Symbols;
      continue;
    }
    if (s == "rules:") {
      section = Section::Rules;
      continue;
    }
    if (s.rfind("precedence:", 0) == 0) {
      for (const std::string& part : split(s.substr(11), '>')) {
        if (part.empty()) fail(line, "empty precedence entry");
        spec.precedence.push_back(part);
      }
      section = Section::None;
      continue;
    }
    if (s.rfind("cmin:", 0) == 0) {
      spec.cmin = strip(s.substr(5));
      if (spec.cmin.empty()) fail(line, "empty least-constant name");
      section = Section::None;
      continue;
    }
    switch (section) {
      case Section::Symbols: {
        // name/arity visibility
        size_t slash = s.find('/');
        if (slash == std::string::npos) fail(line, "expected name/arity");
        std::string name = strip(s.substr(0, slash));
        std::string rest = strip(s.substr(slash + 1));
        size_t sp = rest.find_first_of(" \t");
        if (sp == std::string::npos) fail(line, "expected 'public' or 'private'");
        unsigned arity = 0;
        try {
          arity = static_cast<unsigned>(std::stoul(rest.substr(0, sp)));
        } catch (...) {
          fail(line, "bad arity");
        }
        std::string vis = strip(rest.substr(sp));
        if (vis != "public" && vis != "private") fail(line, "expected 'public' or 'private'");
        try {
          sig.declare({name, arity, vis == "public"});
        } catch (const Error& e) {
          fail(line, e.what());
        }
        spec.symbols.push_back({name, arity, vis == "public"});
        break;
      }
      case Section::Rules:
        rule_lines.push_back({s, line});
        break;
      case Section::None:
        fail(line, "unexpected input: " + s);
    }
  }

  auto arities = sig.arity_map();
  for (auto& [rl, ln] : rule_lines) {
    size_t arrow = rl.find("->");
    if (arrow == std::string::npos) fail(ln, "rule needs '->'");
    Term lhs, rhs;
    try {
      lhs = parse_term(strip(rl.substr(0, arrow)), &arities);
      rhs = parse_term(strip(rl.substr(arrow + 2)), &arities);
    } catch (const Error& e) {
      fail(ln, e.what());
    }
    spec.rules.push_back({lhs, rhs});
  }

  RewriteSystem rw(spec.rules, spec.precedence, spec.cmin);
  rw.validate_orientation();
  return {spec, DeductionSystem(std::move(sig), std::move(rw))};
}

NarrationSpec parse_narration(const std::string& text, const DeductionSystem& D) {
  NarrationSpec spec;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  auto note_role = [&](const std::string& r) {
    if (std::find(spec.role_order.begin(), spec.role_order.end(), r) == spec.role_order.end())
      spec.role_order.push_back(r);
  };
  while (std::getline(in, raw)) {
    ++line;
    std::string s = strip(strip_comment(raw));
    if (s.empty()) continue;
    if (s.rfind("protocol", 0) == 0) {
      spec.name = strip(s.substr(8));
      continue;
    }
    if (s.rfind("where", 0) == 0) {
      std::string rest = strip(s.substr(5));
      size_t kw = rest.find("knows");
      if (kw == std::string::npos) fail(line, "expected '<role> knows t1, t2, ...'");
      std::string role = strip(rest.substr(0, kw));
      if (role.empty()) fail(line, "missing role name");
      for (const std::string& part : split(rest.substr(kw + 5), ',')) {
        if (part.empty()) fail(line, "empty knowledge entry");
        spec.knowledge[role].push_back(parse_message_term(part, D, line));
      }
      continue;
    }
    if (s.rfind("publish", 0) == 0) {
      for (const std::string& part : split(s.substr(7), ','))
        if (!part.empty()) spec.published.push_back(parse_message_term(part, D, line));
      continue;
    }
    if (s.rfind("fresh", 0) == 0) {
      for (const std::string& part : split(s.substr(5), ','))
        if (!part.empty()) spec.fresh.push_back(parse_message_term(part, D, line));
      continue;
    }
    size_t checks = s.find(" checks ");
    if (checks != std::string::npos) {
      std::string role = strip(s.substr(0, checks));
      std::string rest = strip(s.substr(checks + 8));
      if (rest.rfind("recv", 0) != 0) fail(line, "expected 'checks recv == term'");
      rest = strip(rest.substr(4));
      if (rest.rfind("==", 0) != 0) fail(line, "expected '==' after recv");
      Term expected = parse_message_term(strip(rest.substr(2)), D, line);
      int after = -1;
      for (size_t k = 0; k < spec.messages.size(); ++k)
        if (spec.messages[k].to == role) after = static_cast<int>(k);
      if (after < 0) fail(line, role + " has received nothing to check");
      spec.checks.push_back({role, expected, after, line});
      note_role(role);
      continue;
    }
    size_t arrow = s.find("->");
    size_t colon = s.find(':');
    if (arrow != std::string::npos && colon != std::string::npos && arrow < colon) {
      NarrationMessage m;
      m.from = strip(s.substr(0, arrow));
      m.to = strip(s.substr(arrow + 2, colon - arrow - 2));
      m.payload = parse_message_term(strip(s.substr(colon + 1)), D, line);
      m.line = line;
      if (m.from.empty() || m.to.empty()) fail(line, "message needs sender and receiver");
      note_role(m.from);
      note_role(m.to);
      spec.messages.push_back(std::move(m));
      continue;
    }
    fail(line, "unrecognized narration line: " + s);
  }
  if (spec.messages.empty()) fail(line ? line : 1, "narration contains no messages");
  for (const std::string& r : spec.role_order)
    if (!spec.knowledge.count(r)) fail(1, "role " + r + " has no knowledge block");
  for (const auto& [role, terms] : spec.knowledge) {
    (void)terms;
    note_role(role);
  }
  for (const Term& f : spec.fresh) {
    bool known = false;
    for (const auto& [role, terms] : spec.knowledge)
      for (const Term& t : terms) known = known || t == f;
    if (!known)
      throw Error(ErrorCode::ParseError, "fresh value " + f.str() + " appears in no knowledge block");
  }
  for (const auto& [role, terms] : spec.knowledge)
    for (const Term& t : terms)
      if (!t.ground() || t.has_nonce())
        throw Error(ErrorCode::ParseError,
                    "knowledge of " + role + " must be ground and outside the fresh-value namespace");
  return spec;
}

namespace {

// Per-role compilation: tracks which narration-level term each state holds.
struct RoleCompiler {
  const DeductionSystem& D;
  DerivationBuilder builder;
  std::map<Term, int> known;     // narration view -> state
  std::map<Term, int> pre_recv;  // view before the latest reception

  explicit RoleCompiler(const DeductionSystem& D, const std::string& prefix)
      : D(D), builder(prefix) {}

  bool constructible(const Term& t) const {
    if (known.count(t)) return true;
    if (t.is_application() && D.is_public(t.name())) {
      for (const Term& a : t.args())
        if (!constructible(a)) return false;
      return true;
    }
    return false;
  }

  int construct_from(std::map<Term, int>& view, const Term& t, int line) {
    if (auto it = view.find(t); it != view.end()) return it->second;
    if (!t.is_application() || !D.is_public(t.name()))
      fail(line, "role cannot produce " + t.str() + " from its knowledge");
    std::vector<int> args;
    for (const Term& a : t.args()) args.push_back(construct_from(view, a, line));
    int s = builder.deduction(t.name(), std::move(args));
    view.emplace(t, s);
    known.emplace(t, s);
    return s;
  }

  int construct(const Term& t, int line) { return construct_from(known, t, line); }

  // A check compares the reception against the role's own material: first
  // try the view predating the reception, then anything learned from it
  // except the received message itself.
  int construct_check(const Term& t, int reception, int line) {
    try {
      std::map<Term, int> view = pre_recv;
      return construct_from(view, t, line);
    } catch (const Error&) {
      std::map<Term, int> view;
      for (const auto& [term, state] : known)
        if (state != reception) view.emplace(term, state);
      return construct_from(view, t, line);
    }
  }

  // Apply destructor rules to a received term as long as the keys are
  // constructible: what the role can learn from the message.
  void decompose(const Term& view, int state) {
    for (const RewriteRule& rule : D.rewrites().rules()) {
      if (!rule.rhs.is_variable() || !rule.lhs.is_application() || rule.lhs.args().empty())
        continue;
      if (!D.is_public(rule.lhs.name())) continue;
      auto m = match(rule.lhs.args()[0], view);
      if (!m) continue;
      bool keys_ok = true;
      std::vector<Term> key_terms;
      for (size_t k = 1; k < rule.lhs.args().size(); ++k) {
        Term key = m->apply(rule.lhs.args()[k]);
        key_terms.push_back(key);
        keys_ok = keys_ok && key.ground() && constructible(key);
      }
      if (!keys_ok) continue;
      Term learned = m->apply(rule.rhs);
      if (!learned.ground() || known.count(learned)) continue;
      std::vector<int> args{state};
      for (const Term& key : key_terms) args.push_back(construct(key, 0));
      int s = builder.deduction(rule.lhs.name(), std::move(args));
      known.emplace(learned, s);
      decompose(learned, s);
    }
  }
};

}  // namespace

std::map<std::string, Derivation> compile_narration(const NarrationSpec& spec,
                                                    const DeductionSystem& D) {
  std::map<std::string, Derivation> out;
  for (size_t ri = 0; ri < spec.role_order.size(); ++ri) {
    const std::string& role = spec.role_order[ri];
    RoleCompiler rc(D, std::string(1, static_cast<char>('a' + (ri % 26))));
    for (const Term& t : spec.knowledge.at(role)) {
      if (!rc.known.count(t)) rc.known.emplace(t, rc.builder.memory(t));
    }
    std::map<int, int> last_reception;  // message index -> state
    for (size_t mi = 0; mi < spec.messages.size(); ++mi) {
      const NarrationMessage& m = spec.messages[mi];
      if (m.from == role) {
        int s = rc.construct(m.payload, m.line);
        rc.builder.set_output(s, 2);
      }
      if (m.to == role) {
        rc.pre_recv = rc.known;
        int r = rc.builder.reception(1);
        last_reception[static_cast<int>(mi)] = r;
        if (!rc.known.count(m.payload)) rc.known.emplace(m.payload, r);
        rc.decompose(m.payload, r);
      }
      for (const NarrationCheck& c : spec.checks) {
        if (c.role != role || c.after_message != static_cast<int>(mi)) continue;
        int r = last_reception.at(c.after_message);
        int expected = rc.construct_check(c.expected, r, c.line);
        rc.builder.test(r, expected);
      }
    }
    Derivation d = rc.builder.chain();
    require_valid(d, D, DerivationClass::Honest);
    out.emplace(role, std::move(d));
  }
  return out;
}

Derivation build_knowledge_derivation(const NarrationSpec& spec, const DeductionSystem& D) {
  DerivationBuilder b("k");
  for (const Term& t : spec.published) b.memory(t, 2);
  Derivation d = b.chain();
  require_valid(d, D, DerivationClass::Honest);
  return d;
}

Derivation narration_composite(const NarrationSpec& spec, const DeductionSystem& D) {
  std::map<std::string, Derivation> roles = compile_narration(spec, D);
  Derivation acc;
  bool first = true;
  for (const std::string& r : spec.role_order) {
    if (first) {
      acc = roles.at(r);
      first = false;
    } else {
      acc = connect(acc, roles.at(r), Connection{}, D).derivation;
    }
  }
  if (!spec.published.empty()) {
    Derivation ck = build_knowledge_derivation(spec, D);
    acc = first ? ck : connect(acc, ck, Connection{}, D).derivation;
  }
  return acc;
}

}  // namespace sdeq
