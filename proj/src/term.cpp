#include "sdeq/term.hpp"

#include <algorithm>
#include <cctype>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace sdeq {

namespace {

size_t hash_combine(size_t seed, size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

struct NodeKey {
  const detail::TermNode* node;
};

struct NodeKeyHash {
  size_t operator()(const NodeKey& k) const { return k.node->hash; }
};

struct NodeKeyEq {
  bool operator()(const NodeKey& a, const NodeKey& b) const {
    const auto* x = a.node;
    const auto* y = b.node;
    if (x->kind != y->kind || x->nonce != y->nonce || x->name != y->name ||
        x->args.size() != y->args.size())
      return false;
    for (size_t i = 0; i < x->args.size(); ++i)
      if (x->args[i] != y->args[i]) return false;
    return true;
  }
};

// Process-wide intern pool. Nodes live for the lifetime of the process.
struct Pool {
  std::mutex mu;
  std::unordered_set<NodeKey, NodeKeyHash, NodeKeyEq> set;
  std::vector<std::unique_ptr<detail::TermNode>> owner;
};

Pool& pool() {
  static Pool* p = new Pool();
  return *p;
}

}  // namespace

Term intern(detail::TermNode&& proto) {
  size_t h = hash_combine(static_cast<size_t>(proto.kind), std::hash<std::string>{}(proto.name));
  h = hash_combine(h, proto.nonce ? 0x9e37u : 0x79b9u);
  for (const Term& a : proto.args) h = hash_combine(h, a.hash());
  proto.hash = h;

  proto.ground = proto.kind != TermKind::Variable;
  proto.has_nonce = proto.kind == TermKind::Constant && proto.nonce;
  proto.size = 1;
  for (const Term& a : proto.args) {
    proto.ground = proto.ground && a.ground();
    proto.has_nonce = proto.has_nonce || a.has_nonce();
    proto.size += a.size();
  }

  Pool& p = pool();
  std::lock_guard<std::mutex> lock(p.mu);
  auto it = p.set.find(NodeKey{&proto});
  if (it != p.set.end()) return Term(it->node);
  p.owner.push_back(std::make_unique<detail::TermNode>(std::move(proto)));
  const detail::TermNode* n = p.owner.back().get();
  p.set.insert(NodeKey{n});
  return Term(n);
}

Term Term::variable(const std::string& name) {
  detail::TermNode n;
  n.kind = TermKind::Variable;
  n.nonce = false;
  n.name = name;
  return intern(std::move(n));
}

Term Term::constant(const std::string& name) {
  detail::TermNode n;
  n.kind = TermKind::Constant;
  n.nonce = false;
  n.name = name;
  return intern(std::move(n));
}

Term Term::nonce(const std::string& name) {
  detail::TermNode n;
  n.kind = TermKind::Constant;
  n.nonce = true;
  n.name = name;
  return intern(std::move(n));
}

Term Term::app(const std::string& symbol, std::vector<Term> args) {
  detail::TermNode n;
  n.kind = TermKind::Application;
  n.nonce = false;
  n.name = symbol;
  n.args = std::move(args);
  return intern(std::move(n));
}

int Term::compare(const Term& a, const Term& b) {
  if (a == b) return 0;
  if (a.kind() != b.kind()) return a.kind() < b.kind() ? -1 : 1;
  if (a.is_constant() && a.is_nonce() != b.is_nonce()) return a.is_nonce() ? 1 : -1;
  if (int c = a.name().compare(b.name()); c != 0) return c < 0 ? -1 : 1;
  if (a.arity() != b.arity()) return a.arity() < b.arity() ? -1 : 1;
  for (size_t i = 0; i < a.arity(); ++i)
    if (int c = compare(a.args()[i], b.args()[i]); c != 0) return c;
  return 0;
}

std::string Term::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Term& t) {
  switch (t.kind()) {
    case TermKind::Variable:
      return os << '?' << t.name();
    case TermKind::Constant:
      return os << (t.is_nonce() ? "~" : "") << t.name();
    case TermKind::Application: {
      os << t.name();
      if (!t.args().empty()) {
        os << '(';
        for (size_t i = 0; i < t.args().size(); ++i) {
          if (i) os << ',';
          os << t.args()[i];
        }
        os << ')';
      } else {
        os << "()";
      }
      return os;
    }
  }
  return os;
}

namespace {
void collect_subterms(const Term& t, std::set<Term>& out) {
  if (!out.insert(t).second) return;
  for (const Term& a : t.args()) collect_subterms(a, out);
}
}  // namespace

std::set<Term> subterms(const Term& t) {
  std::set<Term> out;
  collect_subterms(t, out);
  return out;
}

bool is_subterm(const Term& s, const Term& t) {
  if (s == t) return true;
  for (const Term& a : t.args())
    if (is_subterm(s, a)) return true;
  return false;
}

Term subterm_at(const Term& t, const Position& p) {
  Term cur = t;
  for (unsigned i : p) {
    if (i == 0 || i > cur.arity())
      throw Error(ErrorCode::InvalidPosition, "position does not address a subterm of " + t.str());
    cur = cur.args()[i - 1];
  }
  return cur;
}

Term replace_at(const Term& t, const Position& p, const Term& s) {
  if (p.empty()) return s;
  unsigned i = p.front();
  if (i == 0 || i > t.arity())
    throw Error(ErrorCode::InvalidPosition, "position does not address a subterm of " + t.str());
  std::vector<Term> args = t.args();
  args[i - 1] = replace_at(args[i - 1], Position(p.begin() + 1, p.end()), s);
  return Term::app(t.name(), std::move(args));
}

namespace {
void collect_positions(const Term& t, Position& here, std::vector<Position>& out) {
  if (t.is_variable()) return;
  out.push_back(here);
  for (unsigned i = 0; i < t.arity(); ++i) {
    here.push_back(i + 1);
    collect_positions(t.args()[i], here, out);
    here.pop_back();
  }
}

template <typename Pred>
void collect_atoms(const Term& t, std::set<Term>& out, Pred pred, std::set<const detail::TermNode*>* seen) {
  for (const Term& a : t.args()) collect_atoms(a, out, pred, seen);
  if (pred(t)) out.insert(t);
}
}  // namespace

std::vector<Position> non_variable_positions(const Term& t) {
  std::vector<Position> out;
  Position here;
  collect_positions(t, here, out);
  return out;
}

std::set<std::string> variables_of(const Term& t) {
  std::set<std::string> out;
  std::set<Term> atoms;
  collect_atoms(t, atoms, [](const Term& s) { return s.is_variable(); }, nullptr);
  for (const Term& v : atoms) out.insert(v.name());
  return out;
}

std::set<Term> constants_of(const Term& t) {
  std::set<Term> out;
  collect_atoms(t, out, [](const Term& s) { return s.is_constant(); }, nullptr);
  return out;
}

std::set<Term> nonces_of(const Term& t) {
  if (!t.has_nonce()) return {};
  std::set<Term> out;
  collect_atoms(t, out, [](const Term& s) { return s.is_nonce(); }, nullptr);
  return out;
}

Term replace_const(const Term& t, const Term& c, const Term& s) {
  if (t == c) return s;
  if (!t.is_application()) return t;
  bool changed = false;
  std::vector<Term> args;
  args.reserve(t.arity());
  for (const Term& a : t.args()) {
    Term r = replace_const(a, c, s);
    changed = changed || r != a;
    args.push_back(r);
  }
  return changed ? Term::app(t.name(), std::move(args)) : t;
}

Substitution Substitution::make(std::map<std::string, Term> bindings) {
  for (auto it = bindings.begin(); it != bindings.end();) {
    if (it->second.is_variable() && it->second.name() == it->first)
      it = bindings.erase(it);
    else
      ++it;
  }
  for (const auto& [var, img] : bindings) {
    (void)var;
    for (const std::string& v : variables_of(img))
      if (bindings.count(v))
        throw Error(ErrorCode::PreconditionViolation,
                    "substitution is not idempotent: support variable ?" + v + " occurs in an image");
  }
  Substitution s;
  s.bindings_ = std::move(bindings);
  return s;
}

Substitution Substitution::single(const std::string& var, const Term& t) {
  return make({{var, t}});
}

std::optional<Term> Substitution::lookup(const std::string& var) const {
  auto it = bindings_.find(var);
  if (it == bindings_.end()) return std::nullopt;
  return it->second;
}

Term Substitution::apply(const Term& t) const {
  if (t.is_variable()) {
    auto it = bindings_.find(t.name());
    return it == bindings_.end() ? t : it->second;
  }
  if (!t.is_application() || t.ground()) return t;
  bool changed = false;
  std::vector<Term> args;
  args.reserve(t.arity());
  for (const Term& a : t.args()) {
    Term r = apply(a);
    changed = changed || r != a;
    args.push_back(r);
  }
  return changed ? Term::app(t.name(), std::move(args)) : t;
}

Substitution Substitution::composed(const Substitution& theta) const {
  std::map<std::string, Term> out;
  for (const auto& [var, img] : bindings_) out[var] = theta.apply(img);
  for (const auto& [var, img] : theta.bindings_)
    if (!out.count(var)) out[var] = img;
  // Bindings introduced by theta may still mention this support; resolve
  // until stable (at most |support| rounds for acyclic compositions).
  for (size_t round = 0; round <= out.size(); ++round) {
    bool stable = true;
    Substitution cur;
    cur.bindings_ = out;
    for (auto& [var, img] : out) {
      Term r = cur.apply(img);
      if (r != img) {
        img = r;
        stable = false;
      }
    }
    if (stable) break;
    if (round == out.size())
      throw Error(ErrorCode::PreconditionViolation, "cyclic substitution composition");
  }
  return make(std::move(out));
}

Substitution Substitution::restricted(const std::set<std::string>& vars) const {
  std::map<std::string, Term> out;
  for (const auto& [var, img] : bindings_)
    if (vars.count(var)) out[var] = img;
  Substitution s;
  s.bindings_ = std::move(out);
  return s;
}

bool Substitution::is_ground() const {
  for (const auto& [var, img] : bindings_) {
    (void)var;
    if (!img.ground()) return false;
  }
  return true;
}

std::string Substitution::str() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& [var, img] : bindings_) {
    if (!first) os << ", ";
    first = false;
    os << '?' << var << " -> " << img;
  }
  os << '}';
  return os.str();
}

namespace {

struct TermParser {
  const std::string& text;
  size_t pos = 0;
  const std::map<std::string, unsigned>* symbols;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw Error(ErrorCode::ParseError,
                "term parse error at offset " + std::to_string(pos) + ": " + msg + " in \"" + text + "\"");
  }

  bool ident_char(char c) const {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  }

  std::string ident() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && ident_char(text[pos])) ++pos;
    if (pos == start) fail("expected identifier");
    if (std::isdigit(static_cast<unsigned char>(text[start]))) fail("identifier starts with a digit");
    return text.substr(start, pos - start);
  }

  Term term() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of input");
    char c = text[pos];
    if (c == '?') {
      ++pos;
      return Term::variable(ident());
    }
    if (c == '~') {
      ++pos;
      return Term::nonce(ident());
    }
    std::string name = ident();
    skip_ws();
    if (pos < text.size() && text[pos] == '(') {
      ++pos;
      std::vector<Term> args;
      skip_ws();
      if (pos < text.size() && text[pos] == ')') {
        ++pos;
      } else {
        while (true) {
          args.push_back(term());
          skip_ws();
          if (pos < text.size() && text[pos] == ',') {
            ++pos;
            continue;
          }
          if (pos < text.size() && text[pos] == ')') {
            ++pos;
            break;
          }
          fail("expected ',' or ')'");
        }
      }
      if (symbols) {
        auto it = symbols->find(name);
        if (it == symbols->end()) fail("undeclared symbol " + name);
        if (it->second != args.size())
          fail("symbol " + name + " expects " + std::to_string(it->second) + " arguments, got " +
               std::to_string(args.size()));
      }
      return Term::app(name, std::move(args));
    }
    if (symbols) {
      auto it = symbols->find(name);
      if (it != symbols->end()) {
        if (it->second != 0) fail("symbol " + name + " expects " + std::to_string(it->second) + " arguments");
        return Term::app(name, {});
      }
    }
    return Term::constant(name);
  }
};

}  // namespace

Term parse_term(const std::string& text, const std::map<std::string, unsigned>* symbols) {
  TermParser p{text, 0, symbols};
  Term t = p.term();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  return t;
}

}  // namespace sdeq
