#include "sdeq/json_io.hpp"

#include <json.hpp>

namespace sdeq {

using json = nlohmann::ordered_json;

namespace {

json derivation_json(const Derivation& d) {
  json j;
  json states = json::array();
  for (int i = 0; i < d.size(); ++i) {
    const State& s = d.states[i];
    json st;
    st["index"] = i;
    st["kind"] = to_string(s.kind);
    st["var"] = d.vars[i];
    switch (s.kind) {
      case StateKind::Memory: st["term"] = s.value->str(); break;
      case StateKind::Deduction:
        st["symbol"] = s.symbol;
        st["args"] = s.args;
        break;
      case StateKind::Reuse: st["target"] = s.target; break;
      case StateKind::Reception: break;
    }
    states.push_back(std::move(st));
  }
  j["states"] = std::move(states);
  json order = json::array();
  {
    auto edges = d.order;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (auto [a, b] : edges) order.push_back(json::array({a, b}));
  }
  j["order"] = std::move(order);
  j["inputs"] = std::vector<int>(d.inputs.begin(), d.inputs.end());
  json outs = json::array();
  for (auto [i, m] : d.outputs) outs.push_back(json{{"index", i}, {"mult", m}});
  j["outputs"] = std::move(outs);
  json tests = json::array();
  for (auto [a, b] : d.tests) tests.push_back(json::array({a, b}));
  j["tests"] = std::move(tests);
  json know = json::array();
  for (const Term& t : d.knowledge()) know.push_back(t.str());
  j["knowledge"] = std::move(know);
  return j;
}

Derivation derivation_unjson(const json& j) {
  Derivation d;
  for (const json& st : j.at("states")) {
    State s;
    std::string kind = st.at("kind").get<std::string>();
    if (kind == "memory") {
      s.kind = StateKind::Memory;
      s.value = parse_term(st.at("term").get<std::string>());
    } else if (kind == "reception") {
      s.kind = StateKind::Reception;
    } else if (kind == "deduction") {
      s.kind = StateKind::Deduction;
      s.symbol = st.at("symbol").get<std::string>();
      s.args = st.at("args").get<std::vector<int>>();
    } else if (kind == "reuse") {
      s.kind = StateKind::Reuse;
      s.target = st.at("target").get<int>();
    } else {
      throw Error(ErrorCode::ParseError, "unknown state kind " + kind);
    }
    d.states.push_back(std::move(s));
    d.vars.push_back(st.at("var").get<std::string>());
  }
  for (const json& e : j.at("order")) d.order.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  for (const json& i : j.at("inputs")) d.inputs.insert(i.get<int>());
  for (const json& o : j.at("outputs"))
    d.outputs[o.at("index").get<int>()] = o.at("mult").get<int>();
  for (const json& t : j.at("tests")) d.tests.push_back({t.at(0).get<int>(), t.at(1).get<int>()});
  return d;
}

json connection_json(const Connection& phi) {
  json j = json::array();
  for (const ConnLink& l : phi.links)
    j.push_back(json{{"in", json::array({l.input.side, l.input.index})},
                     {"out", json::array({l.output.side, l.output.index})}});
  return j;
}

Connection connection_unjson(const json& j) {
  Connection phi;
  for (const json& l : j) {
    ConnLink link;
    link.input = {l.at("in").at(0).get<int>(), l.at("in").at(1).get<int>()};
    link.output = {l.at("out").at(0).get<int>(), l.at("out").at(1).get<int>()};
    phi.links.push_back(link);
  }
  return phi;
}

json trace_json(const std::map<std::string, Term>& trace) {
  json j = json::object();
  for (const auto& [v, t] : trace) j[v] = t.str();
  return j;
}

std::map<std::string, Term> trace_unjson(const json& j) {
  std::map<std::string, Term> out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = parse_term(it.value());
  return out;
}

json probe_json(const TestProbe& p) {
  json j;
  j["kind"] = p.kind == TestProbe::Kind::Equality ? "equality" : "deduction";
  if (p.kind == TestProbe::Kind::Deduction) j["symbol"] = p.symbol;
  j["slots"] = p.slots;
  return j;
}

TestProbe probe_unjson(const json& j) {
  TestProbe p;
  std::string kind = j.at("kind").get<std::string>();
  p.kind = kind == "equality" ? TestProbe::Kind::Equality : TestProbe::Kind::Deduction;
  if (p.kind == TestProbe::Kind::Deduction) p.symbol = j.at("symbol").get<std::string>();
  p.slots = j.at("slots").get<std::vector<int>>();
  return p;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "malformed JSON document");
  return j;
}

}  // namespace

std::string derivation_to_json(const Derivation& d) { return dump(derivation_json(d)); }

Derivation derivation_from_json(const std::string& text) { return derivation_unjson(parse(text)); }

std::string connection_to_json(const Connection& phi) { return dump(connection_json(phi)); }

Connection connection_from_json(const std::string& text) { return connection_unjson(parse(text)); }

std::string witness_to_json(const Solution& sol, const std::map<std::string, Term>& trace) {
  json j;
  j["type"] = "solution";
  j["asd"] = derivation_json(sol.asd);
  j["connection"] = connection_json(sol.phi);
  j["trace"] = trace_json(trace);
  return dump(j);
}

Witness witness_from_json(const std::string& text) {
  json j = parse(text);
  Witness w;
  w.solution.asd = derivation_unjson(j.at("asd"));
  w.solution.phi = connection_unjson(j.at("connection"));
  w.trace = trace_unjson(j.at("trace"));
  return w;
}

std::string counterexample_to_json(const Counterexample& cex, int direction) {
  json j;
  j["type"] = "counterexample";
  j["direction"] = direction;
  j["probe"] = cex.probe ? probe_json(*cex.probe) : json(nullptr);
  j["asd"] = derivation_json(cex.solution.asd);
  j["connection"] = connection_json(cex.solution.phi);
  j["accepted_trace"] = trace_json(cex.accepted_trace);
  j["rejected_trace"] = trace_json(cex.rejected_trace);
  if (cex.failing)
    j["failing"] = json::array({cex.failing->first.str(), cex.failing->second.str()});
  else
    j["failing"] = json(nullptr);
  j["rejected_not_closed"] = cex.rejected_not_closed;
  return dump(j);
}

ParsedCounterexample counterexample_from_json(const std::string& text) {
  json j = parse(text);
  ParsedCounterexample out;
  out.direction = j.at("direction").get<int>();
  if (!j.at("probe").is_null()) out.cex.probe = probe_unjson(j.at("probe"));
  out.cex.solution.asd = derivation_unjson(j.at("asd"));
  out.cex.solution.phi = connection_unjson(j.at("connection"));
  out.cex.accepted_trace = trace_unjson(j.at("accepted_trace"));
  out.cex.rejected_trace = trace_unjson(j.at("rejected_trace"));
  if (!j.at("failing").is_null())
    out.cex.failing = {parse_term(j.at("failing").at(0).get<std::string>()),
                       parse_term(j.at("failing").at(1).get<std::string>())};
  out.cex.rejected_not_closed = j.at("rejected_not_closed").get<bool>();
  return out;
}

std::string solution_set_to_json(const SolutionSet& set) {
  json j;
  j["type"] = "solutions";
  j["complete"] = set.complete;
  json arr = json::array();
  for (const Solution& s : set.solutions) {
    json e;
    e["asd"] = derivation_json(s.asd);
    e["connection"] = connection_json(s.phi);
    arr.push_back(std::move(e));
  }
  j["solutions"] = std::move(arr);
  return dump(j);
}

}  // namespace sdeq
