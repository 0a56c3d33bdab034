#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sdeq/equivalence.hpp"
#include "sdeq/frontend.hpp"
#include "sdeq/json_io.hpp"
#include "sdeq/solver.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sdeq::Error(sdeq::ErrorCode::IoError, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sdeq::Error(sdeq::ErrorCode::IoError, "cannot write " + path);
  out << content;
}

sdeq::SolverConfig solver_config(int bound) {
  sdeq::SolverConfig cfg;
  if (bound >= 0) cfg.max_deductions = bound;
  return cfg;
}

std::string describe(const sdeq::Counterexample& cex, int direction) {
  std::ostringstream os;
  os << "distinguishing " << (cex.probe ? sdeq::to_string(*cex.probe) : std::string("run"))
     << " accepted by derivation " << (direction == 0 ? "A" : "B") << " only";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symbolic reachability and equivalence for protocol derivations"};
  app.require_subcommand(1);

  std::string theory_path, proto_a, proto_b, term_text, derivation_path, witness_path;
  int bound = -1;
  bool ground = false;

  CLI::App* sat = app.add_subcommand("check-sat", "decide satisfiability of a narration");
  sat->add_option("theory", theory_path)->required();
  sat->add_option("protocol", proto_a)->required();
  sat->add_flag("--ground", ground, "require and use forced ground inputs");
  sat->add_option("--bound", bound, "attacker deduction bound");
  sat->add_option("--witness", witness_path, "write the witness JSON here");

  CLI::App* equiv = app.add_subcommand("check-equiv", "decide equivalence of two narrations");
  equiv->add_option("theory", theory_path)->required();
  equiv->add_option("protocolA", proto_a)->required();
  equiv->add_option("protocolB", proto_b)->required();
  equiv->add_option("--bound", bound, "attacker deduction bound");
  equiv->add_option("--witness", witness_path, "write the counterexample JSON here");

  CLI::App* solve = app.add_subcommand("solve", "dump the complete solution set of a narration");
  solve->add_option("theory", theory_path)->required();
  solve->add_option("protocol", proto_a)->required();
  solve->add_option("--bound", bound, "attacker deduction bound");

  CLI::App* tracecmd = app.add_subcommand("trace", "evaluate a closed derivation");
  tracecmd->add_option("theory", theory_path)->required();
  tracecmd->add_option("derivation", derivation_path)->required();

  CLI::App* norm = app.add_subcommand("normalize", "normal form of a ground term");
  norm->add_option("theory", theory_path)->required();
  norm->add_option("term", term_text)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    auto [spec, D] = sdeq::parse_theory(read_file(theory_path));
    (void)spec;

    if (sat->parsed()) {
      sdeq::NarrationSpec ns = sdeq::parse_narration(read_file(proto_a), D);
      sdeq::Derivation hsd = sdeq::narration_composite(ns, D);
      sdeq::SatResult r = sdeq::check_sat(hsd, D, solver_config(bound), ground);
      switch (r.status) {
        case sdeq::SatResult::Status::Sat: {
          std::cout << "SAT\n";
          sdeq::ConnectResult c = sdeq::connect(hsd, r.witness->asd, r.witness->phi, D);
          sdeq::TraceResult tr = sdeq::trace(c.derivation, D);
          if (!witness_path.empty())
            write_file(witness_path, sdeq::witness_to_json(*r.witness, tr.values));
          return 0;
        }
        case sdeq::SatResult::Status::Unsat:
          std::cout << "UNSAT\n";
          return 1;
        case sdeq::SatResult::Status::Unknown:
          std::cout << "UNKNOWN at bound\n";
          return 3;
      }
    }

    if (equiv->parsed()) {
      sdeq::NarrationSpec na = sdeq::parse_narration(read_file(proto_a), D);
      sdeq::NarrationSpec nb = sdeq::parse_narration(read_file(proto_b), D);
      sdeq::EquivConfig cfg;
      cfg.solver = solver_config(bound);
      sdeq::EquivResult r = sdeq::check_equiv(sdeq::narration_composite(na, D),
                                              sdeq::narration_composite(nb, D), D, cfg);
      switch (r.verdict) {
        case sdeq::EquivResult::Verdict::Equivalent:
          std::cout << "EQUIVALENT\n";
          return 0;
        case sdeq::EquivResult::Verdict::Inequivalent:
          std::cout << "INEQUIVALENT: " << describe(*r.counterexample, r.direction) << "\n";
          if (!witness_path.empty())
            write_file(witness_path, sdeq::counterexample_to_json(*r.counterexample, r.direction));
          return 1;
        case sdeq::EquivResult::Verdict::Unknown:
          std::cout << "UNKNOWN at bound\n";
          return 3;
        default:
          break;
      }
      return 2;
    }

    if (solve->parsed()) {
      sdeq::NarrationSpec ns = sdeq::parse_narration(read_file(proto_a), D);
      sdeq::Derivation hsd = sdeq::narration_composite(ns, D);
      sdeq::SolutionSet set = sdeq::solve_complete(hsd, D, solver_config(bound));
      std::cout << sdeq::solution_set_to_json(set);
      return set.complete ? 0 : 3;
    }

    if (tracecmd->parsed()) {
      sdeq::Derivation d = sdeq::derivation_from_json(read_file(derivation_path));
      sdeq::require_valid(d, D);
      sdeq::TraceResult tr = sdeq::trace(d, D);
      if (!tr.satisfiable) {
        auto [i, j] = *tr.failing_test;
        std::cout << "UNSAT: test " << i << " = " << j << " (" << tr.values.at(d.vars[i])
                  << " != " << tr.values.at(d.vars[j]) << ")\n";
        return 1;
      }
      for (int i : d.topo_order()) {
        if (d.states[i].kind == sdeq::StateKind::Reuse) continue;
        std::cout << "?" << d.vars[i] << " = " << tr.values.at(d.vars[i]) << "\n";
      }
      return 0;
    }

    if (norm->parsed()) {
      sdeq::Term t = sdeq::parse_term(term_text, nullptr);
      std::cout << D.normalize(t) << "\n";
      return 0;
    }
  } catch (const sdeq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
