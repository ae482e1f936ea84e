// Declares three stages, routes transactions through them with the embedded
// operators, and prints the analysis and the simulated results.

#include <pipekit/analysis.hpp>
#include <pipekit/report.hpp>
#include <pipekit/simulate.hpp>

#include <iostream>

int main() {
  using namespace pipekit;

  auto stages = declare_stages({"S1", "S2", "S3"});
  const auto& S1 = stages["S1"];
  const auto& S2 = stages["S2"];
  const auto& S3 = stages["S3"];

  PipeExpr pipe = S1 >> S2 >> S3;

  auto cfg = validate_config(stages, {{"poly", pipe}},
                             {{S1, FunctionSpec::parse("data + 2*sqr(orig)")},
                              {S2, FunctionSpec::parse("data + 4*orig")},
                              {S3, FunctionSpec::parse("data - 7")}});

  std::cout << analysis_text(analyze(pipe, stages, "poly")) << "\n";

  auto result = simulate(cfg, {0, 1, 2, 3});
  for (const auto& t : result.trace)
    std::cout << "f(" << t.payload.orig << ") = " << t.payload.data << "  [" << t.injected_at.ns << " -> "
              << t.exited_at.ns << " ns]\n";

  // Feedback: the same stage reused later in the route.
  PipeExpr revisit = S1 >> S2 >> S3 >> S1 >> S3 * 2 >> S1 >> S2;
  std::cout << "\n" << analysis_text(analyze(revisit, stages, "revisit"));
}
