#pragma once

// Runs a validated configuration on (orig, data) transactions.

#include <pipekit/elaborate.hpp>
#include <pipekit/kernel/engine.hpp>
#include <pipekit/policy.hpp>

#include <optional>
#include <string>
#include <vector>

namespace pipekit {

struct InputBatch {
  std::size_t route = 0; // index into CheckedConfig::routes
  std::vector<double> values;
};

struct SimOptions {
  IssueSpec issue = IssueGreedy{};
  ArbitrationSpec arbitration = ArbitrationSpec::ArrivalOrder;
  std::optional<std::uint64_t> horizon_ns;
};

using SampleResult = kernel::RunResult<Sample>;

inline kernel::EngineConfig<Sample> engine_config(const CheckedConfig& cfg, const SimOptions& opt) {
  kernel::EngineConfig<Sample> ec;
  for (const auto& c : cfg.stages) {
    if (!c)
      continue;
    kernel::StageBehavior<Sample> b;
    b.apply = [f = c->function](const Sample& s) { return f(s); };
    b.timing = c->timing;
    b.exec = c->exec;
    ec.stages.emplace(c->stage.name, std::move(b));
  }
  if (cfg.join)
    ec.join = [j = *cfg.join](std::span<const Sample> copies) { return merge(j, copies); };
  ec.issue = opt.issue;
  ec.arbitration = opt.arbitration;
  ec.horizon_ns = opt.horizon_ns;
  return ec;
}

/// Entry transactions start with data = 0 and orig = the input value.
inline SampleResult simulate(const Netlist& netlist, const CheckedConfig& cfg,
                             const std::vector<InputBatch>& inputs, const SimOptions& opt = {}) {
  std::vector<kernel::Batch<Sample>> batches;
  for (const auto& in : inputs) {
    kernel::Batch<Sample> b;
    b.route = in.route;
    for (double v : in.values)
      b.inputs.push_back(Sample{v, 0});
    batches.push_back(std::move(b));
  }
  kernel::Engine<Sample> engine(netlist, engine_config(cfg, opt));
  auto result = engine.run(batches);
  result.warnings.insert(result.warnings.begin(), cfg.warnings.begin(), cfg.warnings.end());
  return result;
}

inline SampleResult simulate(const CheckedConfig& cfg, const std::vector<double>& inputs,
                             const SimOptions& opt = {}) {
  return simulate(elaborate(cfg), cfg, {InputBatch{0, inputs}}, opt);
}

} // namespace pipekit
