// The engine is generic over the payload. Here a transaction carries a
// string that every stage appends its name to.

#include <pipekit/kernel/engine.hpp>

#include <iostream>
#include <string>

struct Note {
  std::string text;
};

int main() {
  using namespace pipekit;

  auto stages = declare_stages({"fetch", "decode", "exec"});
  Route route = flatten(stages["fetch"] >> stages["decode"] >> stages["exec"] * 2);
  Netlist net = elaborate(route, stages);

  kernel::EngineConfig<Note> cfg;
  for (const auto& s : stages) {
    kernel::StageBehavior<Note> b;
    b.apply = [name = s.name](const Note& n) { return Note{n.text + "/" + name}; };
    b.timing = Timed{2};
    cfg.stages.emplace(s.name, b);
  }
  cfg.issue = IssueGreedy{};

  kernel::Engine<Note> engine(net, cfg);
  auto result = engine.run({kernel::Batch<Note>{0, {Note{"a"}, Note{"b"}, Note{"c"}}}});
  for (const auto& t : result.trace)
    std::cout << t.id << ": " << t.payload.text << " exits at " << t.exited_at.ns << " ns\n";
  std::cout << "stalls: " << result.stats.total_stalls << "\n";
}
