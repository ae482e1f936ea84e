#pragma once

#include "oracles.hpp"

#include <pipekit/dsl.hpp>

#include <string>
#include <vector>

inline oracle::Steps steps_of(const pipekit::Route& r) {
  oracle::Steps out;
  for (const auto& st : r.steps) {
    std::vector<std::string> names;
    for (const auto& s : st)
      names.push_back(s.name);
    out.push_back(names);
  }
  return out;
}

inline pipekit::StageSet six_stages() { return pipekit::declare_stages(oracle::stage_names(6)); }

inline pipekit::Route route_of(const std::string& text, const pipekit::StageSet& decls) {
  return pipekit::flatten(pipekit::parse(text, decls));
}
