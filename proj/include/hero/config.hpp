/**
 * \file config.hpp
 * \brief JSON run configuration covering every module.
 */
#pragma once

#include <cstdint>
#include <string>

#include "hero/network.hpp"
#include "hero/simworld.hpp"
#include "hero/trainer.hpp"

namespace hero {

struct RunConfig {
  Architecture model;
  PipelineConfig pipeline;
  SimConfig sim;

  /** \brief Throws ValidationError naming the offending field */
  void validate() const;
};

/** \brief Parses JSON text; missing keys take defaults, unknown keys are errors */
RunConfig parse_config(const std::string& text);
/** \brief parse_config on a file, then HERO_SEED (if set) replaces train.seed */
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);
void write_config(const std::string& path, const RunConfig& cfg);

}  // namespace hero
