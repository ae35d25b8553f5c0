#ifndef DSRGAN_RUN_CONFIG_HPP
#define DSRGAN_RUN_CONFIG_HPP

#include <stdexcept>
#include <string>

#include "dsrgan/training.hpp"

namespace dsrgan {

struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(std::string k, const std::string& message)
      : std::runtime_error(message), key(std::move(k)) {}
};

// Flat `key = value` lines. Unknown keys and duplicates are rejected with
// the offending key named; missing keys take the documented defaults.
TrainConfig parse_run_config(const std::string& text);
TrainConfig parse_run_config_file(const std::string& path);

// Comma list over {no_aux, no_progressive, no_pra, no_shared_disc, no_Lns,
// no_Lrec}; duplicates rejected; no_pra implies no_progressive.
AblationFlags parse_ablation_list(const std::string& list);

// Every key spelled out in a fixed order; the run snapshot format and the
// input to the checkpoint config hash.
std::string canonical_config_text(const TrainConfig& cfg);

}  // namespace dsrgan

#endif
