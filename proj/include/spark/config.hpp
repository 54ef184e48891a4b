#pragma once

#include "spark/core.hpp"
#include "spark/density.hpp"
#include "spark/nufft.hpp"
#include "spark/recon.hpp"
#include "spark/sparkling.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace spark::config {

// Everything a pipeline run needs, with the paper's values as defaults.
struct RunConfig
{
  TrajectorySpec spec;
  bool anchor_center = true;
  density::VdsParams vds;
  density::LoupeLiteParams loupe;
  sparkling::SparklingConfig sparkling;
  recon::ReconConfig recon;
  double center_fraction = 0.2;
  nufft::Mode nufft_mode = nufft::Mode::Gridded;

  void validate() const;
};

// Flat "key = value" text, one pair per line, '#' starts a comment. Unknown or repeated keys and
// unparsable or out-of-range values throw ConfigError.
RunConfig ParseRunConfig(std::string_view text);
RunConfig LoadRunConfig(std::filesystem::path const &path);

// Documented keys in file order, with a one-line description each.
struct KeyDoc
{
  std::string key;
  std::string help;
};
std::vector<KeyDoc> Keys();

} // namespace spark::config
