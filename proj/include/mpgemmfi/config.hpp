#pragma once

#include <iosfwd>
#include <string>

#include "mpgemmfi/campaign.hpp"

// Campaign configs as INI text.  Four sections, all optional, every key
// optional with the library default:
//
//   [workload]  type (random_gemm | mlp), format, seed,
//               m n k dist              (random_gemm)
//               layers dataset weight_seed  (mlp, layers like 64-128-64-10)
//   [fault]     bits (1|2|4), mode (random | fixed), position
//   [guard]     kind (none | bound_check | range_check_max | range_check_flip)
//   [campaign]  trials, master_seed, tolerance
//
// '#' and ';' open comments.  Parsing is strict: an unknown section or key,
// a key from the wrong workload type, a duplicate, or a malformed value is
// an error naming the offender, never a silent skip.

namespace mpgemmfi {

// Applies the text onto base, so a partial config (or a synthesized one
// from command-line flags) overrides just the keys it names.
CampaignConfig parse_campaign_config(std::istream& text,
                                     const std::string& origin,
                                     const CampaignConfig& base = {});
CampaignConfig load_campaign_config(const std::string& path);

}  // namespace mpgemmfi
