#pragma once

#include <string>

#include "tagsafe/faults.hpp"
#include "tagsafe/sim.hpp"

#include "json.hpp"

namespace tagsafe {

// All reports use insertion-ordered JSON and embed the full run
// configuration, so identical inputs serialize to identical bytes.
using json = nlohmann::ordered_json;

json config_json(const EngineConfig& config);
json replay_json(const ReplayStats& stats);
json simulate_report(const EngineConfig& config, const ReplayStats& stats);
json characterize_report(const CharacterizationReport& rep);
json detection_report_json(const FaultSpec& spec, const EngineConfig& config,
                           const DetectionReport& rep);
json storage_report_json(const SchemeModel& scheme, const StorageReport& rep);

// Flat CSV: one row per kernel plus a totals row, config columns repeated.
std::string simulate_csv(const EngineConfig& config, const ReplayStats& stats);

} // namespace tagsafe
