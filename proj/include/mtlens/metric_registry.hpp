#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtlens {

enum class Orientation { HigherBetter, LowerBetter };

/// How per-segment values become the system score.
enum class Aggregation {
  Pooled,  // recomputed from summed sufficient statistics
  Mean,
};

struct MetricInfo {
  std::string_view name;
  Orientation orientation;
  std::string_view scale;  // "0-100", "0-1", "0-25", ...
  Aggregation aggregation;
  bool reference_free = false;
  bool native = false;
};

/// Static table shared by ingestion, significance testing and the HTTP layer.
const std::vector<MetricInfo>& metric_registry();

/// Lookup by canonical name. Case and '-' vs '_' are normalized first.
const MetricInfo* find_metric(std::string_view name);
std::string canonical_metric_name(std::string_view name);

std::string_view to_string(Orientation o);
std::string_view to_string(Aggregation a);

}  // namespace mtlens
