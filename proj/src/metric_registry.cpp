#include "mtlens/metric_registry.hpp"

#include <algorithm>

namespace mtlens {

const std::vector<MetricInfo>& metric_registry() {
  using enum Orientation;
  using enum Aggregation;
  static const std::vector<MetricInfo> table = {
      {"bleu", HigherBetter, "0-100", Pooled, false, true},
      {"chrf", HigherBetter, "0-100", Pooled, false, true},
      {"ter", LowerBetter, "0-inf", Pooled, false, true},
      {"comet", HigherBetter, "0-1", Mean, false, false},
      {"comet_kiwi", HigherBetter, "0-1", Mean, true, false},
      {"bleurt", HigherBetter, "0-1", Mean, false, false},
      {"metricx", LowerBetter, "0-25", Mean, false, false},
      {"metricx_qe", LowerBetter, "0-25", Mean, true, false},
      {"xcomet", HigherBetter, "0-1", Mean, false, false},
      {"xcomet_qe", HigherBetter, "0-1", Mean, true, false},
      {"mutox", HigherBetter, "0-1", Mean, true, false},
      {"detoxify", HigherBetter, "0-1", Mean, true, false},
  };
  return table;
}

std::string canonical_metric_name(std::string_view name) {
  std::string out(name);
  for (auto& c : out) {
    if (c == '-') c = '_';
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  if (out == "cometkiwi") return "comet_kiwi";
  return out;
}

const MetricInfo* find_metric(std::string_view name) {
  const auto key = canonical_metric_name(name);
  const auto& t = metric_registry();
  const auto it = std::find_if(t.begin(), t.end(), [&](const MetricInfo& m) { return m.name == key; });
  return it == t.end() ? nullptr : &*it;
}

std::string_view to_string(Orientation o) { return o == Orientation::HigherBetter ? "higher" : "lower"; }

std::string_view to_string(Aggregation a) { return a == Aggregation::Pooled ? "pooled" : "mean"; }

}  // namespace mtlens
