#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

#include "mtlens/errors.hpp"
#include "mtlens/parallel.hpp"

namespace mtlens {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTaskName: return "MalformedTaskName";
    case ErrorCode::MissingDataset: return "MissingDataset";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DuplicateMetric: return "DuplicateMetric";
    case ErrorCode::PluginCrash: return "PluginCrash";
    case ErrorCode::PluginTimeout: return "PluginTimeout";
    case ErrorCode::SpanOutOfRange: return "SpanOutOfRange";
    case ErrorCode::MissingScores: return "MissingScores";
    case ErrorCode::WordTooShort: return "WordTooShort";
    case ErrorCode::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorCode::MissingHypotheses: return "MissingHypotheses";
    case ErrorCode::MissingVariant: return "MissingVariant";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MetricMissing: return "MetricMissing";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {
std::atomic<std::size_t> g_threads{0};
}

std::size_t default_thread_count() {
  if (auto n = g_threads.load(); n != 0) return n;
  if (const char* env = std::getenv("MTLENS_THREADS")) {
    try {
      const auto v = std::stoul(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void set_thread_count(std::size_t n) { g_threads.store(n); }

}  // namespace mtlens
