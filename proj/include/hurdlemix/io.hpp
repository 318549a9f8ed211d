#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hurdlemix/marginal.hpp"
#include "hurdlemix/model.hpp"
#include "hurdlemix/priors.hpp"
#include "hurdlemix/synthetic.hpp"
#include "hurdlemix/trace.hpp"

namespace hurdlemix {

inline constexpr const char* kVersion = "0.1.0";

using Json = nlohmann::ordered_json;

// long: subject_id,process,time,count, one row per cell.
// wide: subject_id,time,<process 1>,...,<process d>, one row per (subject, time).
enum class DataFormat { long_format, wide_format };

DataFormat data_format_from_string(const std::string& s);

// Rows may come in any order but must cover the full subject x process x time
// grid exactly once. Levels whose ids are all integers are ordered numerically,
// otherwise by first appearance. Throws DataError naming the offending row.
CountDataset read_dataset(std::istream& in, DataFormat format,
                          const std::string& source = "<input>");
CountDataset load_dataset(const std::filesystem::path& path, DataFormat format);

// Ids written as 1..n, 1..d, 1..T.
void write_dataset(std::ostream& out, const CountDataset& data, DataFormat format);
void save_dataset(const std::filesystem::path& path, const CountDataset& data,
                  DataFormat format);

struct RunConfig {
  Algorithm algorithm = Algorithm::conditional;
  Hyperparams hyperparams;
  std::uint64_t iters = 1000;
  std::uint64_t burnin = 0;
  std::uint64_t thin = 1;
  std::uint64_t seed = 1;
  MnbMode m_nb_mode;
  std::string fixed_outer;  // partition file; empty when outer labels are sampled

  void check() const;  // invalid_argument
  ChainConfig chain_config(std::vector<int> fixed) const;
  bool operator==(const RunConfig&) const = default;
};

// m_nb_mode is "truncated" or "monte_carlo" with m_nb_samples draws.
Json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected (invalid_argument).
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Partition files hold 1-based labels: either a JSON array or an object with an
// "outer" array (as written by summarize). Returned 0-based and validated to be
// contiguous in order of first appearance.
std::vector<int> load_partition(const std::filesystem::path& path, std::size_t n);

// FNV-1a 64-bit.
std::uint64_t fnv1a(const std::string& bytes);
std::uint64_t dataset_hash(const CountDataset& data);
std::string hex64(std::uint64_t v);

// One JSON object per record; c and z are written 1-based.
Json to_json(const TraceRecord& rec);
TraceRecord trace_record_from_json(const Json& j);

Json to_json(const GroundTruth& truth);
Json to_json(const SyntheticData& sim);

// Trace directory layout: manifest.json and trace.jsonl.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& dir, const RunConfig& config,
              const CountDataset& data);
  void write(const TraceRecord& rec);
  // Writes the manifest with the elapsed wall time and the record count.
  void finish(double wall_seconds, bool interrupted);

 private:
  std::filesystem::path dir_;
  std::ofstream trace_;
  Json manifest_;
  std::uint64_t kept_ = 0;
};

struct TraceDirectory {
  Json manifest;
  ChainTrace trace;
};

// A truncated final line (interrupted write) is dropped; any other malformed
// line is a DataError.
TraceDirectory read_trace_directory(const std::filesystem::path& dir);

}  // namespace hurdlemix
