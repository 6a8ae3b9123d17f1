#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vbcp/model.hpp"

namespace vbcp {

using Json = nlohmann::json;

/// Problem file layout (JSON):
///   d        : number of modes
///   n        : mode sizes, length d
///   m        : side-info widths, length d
///   G        : per mode, flat row-major list of n_l * m_l reals
///   omega    : list of {"index": [i_1..i_d], "value": y}, 0-based indices
///   k        : rank prediction
///   hyper    : {"a_j": scalar-or-length-k list, "b_j": same, "a0": r, "b0": r}
/// Unknown top-level keys other than "truth" and "meta" are rejected.
Json problem_to_json(const CompletionProblem& problem);
CompletionProblem problem_from_json(const Json& j);

/// Snapshot layout (JSON): mu[l] (column-stacked factor means), A[l]
/// (flat row-major covariances), c[j], d[j], c0, d0, current_k, iteration,
/// plus the carried per-component priors a_j, b_j so that a reloaded state
/// resumes identically. Round-trips losslessly (shortest-round-trip reals).
Json snapshot_to_json(const PosteriorState& state);
PosteriorState snapshot_from_json(const Json& j);

/// File helpers; all failures surface as IoError naming the path.
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

CompletionProblem read_problem(const std::filesystem::path& path);
void write_problem(const std::filesystem::path& path,
                   const CompletionProblem& problem);

/// Formats a double as %.17g — enough digits to round-trip exactly.
std::string format_double(double x);

/// Minimal CSV emitter: header row at construction, one row per call.
/// Doubles are %.17g, integers decimal; fields never need quoting here
/// (headers and string cells must not contain commas or newlines).
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::string>& header);

  class Row {
   public:
    explicit Row(CsvWriter* w) : writer_(w) {}
    Row& operator<<(double x);
    Row& operator<<(std::int64_t x);
    Row& operator<<(const std::string& s);
    // Flushes the row; may throw IoError unless already unwinding.
    ~Row() noexcept(false);

   private:
    CsvWriter* writer_;
    std::vector<std::string> cells_;
    friend class CsvWriter;
  };

  Row row() { return Row(this); }
  void write_row(const std::vector<std::string>& cells);
  std::size_t columns() const { return columns_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t columns_ = 0;
};

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// Digest of a configuration: FNV-1a of the canonical (sorted-key, no
/// whitespace) JSON dump, as 16 lowercase hex digits. Identical configs
/// give identical digests regardless of key order in the source file.
std::string config_digest(const Json& config);

}  // namespace vbcp
