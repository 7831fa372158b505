#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gradlens/embeddings.hpp"
#include "gradlens/lemma.hpp"
#include "gradlens/simulator.hpp"
#include "gradlens/trainer.hpp"

namespace gradlens::cli {

// Unreadable or malformed input file.
class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 17 significant digits; "inf", "-inf", "nan" for non-finite values.
std::string format_double(double x);

// Writes to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::string grid_csv(const SweepGrid& grid);
std::string curves_csv(const WeightCurves& curves);
std::string trace_csv(const TrainTrace& trace);
std::string histogram_csv(const MinRatioHistogram& hist);

// Binary dump: "GLNS1", N and D as little-endian uint64, then N*D
// little-endian doubles of anchors followed by N*D of positives.
std::string encode_embeddings(const Matrix& anchors, const Matrix& positives);
EmbeddingBatch decode_embeddings(std::string_view bytes);

}  // namespace gradlens::cli
