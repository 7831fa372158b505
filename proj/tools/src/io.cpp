#include "gradlens/cli/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gradlens::cli {

namespace {

constexpr std::string_view kMagic = "GLNS1";

static_assert(std::endian::native == std::endian::little, "embedding dumps assume a little-endian host");

template <typename T>
void append_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_raw(std::string_view bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw FileError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string grid_csv(const SweepGrid& grid) {
  std::string out = "mu_pos,mu_neg,value,masked\n";
  for (std::size_t i = 0; i < grid.mu_pos_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.mu_neg_axis.size(); ++j) {
      out += format_double(grid.mu_pos_axis[i]) + ',' + format_double(grid.mu_neg_axis[j]) + ',' +
             format_double(grid.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) +
             ',' + (grid.masked(i, j) ? '1' : '0') + '\n';
    }
  }
  return out;
}

std::string curves_csv(const WeightCurves& curves) {
  std::string out = "mu_neg,tau,fraction\n";
  for (std::size_t t = 0; t < curves.taus.size(); ++t) {
    for (std::size_t j = 0; j < curves.mu_neg_axis.size(); ++j) {
      out += format_double(curves.mu_neg_axis[j]) + ',' + format_double(curves.taus[t]) + ',' +
             format_double(curves.fraction(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j))) +
             '\n';
    }
  }
  return out;
}

std::string trace_csv(const TrainTrace& trace) {
  std::string out = "step,mu_pos,mu_neg,sigma_pos,sigma_neg,mean_pos_cos,hardest_fraction\n";
  for (const auto& rec : trace.records) {
    const auto& s = rec.stats;
    out += std::to_string(rec.step) + ',' + format_double(s.mu_pos_hat) + ',' + format_double(s.mu_neg_hat) +
           ',' + format_double(s.sigma_pos_hat) + ',' + format_double(s.sigma_neg_hat) + ',' +
           format_double(s.mean_pos_cos) + ',' + format_double(s.hardest_weight_fraction) + '\n';
  }
  return out;
}

std::string histogram_csv(const MinRatioHistogram& hist) {
  std::string out = "bin_low,bin_high,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    out += format_double(hist.bin_edges[b]) + ',' + format_double(hist.bin_edges[b + 1]) + ',' +
           std::to_string(hist.counts[b]) + '\n';
  }
  return out;
}

std::string encode_embeddings(const Matrix& anchors, const Matrix& positives) {
  std::string out(kMagic);
  append_raw(out, static_cast<std::uint64_t>(anchors.rows()));
  append_raw(out, static_cast<std::uint64_t>(anchors.cols()));
  for (const Matrix* m : {&anchors, &positives}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index k = 0; k < m->cols(); ++k) append_raw(out, (*m)(i, k));
    }
  }
  return out;
}

EmbeddingBatch decode_embeddings(std::string_view bytes) {
  const std::size_t header = kMagic.size() + 2 * sizeof(std::uint64_t);
  if (bytes.size() < header || bytes.substr(0, kMagic.size()) != kMagic) {
    throw FileError("not an embedding dump (bad magic or truncated header)");
  }
  const auto n = read_raw<std::uint64_t>(bytes, kMagic.size());
  const auto d = read_raw<std::uint64_t>(bytes, kMagic.size() + sizeof(std::uint64_t));
  if (n == 0 || d == 0 || n > (1ULL << 32) || d > (1ULL << 20)) throw FileError("implausible dump shape");
  if (bytes.size() != header + 2 * n * d * sizeof(double)) {
    throw FileError("embedding dump size does not match its header");
  }
  std::size_t offset = header;
  auto fill = [&](Matrix& m) {
    m.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        m(i, k) = read_raw<double>(bytes, offset);
        offset += sizeof(double);
      }
    }
  };
  Matrix anchors, positives;
  fill(anchors);
  fill(positives);
  try {
    return EmbeddingBatch(std::move(anchors), std::move(positives));
  } catch (const Error& e) {
    throw FileError(std::string("embedding dump rejected: ") + e.what());
  }
}

}  // namespace gradlens::cli
