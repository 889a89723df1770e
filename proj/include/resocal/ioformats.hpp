// Text formats: Touchstone v1 traces, calibration kits, error terms and
// power-sweep manifests.
#pragma once

#include "resocal/core.hpp"
#include "resocal/onecal.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace resocal::io {

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

enum class FrequencyUnit { Hz, kHz, MHz, GHz };
enum class DataFormat { RI, MA, DB };

double unit_scale(FrequencyUnit u);
const char* to_string(FrequencyUnit u);
const char* to_string(DataFormat f);

struct OptionLine {
  FrequencyUnit unit = FrequencyUnit::GHz;
  DataFormat format = DataFormat::MA;
  double reference = 50.0;  // Ohm
};

/// Parsed Touchstone v1 file. Values are always complex (RI) and frequencies in Hz.
struct TouchstoneDocument {
  OptionLine options;
  std::vector<std::string> comments;  // text following '!' on comment-only lines
  int ports = 1;
  VectorX<double> frequency;     // Hz
  Eigen::MatrixXcd data;         // one row per point; columns S11 (1-port) or S11 S21 S12 S22

  Eigen::Index size() const noexcept { return frequency.size(); }

  /// Column (i, j), 1-based port indices.
  ComplexTrace trace(int i, int j) const;

  /// S21 for 2-port documents, S11 otherwise.
  ComplexTrace primary_trace() const;

  static TouchstoneDocument one_port(const ComplexTrace& t, std::vector<std::string> comments = {},
                                     FrequencyUnit unit = FrequencyUnit::GHz, double reference = 50.0);
};

/// `ports` = 0 infers the port count from the first data row (3 or 9 columns).
TouchstoneDocument parse_touchstone(std::string_view text, int ports = 0);

/// RI output, fixed scientific notation; throws ParameterError when there are no points.
std::string write_touchstone(const TouchstoneDocument& doc);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Port count taken from a .s1p/.s2p extension, inferred otherwise.
TouchstoneDocument read_touchstone(const std::filesystem::path& path);

/// Primary trace of a Touchstone file.
ComplexTrace load_trace(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Calibration kits
//
//   RESOCAL CALKIT 1
//   name = ...
//   temperature = ...
//   date = ...
//   [standard open]
//   # GHz S RI R 50
//   4.0 1.0 0.0
//   [end]
//   ... (short, load)

onecal::CalKit parse_calkit(std::string_view text, double conditioning_floor = onecal::kDefaultConditioningFloor);
std::string write_calkit(const onecal::CalKit& kit, bool include_date = true);
onecal::CalKit load_calkit(const std::filesystem::path& path,
                           double conditioning_floor = onecal::kDefaultConditioningFloor);

/// Kit built from three loose one-port Touchstone files.
onecal::CalKit load_calkit_files(const std::filesystem::path& open, const std::filesystem::path& short_,
                                 const std::filesystem::path& load, onecal::CalKitMetadata meta = {},
                                 double conditioning_floor = onecal::kDefaultConditioningFloor);

// Error terms: same layout with header RESOCAL ERRORTERMS 1 and blocks
// [term e00], [term e11], [term e01e10].

onecal::OnePortErrorTerms parse_error_terms(std::string_view text);
std::string write_error_terms(const onecal::OnePortErrorTerms& terms, const onecal::CalKitMetadata& meta = {},
                              bool include_date = true);
onecal::OnePortErrorTerms load_error_terms(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Power sweeps and CSV

struct PowerTrace {
  double power_dbm = 0;
  ComplexTrace trace;
};

/// Manifest forms:
///   power_dbm,file                      (paths relative to `base_dir`)
///   power_dbm,frequency_hz,re,im        (rows grouped by power)
/// Result is sorted by descending power.
std::vector<PowerTrace> parse_power_sweep(std::string_view text, const std::filesystem::path& base_dir = {});
std::vector<PowerTrace> load_power_sweep(const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index of `name`; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
};

/// Comma-separated, no quoting; blank lines and lines starting with '#' are skipped.
CsvTable parse_csv(std::string_view text);

/// Strict full-token number parse; throws ParseError with `line`.
double parse_number(std::string_view token, std::size_t line);

}  // namespace resocal::io
