#include "resocal/ioformats.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace resocal::io {

namespace {

struct Line {
  std::size_t no = 0;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text, std::size_t first_no = 1) {
  std::vector<Line> out;
  std::size_t no = first_no;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view l = text.substr(0, nl);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    out.push_back({no++, l});
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

OptionLine parse_option_line(std::string_view body, std::size_t line) {
  OptionLine opt;
  const auto toks = tokens(body);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string t = lower(toks[i]);
    if (t == "hz") opt.unit = FrequencyUnit::Hz;
    else if (t == "khz") opt.unit = FrequencyUnit::kHz;
    else if (t == "mhz") opt.unit = FrequencyUnit::MHz;
    else if (t == "ghz") opt.unit = FrequencyUnit::GHz;
    else if (t == "s") continue;
    else if (t == "y" || t == "z" || t == "h" || t == "g")
      throw ParseError("parameter type '" + std::string(toks[i]) + "' is not supported (S only)", line);
    else if (t == "ri") opt.format = DataFormat::RI;
    else if (t == "ma") opt.format = DataFormat::MA;
    else if (t == "db") opt.format = DataFormat::DB;
    else if (t == "r") {
      if (i + 1 >= toks.size()) throw ParseError("option 'R' needs a reference resistance", line);
      opt.reference = parse_number(toks[++i], line);
      if (!(opt.reference > 0)) throw ParseError("reference resistance must be positive", line);
    } else {
      throw ParseError("unknown option token '" + std::string(toks[i]) + "'", line);
    }
  }
  return opt;
}

std::complex<double> to_complex(double a, double b, DataFormat f) {
  switch (f) {
    case DataFormat::RI: return {a, b};
    case DataFormat::MA: return std::polar(a, b * kPi / 180.0);
    case DataFormat::DB: return std::polar(std::pow(10.0, a / 20.0), b * kPi / 180.0);
  }
  return {};
}

TouchstoneDocument parse_touchstone_lines(const std::vector<Line>& lines, int ports) {
  if (ports != 0 && ports != 1 && ports != 2) throw ParameterError("only 1- and 2-port files are supported");
  TouchstoneDocument doc;
  bool have_options = false;
  std::vector<double> freq;
  std::vector<std::array<std::complex<double>, 4>> rows;
  std::size_t columns = ports == 0 ? 0 : (ports == 1 ? 3 : 9);

  for (const auto& ln : lines) {
    std::string_view s = ln.text;
    const auto bang = s.find('!');
    if (bang != std::string_view::npos) {
      if (trim(s.substr(0, bang)).empty()) {
        doc.comments.emplace_back(s.substr(bang + 1));
        continue;
      }
      s = s.substr(0, bang);
    }
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '#') {
      // only the first option line counts
      if (!have_options) doc.options = parse_option_line(s.substr(1), ln.no);
      have_options = true;
      continue;
    }
    const auto toks = tokens(s);
    if (columns == 0) {
      if (toks.size() == 3) columns = 3;
      else if (toks.size() == 9) columns = 9;
      else
        throw ParseError("cannot infer port count from a row with " + std::to_string(toks.size()) + " columns",
                         ln.no);
    }
    if (toks.size() != columns)
      throw ParseError("expected " + std::to_string(columns) + " columns, found " + std::to_string(toks.size()),
                       ln.no);
    const double f = parse_number(toks[0], ln.no) * unit_scale(doc.options.unit);
    if (!(f > 0)) throw ParseError("frequency must be positive", ln.no);
    if (!freq.empty() && !(f > freq.back())) throw ParseError("frequency is not strictly increasing", ln.no);
    std::array<std::complex<double>, 4> row{};
    for (std::size_t k = 0; k < (columns - 1) / 2; ++k)
      row[k] = to_complex(parse_number(toks[2 * k + 1], ln.no), parse_number(toks[2 * k + 2], ln.no),
                          doc.options.format);
    freq.push_back(f);
    rows.push_back(row);
  }

  doc.ports = columns == 9 ? 2 : 1;
  const auto n = static_cast<Eigen::Index>(freq.size());
  const Eigen::Index ncol = doc.ports == 2 ? 4 : 1;
  doc.frequency.resize(n);
  doc.data.resize(n, ncol);
  for (Eigen::Index i = 0; i < n; ++i) {
    doc.frequency[i] = freq[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < ncol; ++c) doc.data(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  return doc;
}

// Sectioned files shared by calibration kits and error terms.
struct Section {
  std::string label;
  std::size_t line = 0;
  TouchstoneDocument doc;
};

struct SectionedFile {
  std::map<std::string, std::string> meta;
  std::vector<Section> sections;
};

SectionedFile parse_sectioned(std::string_view text, std::string_view header, std::string_view keyword,
                              const std::vector<std::string>& keys) {
  const auto lines = split_lines(text);
  SectionedFile out;
  bool seen_header = false;
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    const auto s = trim(lines[i].text);
    if (s.empty() || s.front() == '!') continue;
    if (!seen_header) {
      if (s != header) throw ParseError("expected header '" + std::string(header) + "'", lines[i].no);
      seen_header = true;
      continue;
    }
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError("malformed section header", lines[i].no);
      const auto toks = tokens(s.substr(1, s.size() - 2));
      if (toks.size() != 2 || toks[0] != keyword)
        throw ParseError("expected '[" + std::string(keyword) + " <label>]'", lines[i].no);
      const std::size_t start = i;
      std::vector<Line> body;
      for (++i; i < lines.size() && trim(lines[i].text) != "[end]"; ++i) body.push_back(lines[i]);
      if (i == lines.size()) throw ParseError("section is missing its [end] line", lines[start].no);
      out.sections.push_back({lower(toks[1]), lines[start].no, parse_touchstone_lines(body, 1)});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lines[i].no);
    const std::string key = lower(trim(s.substr(0, eq)));
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ParseError("unknown key '" + key + "'", lines[i].no);
    if (!out.sections.empty()) throw ParseError("metadata must precede sections", lines[i].no);
    out.meta[key] = std::string(trim(s.substr(eq + 1)));
  }
  if (!seen_header) throw ParseError("empty file, expected header '" + std::string(header) + "'", 0);
  return out;
}

ComplexTrace section_trace(const Section& s) {
  if (s.doc.size() == 0) throw ParseError("section '" + s.label + "' has no data", s.line);
  return s.doc.trace(1, 1);
}

std::string touchstone_rows(const ComplexTrace& t, FrequencyUnit unit) {
  std::string out = "# " + std::string(to_string(unit)) + " S RI R 50\n";
  const double sc = unit_scale(unit);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    out += format_double("%.12e", t.frequency(i) / sc);
    out += ' ';
    out += format_double("%.12e", t[i].real());
    out += ' ';
    out += format_double("%.12e", t[i].imag());
    out += '\n';
  }
  return out;
}

std::string metadata_lines(const onecal::CalKitMetadata& meta, bool include_date) {
  std::string out;
  if (!meta.name.empty()) out += "name = " + meta.name + "\n";
  if (!meta.temperature.empty()) out += "temperature = " + meta.temperature + "\n";
  if (include_date && !meta.date.empty()) out += "date = " + meta.date + "\n";
  return out;
}

onecal::CalKitMetadata metadata_from(const std::map<std::string, std::string>& m) {
  onecal::CalKitMetadata meta;
  if (auto it = m.find("name"); it != m.end()) meta.name = it->second;
  if (auto it = m.find("temperature"); it != m.end()) meta.temperature = it->second;
  if (auto it = m.find("date"); it != m.end()) meta.date = it->second;
  return meta;
}

std::vector<std::string> split_csv(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto c = s.find(',', start);
    out.emplace_back(trim(s.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start)));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return out;
}

}  // namespace

double unit_scale(FrequencyUnit u) {
  switch (u) {
    case FrequencyUnit::Hz: return 1.0;
    case FrequencyUnit::kHz: return 1e3;
    case FrequencyUnit::MHz: return 1e6;
    case FrequencyUnit::GHz: return 1e9;
  }
  return 1.0;
}

const char* to_string(FrequencyUnit u) {
  switch (u) {
    case FrequencyUnit::Hz: return "Hz";
    case FrequencyUnit::kHz: return "kHz";
    case FrequencyUnit::MHz: return "MHz";
    case FrequencyUnit::GHz: return "GHz";
  }
  return "?";
}

const char* to_string(DataFormat f) {
  switch (f) {
    case DataFormat::RI: return "RI";
    case DataFormat::MA: return "MA";
    case DataFormat::DB: return "DB";
  }
  return "?";
}

double parse_number(std::string_view token, std::size_t line) {
  std::string_view t = token;
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw ParseError("invalid number '" + std::string(token) + "'", line);
  return v;
}

ComplexTrace TouchstoneDocument::trace(int i, int j) const {
  if (i < 1 || j < 1 || i > ports || j > ports)
    throw ParameterError("S" + std::to_string(i) + std::to_string(j) + " is not in a " + std::to_string(ports) +
                         "-port document");
  // v1 two-port column order: S11 S21 S12 S22
  const Eigen::Index col = ports == 1 ? 0 : (j - 1) * 2 + (i - 1);
  return ComplexTrace(FrequencyGrid(frequency), data.col(col));
}

ComplexTrace TouchstoneDocument::primary_trace() const { return ports == 2 ? trace(2, 1) : trace(1, 1); }

TouchstoneDocument TouchstoneDocument::one_port(const ComplexTrace& t, std::vector<std::string> comments,
                                                FrequencyUnit unit, double reference) {
  TouchstoneDocument doc;
  doc.options = {unit, DataFormat::RI, reference};
  doc.comments = std::move(comments);
  doc.ports = 1;
  doc.frequency = t.grid().points();
  doc.data = t.values();
  return doc;
}

TouchstoneDocument parse_touchstone(std::string_view text, int ports) {
  return parse_touchstone_lines(split_lines(text), ports);
}

std::string write_touchstone(const TouchstoneDocument& doc) {
  if (doc.size() == 0) throw ParameterError("cannot write a Touchstone document without data points");
  const Eigen::Index ncol = doc.ports == 2 ? 4 : 1;
  if (doc.data.rows() != doc.size() || doc.data.cols() != ncol)
    throw ParameterError("Touchstone data does not match its frequency list");
  std::string out;
  for (const auto& c : doc.comments) out += "!" + c + "\n";
  out += "# " + std::string(to_string(doc.options.unit)) + " S RI R " + format_double("%.12g", doc.options.reference) +
         "\n";
  const double sc = unit_scale(doc.options.unit);
  for (Eigen::Index i = 0; i < doc.size(); ++i) {
    out += format_double("%.12e", doc.frequency[i] / sc);
    for (Eigen::Index c = 0; c < ncol; ++c) {
      out += ' ';
      out += format_double("%.12e", doc.data(i, c).real());
      out += ' ';
      out += format_double("%.12e", doc.data(i, c).imag());
    }
    out += '\n';
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

TouchstoneDocument read_touchstone(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  const int ports = ext == ".s1p" ? 1 : ext == ".s2p" ? 2 : 0;
  const std::string text = read_text_file(path);
  try {
    return parse_touchstone(text, ports);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

ComplexTrace load_trace(const std::filesystem::path& path) {
  const auto doc = read_touchstone(path);
  if (doc.size() == 0) throw ParseError(path.string() + ": no data points", 0);
  return doc.primary_trace();
}

// ---------------------------------------------------------------------------

onecal::CalKit parse_calkit(std::string_view text, double conditioning_floor) {
  const auto file = parse_sectioned(text, "RESOCAL CALKIT 1", "standard", {"name", "temperature", "date"});
  std::array<std::optional<onecal::CalStandard>, 3> found;
  const std::array kinds{onecal::StandardKind::Open, onecal::StandardKind::Short, onecal::StandardKind::Load};
  for (const auto& s : file.sections) {
    std::size_t k = 0;
    while (k < 3 && s.label != to_string(kinds[k])) ++k;
    if (k == 3) throw ParseError("unknown standard kind '" + s.label + "'", s.line);
    if (found[k]) throw ParseError("duplicate " + s.label + " standard", s.line);
    found[k] = onecal::CalStandard(kinds[k], section_trace(s));
  }
  for (std::size_t k = 0; k < 3; ++k)
    if (!found[k]) throw ParameterError(std::string(to_string(kinds[k])) + " standard absent");
  return onecal::CalKit({*found[0], *found[1], *found[2]}, metadata_from(file.meta), conditioning_floor);
}

std::string write_calkit(const onecal::CalKit& kit, bool include_date) {
  std::string out = "RESOCAL CALKIT 1\n" + metadata_lines(kit.metadata(), include_date);
  for (const auto& s : kit.standards()) {
    out += "[standard " + std::string(to_string(s.kind)) + "]\n";
    out += touchstone_rows(s.known_gamma, FrequencyUnit::GHz);
    out += "[end]\n";
  }
  return out;
}

onecal::CalKit load_calkit(const std::filesystem::path& path, double conditioning_floor) {
  return parse_calkit(read_text_file(path), conditioning_floor);
}

onecal::CalKit load_calkit_files(const std::filesystem::path& open, const std::filesystem::path& short_,
                                 const std::filesystem::path& load, onecal::CalKitMetadata meta,
                                 double conditioning_floor) {
  return onecal::CalKit({onecal::CalStandard(onecal::StandardKind::Open, load_trace(open)),
                         onecal::CalStandard(onecal::StandardKind::Short, load_trace(short_)),
                         onecal::CalStandard(onecal::StandardKind::Load, load_trace(load))},
                        std::move(meta), conditioning_floor);
}

onecal::OnePortErrorTerms parse_error_terms(std::string_view text) {
  const auto file = parse_sectioned(text, "RESOCAL ERRORTERMS 1", "term", {"name", "temperature", "date"});
  const std::array<std::string, 3> labels{"e00", "e11", "e01e10"};
  std::array<std::optional<ComplexTrace>, 3> found;
  for (const auto& s : file.sections) {
    std::size_t k = 0;
    while (k < 3 && s.label != labels[k]) ++k;
    if (k == 3) throw ParseError("unknown error term '" + s.label + "'", s.line);
    if (found[k]) throw ParseError("duplicate error term " + s.label, s.line);
    found[k] = section_trace(s);
  }
  for (std::size_t k = 0; k < 3; ++k)
    if (!found[k]) throw ParameterError("error term " + labels[k] + " absent");
  require_aligned(found[0]->grid(), found[1]->grid(), "error terms");
  require_aligned(found[0]->grid(), found[2]->grid(), "error terms");
  onecal::OnePortErrorTerms terms{found[0]->grid(), found[0]->values(), found[1]->values(), found[2]->values()};
  terms.validate();
  return terms;
}

std::string write_error_terms(const onecal::OnePortErrorTerms& terms, const onecal::CalKitMetadata& meta,
                              bool include_date) {
  terms.validate();
  std::string out = "RESOCAL ERRORTERMS 1\n" + metadata_lines(meta, include_date);
  const std::array<std::pair<const char*, const VectorXc<double>*>, 3> blocks{
      {{"e00", &terms.e00}, {"e11", &terms.e11}, {"e01e10", &terms.e01e10}}};
  for (const auto& [label, v] : blocks) {
    out += std::string("[term ") + label + "]\n";
    out += touchstone_rows(ComplexTrace(terms.grid, *v), FrequencyUnit::GHz);
    out += "[end]\n";
  }
  return out;
}

onecal::OnePortErrorTerms load_error_terms(const std::filesystem::path& path) {
  return parse_error_terms(read_text_file(path));
}

// ---------------------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ParseError("missing column '" + std::string(name) + "'", 1);
}

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  for (const auto& ln : split_lines(text)) {
    const auto s = trim(ln.text);
    if (s.empty() || s.front() == '#') continue;
    auto cells = split_csv(s);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       ln.no);
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw ParseError("empty CSV file", 0);
  return t;
}

std::vector<PowerTrace> parse_power_sweep(std::string_view text, const std::filesystem::path& base_dir) {
  const auto lines = split_lines(text);
  std::vector<std::string> header;
  std::size_t header_line = 0;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  for (const auto& ln : lines) {
    const auto s = trim(ln.text);
    if (s.empty() || s.front() == '#') continue;
    auto cells = split_csv(s);
    if (header.empty()) {
      header = std::move(cells);
      header_line = ln.no;
      continue;
    }
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       ln.no);
    rows.emplace_back(ln.no, std::move(cells));
  }
  if (header.empty()) throw ParseError("empty power sweep file", 0);
  if (rows.empty()) throw ParseError("power sweep has no rows", header_line);

  std::vector<PowerTrace> out;
  auto seen = [&](double p) {
    return std::any_of(out.begin(), out.end(), [&](const PowerTrace& t) { return t.power_dbm == p; });
  };
  if (header == std::vector<std::string>{"power_dbm", "file"}) {
    for (const auto& [no, cells] : rows) {
      const double p = parse_number(cells[0], no);
      if (seen(p)) throw ParseError("duplicate power " + cells[0] + " dBm", no);
      const std::filesystem::path file = base_dir / cells[1];
      if (!std::filesystem::exists(file)) throw IoError("line " + std::to_string(no) + ": missing trace file '" +
                                                        file.string() + "'");
      out.push_back({p, load_trace(file)});
    }
  } else if (header == std::vector<std::string>{"power_dbm", "frequency_hz", "re", "im"}) {
    std::vector<double> f;
    std::vector<std::complex<double>> v;
    double current = 0;
    auto flush = [&] {
      if (f.empty()) return;
      out.push_back({current, ComplexTrace(FrequencyGrid(Eigen::Map<VectorX<double>>(f.data(), static_cast<Eigen::Index>(f.size()))),
                                           Eigen::Map<VectorXc<double>>(v.data(), static_cast<Eigen::Index>(v.size())))});
      f.clear();
      v.clear();
    };
    for (const auto& [no, cells] : rows) {
      const double p = parse_number(cells[0], no);
      if (f.empty() || p != current) {
        flush();
        if (seen(p)) throw ParseError("duplicate power " + cells[0] + " dBm", no);
        current = p;
      }
      const double freq = parse_number(cells[1], no);
      if (!(freq > 0)) throw ParseError("frequency must be positive", no);
      if (!f.empty() && !(freq > f.back())) throw ParseError("frequency is not strictly increasing", no);
      f.push_back(freq);
      v.emplace_back(parse_number(cells[2], no), parse_number(cells[3], no));
    }
    flush();
  } else {
    throw ParseError("header must be 'power_dbm,file' or 'power_dbm,frequency_hz,re,im'", header_line);
  }
  std::sort(out.begin(), out.end(), [](const PowerTrace& a, const PowerTrace& b) { return a.power_dbm > b.power_dbm; });
  return out;
}

std::vector<PowerTrace> load_power_sweep(const std::filesystem::path& path) {
  return parse_power_sweep(read_text_file(path), path.parent_path());
}

}  // namespace resocal::io
