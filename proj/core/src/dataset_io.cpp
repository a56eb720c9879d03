#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pfl/errors.hpp"
#include "pfl/synth.hpp"

namespace pfl {

namespace {

constexpr std::string_view kMagic = "pfl-dataset";
constexpr int kFormatVersion = 1;

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Next non-blank line split into tokens; throws at end of input.
  std::vector<std::string_view> next(std::string_view expecting) {
    while (std::getline(in_, line_)) {
      ++number_;
      auto tokens = split_ws(line_);
      if (!tokens.empty()) return tokens;
    }
    throw ParseError("unexpected end of input, expected " + std::string(expecting), number_ + 1);
  }

  // True if another non-blank line exists; it is buffered for next().
  bool at_end() {
    while (in_.peek() != std::char_traits<char>::eof()) {
      const auto pos = in_.tellg();
      std::string probe;
      std::getline(in_, probe);
      if (!split_ws(probe).empty()) {
        in_.clear();
        in_.seekg(pos);
        return false;
      }
      ++number_;
    }
    return true;
  }

  std::size_t line() const { return number_; }

  template <typename T>
  T number(std::string_view tok) const {
    T v{};
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || p != end)
      throw ParseError("invalid number '" + std::string(tok) + "'", number_);
    return v;
  }

  void expect_key(const std::vector<std::string_view>& t, std::string_view key,
                  std::size_t arity) const {
    if (t[0] != key) throw ParseError("expected '" + std::string(key) + "', got '" + std::string(t[0]) + "'", number_);
    if (t.size() != arity + 1)
      throw ParseError("'" + std::string(key) + "' expects " + std::to_string(arity) + " value(s)", number_);
  }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t number_ = 0;
};

std::vector<std::size_t> read_indices(LineReader& r, const std::vector<std::string_view>& t,
                                      std::string_view key) {
  if (t[0] != key) throw ParseError("expected '" + std::string(key) + "'", r.line());
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < t.size(); ++i) out.push_back(r.number<std::size_t>(t[i]));
  return out;
}

}  // namespace

void write_dataset(const ClientDataset& ds, std::ostream& out) {
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "feature_dim " << ds.feature_dim << '\n';
  out << "fps " << ds.fps << '\n';
  out << "blocks front rear cabin\n";
  out << "sequences " << ds.sequences.size() << '\n';
  for (const auto& seq : ds.sequences) {
    out << "sequence " << to_string(seq.scenario) << ' ' << static_cast<int>(seq.label) << ' '
        << seq.frames.size() << '\n';
    for (const auto& f : seq.frames) {
      for (std::size_t i = 0; i < f.values.size(); ++i) {
        if (i > 0) out << ' ';
        out << format_double(f.values[i]);
      }
      out << '\n';
    }
  }
  out << "train";
  for (auto i : ds.train) out << ' ' << i;
  out << "\ntest";
  for (auto i : ds.test) out << ' ' << i;
  out << '\n';
}

ClientDataset read_dataset(std::istream& in) {
  LineReader r(in);
  ClientDataset ds;

  auto t = r.next("header");
  if (t[0] != kMagic) throw ParseError("not a dataset file (missing '" + std::string(kMagic) + "' header)", r.line());
  r.expect_key(t, kMagic, 1);
  if (r.number<int>(t[1]) != kFormatVersion)
    throw ParseError("unsupported format version " + std::string(t[1]), r.line());

  t = r.next("feature_dim");
  r.expect_key(t, "feature_dim", 1);
  ds.feature_dim = r.number<std::size_t>(t[1]);
  if (ds.feature_dim == 0) throw ParseError("feature_dim must be positive", r.line());

  t = r.next("fps");
  r.expect_key(t, "fps", 1);
  ds.fps = r.number<int>(t[1]);
  if (ds.fps <= 0) throw ParseError("fps must be positive", r.line());

  t = r.next("blocks");
  if (t.size() != 4 || t[0] != "blocks" || t[1] != "front" || t[2] != "rear" || t[3] != "cabin")
    throw ParseError("expected 'blocks front rear cabin'", r.line());

  t = r.next("sequences");
  r.expect_key(t, "sequences", 1);
  const auto count = r.number<std::size_t>(t[1]);

  const std::size_t width = ds.frame_width();
  ds.sequences.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    t = r.next("sequence");
    r.expect_key(t, "sequence", 3);
    LabeledSequence seq;
    const auto scenario = parse_scenario(t[1]);
    if (!scenario) throw ParseError("unknown scenario tag '" + std::string(t[1]) + "'", r.line());
    seq.scenario = *scenario;
    const int label = r.number<int>(t[2]);
    if (label < 0 || label >= static_cast<int>(kNumClasses))
      throw ParseError("label out of range: " + std::string(t[2]), r.line());
    seq.label = static_cast<Intention>(label);
    if (seq.scenario != Scenario::kLaneChangeSop && seq.label != Intention::kLaneKeep)
      throw ParseError("lane-keep scenario with a lane-change label", r.line());
    if (seq.scenario == Scenario::kLaneChangeSop && seq.label == Intention::kLaneKeep)
      throw ParseError("lane-change scenario with a lane-keep label", r.line());
    const auto frames = r.number<std::size_t>(t[3]);
    seq.frames.reserve(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      t = r.next("frame row");
      if (t.size() != width)
        throw ParseError("frame row has " + std::to_string(t.size()) + " values, expected " +
                             std::to_string(width),
                         r.line());
      FeatureFrame frame{std::vector<double>(width), f};
      for (std::size_t i = 0; i < width; ++i) frame.values[i] = r.number<double>(t[i]);
      seq.frames.push_back(std::move(frame));
    }
    ds.sequences.push_back(std::move(seq));
  }

  if (r.at_end()) {
    ds.train.resize(ds.sequences.size());
    std::iota(ds.train.begin(), ds.train.end(), std::size_t{0});
    return ds;
  }
  t = r.next("train");
  ds.train = read_indices(r, t, "train");
  t = r.next("test");
  ds.test = read_indices(r, t, "test");
  try {
    ds.validate_split();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), r.line());
  }
  if (!r.at_end()) {
    r.next("end of input");
    throw ParseError("trailing content after split", r.line());
  }
  return ds;
}

void save_dataset(const ClientDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(ds, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ClientDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace pfl
