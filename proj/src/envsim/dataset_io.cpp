#include <charconv>
#include <cmath>
#include <sstream>
#include <string_view>

#include "nerd/envsim/envsim.hpp"
#include "nerd/errors.hpp"
#include "nerd/util/text.hpp"

namespace nerd::envsim {

namespace {

// Line-oriented reader: every record is `keyword value...`.
class LineReader {
public:
  explicit LineReader(const std::string& contents) : contents_(contents) {}

  std::vector<std::string_view> expect(std::string_view keyword, std::size_t n_values) {
    auto tokens = next();
    if (tokens.empty() || tokens[0] != keyword)
      throw ParseError("expected '" + std::string(keyword) + "'", line_);
    if (n_values != kAny && tokens.size() != n_values + 1)
      throw ParseError("'" + std::string(keyword) + "' expects " + std::to_string(n_values) + " value(s)", line_);
    tokens.erase(tokens.begin());
    return tokens;
  }

  double number(std::string_view token) const {
    try {
      return text::parse_double(token);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_);
    }
  }

  long long integer(std::string_view token) const {
    try {
      return text::parse_int(token);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_);
    }
  }

  std::uint64_t u64(std::string_view token) const {
    std::uint64_t value = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
      throw ParseError("not an unsigned integer: '" + std::string(token) + "'", line_);
    return value;
  }

  Vector vector(std::string_view keyword, int size) {
    auto tokens = expect(keyword, static_cast<std::size_t>(size));
    Vector v(size);
    for (int i = 0; i < size; ++i) v[i] = number(tokens[static_cast<std::size_t>(i)]);
    return v;
  }

  std::size_t line() const noexcept { return line_; }

  static constexpr std::size_t kAny = static_cast<std::size_t>(-1);

private:
  std::vector<std::string_view> next() {
    while (pos_ < contents_.size()) {
      const auto end = contents_.find('\n', pos_);
      const bool terminated = end != std::string::npos;
      std::string_view line(contents_.data() + pos_, (terminated ? end : contents_.size()) - pos_);
      pos_ = terminated ? end + 1 : contents_.size();
      ++line_;
      if (!terminated) throw ParseError("unterminated final line (truncated file?)", line_);
      auto tokens = text::split_ws(line);
      if (tokens.empty() || tokens[0].front() == '#') continue;
      return tokens;
    }
    throw ParseError("unexpected end of file", line_ + 1);
  }

  const std::string& contents_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream out;
  out << "nerd-dataset " << kDatasetFormatVersion << '\n';
  out << "cohort_seed " << ds.cohort_seed << '\n';
  out << "voxels " << ds.voxels << '\n';
  out << "n_subjects " << ds.subjects.size() << '\n';
  for (const auto& s : ds.subjects) {
    out << "subject " << s.subject_id << '\n';
    out << "proficiency " << text::format_double(s.proficiency) << '\n';
    out << "noise_scale " << text::format_double(s.noise_scale) << '\n';
    out << "bias " << text::format_double(s.decoder.bias) << '\n';
    out << "weights " << text::join_doubles(s.decoder.weights) << '\n';
    out << "n_trials " << s.trials.size() << '\n';
    for (const auto& t : s.trials) {
      out << "trial " << t.trial_id << '\n';
      out << "baseline " << text::join_doubles(t.baseline_state) << '\n';
      out << "achieved " << text::join_doubles(t.achieved_state) << '\n';
      out << "achieved_reward " << text::format_double(t.achieved_reward) << '\n';
    }
    out << "end_subject\n";
  }
  out << "end\n";
  return out.str();
}

Dataset parse_dataset(const std::string& contents) {
  LineReader in(contents);
  {
    auto header = in.expect("nerd-dataset", 1);
    const auto version = in.integer(header[0]);
    if (version != kDatasetFormatVersion)
      throw VersionError("dataset format version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kDatasetFormatVersion) + ")");
  }
  Dataset ds;
  ds.cohort_seed = in.u64(in.expect("cohort_seed", 1)[0]);
  ds.voxels = static_cast<int>(in.integer(in.expect("voxels", 1)[0]));
  if (ds.voxels < 1) throw ParseError("voxels must be positive", in.line());
  const auto n_subjects = in.integer(in.expect("n_subjects", 1)[0]);
  if (n_subjects < 0) throw ParseError("n_subjects must be non-negative", in.line());

  for (long long si = 0; si < n_subjects; ++si) {
    SyntheticSubject s;
    s.subject_id = std::string(in.expect("subject", 1)[0]);
    s.voxels = ds.voxels;
    s.proficiency = in.number(in.expect("proficiency", 1)[0]);
    s.noise_scale = in.number(in.expect("noise_scale", 1)[0]);
    s.decoder.bias = in.number(in.expect("bias", 1)[0]);
    s.decoder.weights = in.vector("weights", ds.voxels);
    if (!s.decoder.weights.allFinite() || s.decoder.weights.isZero(0.0))
      throw ParseError("decoder weights must be finite with at least one nonzero entry", in.line());
    const auto n_trials = in.integer(in.expect("n_trials", 1)[0]);
    if (n_trials < 0) throw ParseError("n_trials must be non-negative", in.line());
    for (long long ti = 0; ti < n_trials; ++ti) {
      TrialRecord t;
      t.trial_id = static_cast<int>(in.integer(in.expect("trial", 1)[0]));
      t.baseline_state = in.vector("baseline", ds.voxels);
      t.achieved_state = in.vector("achieved", ds.voxels);
      t.achieved_reward = in.number(in.expect("achieved_reward", 1)[0]);
      const double expected = decode_reward(s.decoder, t.achieved_state);
      if (!(std::abs(expected - t.achieved_reward) <= 1e-9 * std::max(1.0, std::abs(expected))))
        throw ParseError("achieved_reward does not match decoder output for trial " + std::to_string(t.trial_id),
                         in.line());
      s.trials.push_back(std::move(t));
    }
    in.expect("end_subject", 0);
    ds.subjects.push_back(std::move(s));
  }
  in.expect("end", 0);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  text::write_file_atomic(path, serialize_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(text::read_file(path)); }

}  // namespace nerd::envsim
