#include <charconv>
#include <sstream>

#include "nerd/errors.hpp"
#include "nerd/training/training.hpp"
#include "nerd/util/text.hpp"

namespace nerd::training {

namespace {

void write_block(std::ostringstream& out, const char* name, const auto& m) {
  out << name;
  for (Eigen::Index i = 0; i < m.size(); ++i) out << ' ' << text::format_double(m.data()[i]);
  out << '\n';
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& cp) {
  std::ostringstream out;
  out << "nerd-checkpoint " << kCheckpointFormatVersion << '\n'
      << "subject " << cp.subject_id << '\n'
      << "family " << to_string(cp.family) << '\n'
      << "epoch " << cp.epoch << '\n'
      << "config_hash " << cp.config_hash << '\n'
      << "rng_seed " << cp.rng_seed << '\n'
      << "rng_cursor " << cp.rng_cursor << '\n'
      << "voxels " << cp.params.state_dim() << '\n'
      << "hidden " << cp.params.hidden_size() << '\n'
      << "sigma_min " << text::format_double(cp.params.sigma_min) << '\n';
  write_block(out, "w1", cp.params.w1);
  write_block(out, "b1", cp.params.b1);
  write_block(out, "w2", cp.params.w2);
  write_block(out, "b2", cp.params.b2);
  out << "end\n";
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& contents) {
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const std::string& keyword) {
    if (!std::getline(in, line)) throw ParseError("unexpected end of checkpoint, expected '" + keyword + "'", line_no + 1);
    ++line_no;
    if (in.eof()) throw ParseError("unterminated final line (truncated file?)", line_no);
    auto tokens = text::split_ws(line);
    if (tokens.empty() || tokens[0] != keyword) throw ParseError("expected '" + keyword + "'", line_no);
    return std::vector<std::string>(tokens.begin() + 1, tokens.end());
  };
  auto single = [&](const std::string& keyword) {
    auto v = next(keyword);
    if (v.size() != 1) throw ParseError("'" + keyword + "' expects one value", line_no);
    return v[0];
  };
  auto as_int = [&](const std::string& s) {
    try {
      return text::parse_int(s);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  };
  auto as_u64 = [&](const std::string& s) {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ParseError("bad unsigned integer '" + s + "'", line_no);
    return v;
  };
  auto as_double = [&](const std::string& s) {
    try {
      return text::parse_double(s);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  };

  const auto version = as_int(single("nerd-checkpoint"));
  if (version != kCheckpointFormatVersion)
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported");
  Checkpoint cp;
  cp.subject_id = single("subject");
  try {
    cp.family = parse_family(single("family"));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), line_no);
  }
  cp.epoch = static_cast<int>(as_int(single("epoch")));
  cp.config_hash = single("config_hash");
  cp.rng_seed = as_u64(single("rng_seed"));
  cp.rng_cursor = as_u64(single("rng_cursor"));
  const auto voxels = as_int(single("voxels"));
  const auto hidden = as_int(single("hidden"));
  if (voxels < 1 || hidden < 1) throw ParseError("dimensions must be positive", line_no);
  static_cast<policy::Weights&>(cp.params) = policy::Weights::zeros(voxels, hidden);
  cp.params.sigma_min = as_double(single("sigma_min"));
  auto read_block = [&](const char* name, auto& m) {
    auto values = next(name);
    if (static_cast<Eigen::Index>(values.size()) != m.size())
      throw ParseError(std::string("'") + name + "' has the wrong number of entries", line_no);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = as_double(values[static_cast<std::size_t>(i)]);
  };
  read_block("w1", cp.params.w1);
  read_block("b1", cp.params.b1);
  read_block("w2", cp.params.w2);
  read_block("b2", cp.params.b2);
  next("end");
  if (!cp.params.all_finite()) throw ParseError("checkpoint contains non-finite parameters", line_no);
  return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  text::write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(text::read_file(path)); }

std::string epoch_log_csv(const std::vector<EpochLog>& logs) {
  std::ostringstream out;
  out << "epoch,mean_loss,mean_reward,mean_return,grad_norm_pre_clip\n";
  for (const auto& l : logs) {
    out << l.epoch << ',' << text::format_double(l.mean_loss) << ',' << text::format_double(l.mean_reward) << ','
        << text::format_double(l.mean_return) << ',' << text::format_double(l.grad_norm_pre_clip) << '\n';
  }
  return out.str();
}

std::vector<EpochLog> parse_epoch_log_csv(const std::string& contents) {
  std::vector<EpochLog> logs;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    auto cells = text::split(line, ',');
    if (cells.size() != 5) throw ParseError("epoch log row needs 5 columns", line_no);
    try {
      logs.push_back({static_cast<int>(text::parse_int(cells[0])), text::parse_double(cells[1]),
                      text::parse_double(cells[2]), text::parse_double(cells[3]), text::parse_double(cells[4])});
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return logs;
}

}  // namespace nerd::training
