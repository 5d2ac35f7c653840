#pragma once

#include <string>
#include <vector>

#include "nerd/types.hpp"

namespace nerd::report {

/// Builds a comma-separated table; doubles go out at 17 significant digits.
class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& cell(const std::string& value);
  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  void end_row();

  const std::string& str() const { return out_; }

private:
  std::size_t columns_;
  std::size_t in_row_ = 0;
  std::string out_;
};

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& labels);

}  // namespace nerd::report
