#include "nerd/report/csv.hpp"

#include <stdexcept>

#include "nerd/util/text.hpp"

namespace nerd::report {

namespace {

std::string escape(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ += ',';
    out_ += escape(header[i]);
  }
  out_ += '\n';
}

CsvWriter& CsvWriter::cell(const std::string& value) {
  if (in_row_ == columns_) throw std::logic_error("CsvWriter: too many cells in row");
  if (in_row_) out_ += ',';
  out_ += escape(value);
  ++in_row_;
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(text::format_double(value)); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  if (in_row_ != columns_) throw std::logic_error("CsvWriter: row has the wrong number of cells");
  out_ += '\n';
  in_row_ = 0;
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& labels) {
  std::vector<std::string> header{"label"};
  header.insert(header.end(), labels.begin(), labels.end());
  CsvWriter w(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    w.cell(labels.at(static_cast<std::size_t>(i)));
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.cell(m(i, j));
    w.end_row();
  }
  return w.str();
}

}  // namespace nerd::report
