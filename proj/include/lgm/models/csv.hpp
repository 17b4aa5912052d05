#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lgm/linalg/matrix.hpp"
#include "lgm/models/pk.hpp"

namespace lgm {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    std::size_t b = field.find_first_not_of(" \t\r");
    std::size_t e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? ""
                                            : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline double parse_double(const std::string& s, long line) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size())
      throw DataFormatError("trailing characters in number '" + s + "'", line);
    return v;
  } catch (const DataFormatError&) {
    throw;
  } catch (const std::exception&) {
    throw DataFormatError("cannot parse '" + s + "' as a number", line);
  }
}

}  // namespace detail

struct XyData {
  std::vector<Vector> x;  // one point per row, arbitrary dimension
  Vector y;
};

// Loads a regression table with header x,...,y (any number of leading x
// columns, a single trailing y column). Every data row must match the
// header width.
inline XyData load_xy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open '" + path + "'", 0);
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line))
    throw DataFormatError("'" + path + "' is empty", 0);
  ++line_no;
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header.back() != "y")
    throw DataFormatError("header must be x,...,y", line_no);
  for (std::size_t i = 0; i + 1 < header.size(); ++i)
    if (header[i].empty() || header[i][0] != 'x')
      throw DataFormatError("covariate columns must be named x...", line_no);
  std::size_t width = header.size();
  XyData data;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != width)
      throw DataFormatError("expected " + std::to_string(width) + " fields, got " +
                                std::to_string(fields.size()),
                            line_no);
    Vector point(width - 1);
    for (std::size_t i = 0; i + 1 < width; ++i)
      point[i] = detail::parse_double(fields[i], line_no);
    data.x.push_back(std::move(point));
    data.y.push_back(detail::parse_double(fields.back(), line_no));
  }
  if (data.y.empty()) throw DataFormatError("'" + path + "' has no data rows", line_no);
  return data;
}

// Loads dosing study measurements with header patient_id,time,amount.
// Patients are numbered in order of first appearance; rows of one patient
// need not be contiguous.
inline std::vector<PkPatient> load_pk_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open '" + path + "'", 0);
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line))
    throw DataFormatError("'" + path + "' is empty", 0);
  ++line_no;
  auto header = detail::split_csv_line(line);
  if (header != std::vector<std::string>{"patient_id", "time", "amount"})
    throw DataFormatError("header must be patient_id,time,amount", line_no);
  std::vector<PkPatient> patients;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 3)
      throw DataFormatError("expected 3 fields, got " +
                                std::to_string(fields.size()),
                            line_no);
    auto [it, inserted] = index.try_emplace(fields[0], patients.size());
    if (inserted) patients.emplace_back();
    PkPatient& p = patients[it->second];
    p.times.push_back(detail::parse_double(fields[1], line_no));
    p.amounts.push_back(detail::parse_double(fields[2], line_no));
  }
  if (patients.empty())
    throw DataFormatError("'" + path + "' has no data rows", line_no);
  return patients;
}

}  // namespace lgm
