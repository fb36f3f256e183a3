#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxsql {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, records, corpora).
class DataError : public Error {
 public:
  using Error::Error;
};

using Date = std::chrono::year_month_day;

// Parses "YYYY-MM-DD"; throws DataError on malformed or invalid dates.
Date parse_date(std::string_view text);
std::string format_date(const Date& date);
Date add_days(const Date& date, int days);

std::string to_lower(std::string_view text);
std::string to_upper(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

}  // namespace ctxsql
