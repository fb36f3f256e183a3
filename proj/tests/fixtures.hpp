#pragma once

#include <string>
#include <vector>

// The four annotated queries of the seattle/boston example interaction.
namespace fixtures {

inline const char* kFromSeattle =
    "(flight.from_airport IN (SELECT airport_service.airport_code FROM airport_service WHERE "
    "airport_service.city_code IN (SELECT city.city_code FROM city WHERE city.city_name = 'SEATTLE')))";
inline const char* kToBoston =
    "(flight.to_airport IN (SELECT airport_service.airport_code FROM airport_service WHERE "
    "airport_service.city_code IN (SELECT city.city_code FROM city WHERE city.city_name = 'BOSTON')))";
inline const char* kOnDate =
    "(flight.flight_days IN (SELECT days.days_code FROM days WHERE days.day_name IN (SELECT date_day.day_name "
    "FROM date_day WHERE date_day.year = 1993 AND date_day.month_number = 2 AND date_day.day_number = 8)))";

inline std::string query1() {
  return std::string("(SELECT DISTINCT flight.flight_id FROM flight WHERE ") + kFromSeattle + " AND " + kToBoston +
         " AND " + kOnDate + ");";
}
inline std::string query2() {
  return std::string("(SELECT DISTINCT flight.flight_id FROM flight WHERE (flight.airline_code = 'AA') AND ") +
         kFromSeattle + " AND " + kToBoston + " AND " + kOnDate + ");";
}
inline std::string query3() {
  return std::string("(SELECT DISTINCT flight.flight_id FROM flight WHERE (flight.airline_code = 'AA') AND ") +
         kFromSeattle + " AND " + kToBoston + " AND " + kOnDate + " AND (flight.arrival_time = 1900));";
}
inline std::string query4() {
  return std::string("(SELECT DISTINCT flight.flight_id FROM flight WHERE (flight.airline_code = 'DL') AND ") +
         kFromSeattle + " AND " + kToBoston + " AND " + kOnDate + ");";
}

inline const std::vector<std::string> kUtterances = {"show me flights from seattle to boston next monday",
                                                     "on american airlines", "which ones arrive at 7pm",
                                                     "show me delta flights"};

}  // namespace fixtures
