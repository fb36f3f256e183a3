#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>

#include "ctxsql/corpus/corpus.hpp"

namespace ctxsql::corpus {

namespace {

struct CityInfo {
  const char* name;
  const char* code;
  std::vector<const char*> airports;
};

const std::vector<CityInfo>& cities() {
  static const std::vector<CityInfo> kCities = {
      {"SEATTLE", "SSEA", {"SEA"}},        {"BOSTON", "BBOS", {"BOS"}},
      {"DENVER", "DDEN", {"DEN"}},         {"DALLAS", "DDFW", {"DFW", "DAL"}},
      {"ATLANTA", "AATL", {"ATL"}},        {"PITTSBURGH", "PPIT", {"PIT"}},
      {"BALTIMORE", "BBWI", {"BWI"}},      {"PHILADELPHIA", "PPHL", {"PHL"}},
      {"OAKLAND", "OOAK", {"OAK"}},        {"SAN FRANCISCO", "SSFO", {"SFO"}},
      {"WASHINGTON", "WWAS", {"IAD", "DCA"}}, {"CHICAGO", "CCHI", {"ORD", "MDW"}},
  };
  return kCities;
}

struct AirlineInfo {
  const char* code;
  const char* name;
};

const std::vector<AirlineInfo>& airlines() {
  static const std::vector<AirlineInfo> kAirlines = {
      {"AA", "AMERICAN"}, {"DL", "DELTA"}, {"UA", "UNITED"},
      {"CO", "CONTINENTAL"}, {"US", "USAIR"}, {"NW", "NORTHWEST"},
  };
  return kAirlines;
}

constexpr std::array<const char*, 7> kWeekdays = {"SUNDAY",   "MONDAY", "TUESDAY", "WEDNESDAY",
                                                  "THURSDAY", "FRIDAY", "SATURDAY"};
constexpr std::array<const char*, 12> kMonths = {"january", "february", "march",     "april",   "may",      "june",
                                                 "july",    "august",   "september", "october", "november", "december"};
constexpr std::array<const char*, 31> kOrdinalWords = {
    "first",          "second",        "third",          "fourth",        "fifth",         "sixth",
    "seventh",        "eighth",        "ninth",          "tenth",         "eleventh",      "twelfth",
    "thirteenth",     "fourteenth",    "fifteenth",      "sixteenth",     "seventeenth",   "eighteenth",
    "nineteenth",     "twentieth",     "twenty first",   "twenty second", "twenty third",  "twenty fourth",
    "twenty fifth",   "twenty sixth",  "twenty seventh", "twenty eighth", "twenty ninth",  "thirtieth",
    "thirty first"};
constexpr std::array<const char*, 10> kDigitWords = {"zero", "one", "two",   "three", "four",
                                                     "five", "six", "seven", "eight", "nine"};

unsigned weekday_index(const Date& d) { return std::chrono::weekday{std::chrono::sys_days{d}}.c_encoding(); }

struct Flight {
  std::int64_t id;
  std::string airline;
  std::int64_t number;
  std::string from_airport;
  std::string to_airport;
  std::int64_t departure;
  std::int64_t arrival;
  std::string days;
};

std::set<std::string> days_code_weekdays(const std::string& code) {
  if (code == "DAILY") return {kWeekdays.begin(), kWeekdays.end()};
  if (code == "WEEKDAYS") return {"MONDAY", "TUESDAY", "WEDNESDAY", "THURSDAY", "FRIDAY"};
  if (code == "WEEKEND") return {"SATURDAY", "SUNDAY"};
  return {code};
}

std::string lower(const char* s) { return to_lower(s); }

enum class Kind { From, To, Date, Airline, DepartAfter, DepartBefore, ArriveAt, FlightNumber };
enum class Target { FlightId, DepartureTime, ArrivalTime, AirlineCode, Earliest };

struct State {
  std::string from_city;
  std::string to_city;
  std::optional<Date> date;
  std::optional<std::string> airline;
  std::optional<std::int64_t> depart_after;
  std::optional<std::int64_t> depart_before;
  std::optional<std::int64_t> arrive_at;
  std::optional<std::int64_t> flight_number;
  std::vector<Kind> order;
  Target target = Target::FlightId;

  bool has(Kind k) const { return std::find(order.begin(), order.end(), k) != order.end(); }
  void clear(Kind k) {
    switch (k) {
      case Kind::Date: date.reset(); break;
      case Kind::Airline: airline.reset(); break;
      case Kind::DepartAfter: depart_after.reset(); break;
      case Kind::DepartBefore: depart_before.reset(); break;
      case Kind::ArriveAt: arrive_at.reset(); break;
      case Kind::FlightNumber: flight_number.reset(); break;
      default: break;
    }
  }
};

class Generator {
 public:
  explicit Generator(const CorpusSpec& spec) : spec_(spec), rng_(spec.seed) {}

  SyntheticCorpus run() {
    SyntheticCorpus out;
    out.database = build_flight_database(spec_.seed);
    load_flights(out.database);
    int scenario_no = 0;
    int produced = 0;
    while (produced < spec_.n_interactions) {
      ++scenario_no;
      char sid[32];
      std::snprintf(sid, sizeof(sid), "s%04d", scenario_no);
      Date doc = add_days(Date{std::chrono::year{1993}, std::chrono::month{1}, std::chrono::day{1}},
                          uniform_int(0, 338));
      auto [from, to] = city_pair();
      int max_per = std::max(1, static_cast<int>(std::lround(2.0 * spec_.interactions_per_scenario - 1.0)));
      int count = std::min(uniform_int(1, max_per), spec_.n_interactions - produced);
      for (int c = 0; c < count; ++c) {
        ++produced;
        char iid[32];
        std::snprintf(iid, sizeof(iid), "i%05d", produced);
        Interaction interaction;
        interaction.id = iid;
        interaction.scenario_id = sid;
        interaction.document_date = doc;
        std::vector<Phenomenon> phenomena;
        generate_interaction(interaction, phenomena, from, to);
        out.interactions.push_back(std::move(interaction));
        out.phenomena.push_back(std::move(phenomena));
      }
    }
    return out;
  }

 private:
  const CorpusSpec& spec_;
  std::mt19937_64 rng_;
  std::vector<Flight> flights_;
  std::map<std::string, std::string> airport_city_;
  Date doc_{};

  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform_int(0, static_cast<int>(v.size()) - 1))];
  }

  void load_flights(const Database& db) {
    for (const auto& row : db.find_table("flight")->rows) {
      flights_.push_back({std::get<std::int64_t>(row[0]), std::get<std::string>(row[1]), std::get<std::int64_t>(row[2]),
                          std::get<std::string>(row[3]), std::get<std::string>(row[4]), std::get<std::int64_t>(row[5]),
                          std::get<std::int64_t>(row[6]), std::get<std::string>(row[7])});
    }
    for (const auto& row : db.find_table("airport_service")->rows) {
      airport_city_[std::get<std::string>(row[1])] = std::get<std::string>(row[0]);
    }
  }

  std::pair<std::string, std::string> city_pair() {
    const auto& cs = cities();
    int a = uniform_int(0, static_cast<int>(cs.size()) - 1);
    int b = uniform_int(0, static_cast<int>(cs.size()) - 2);
    if (b >= a) ++b;
    return {cs[static_cast<std::size_t>(a)].name, cs[static_cast<std::size_t>(b)].name};
  }

  static std::string city_code(const std::string& name) {
    for (const auto& c : cities()) {
      if (name == c.name) return c.code;
    }
    return {};
  }

  bool matches(const Flight& f, const State& s, std::optional<Kind> ignore = std::nullopt) const {
    auto active = [&](Kind k) { return !ignore || *ignore != k; };
    if (active(Kind::From) && airport_city_.at(f.from_airport) != city_code(s.from_city)) return false;
    if (active(Kind::To) && airport_city_.at(f.to_airport) != city_code(s.to_city)) return false;
    if (active(Kind::Date) && s.date && !days_code_weekdays(f.days).count(kWeekdays[weekday_index(*s.date)]))
      return false;
    if (active(Kind::Airline) && s.airline && f.airline != *s.airline) return false;
    if (active(Kind::DepartAfter) && s.depart_after && !(f.departure > *s.depart_after)) return false;
    if (active(Kind::DepartBefore) && s.depart_before && !(f.departure < *s.depart_before)) return false;
    if (active(Kind::ArriveAt) && s.arrive_at && f.arrival != *s.arrive_at) return false;
    if (active(Kind::FlightNumber) && s.flight_number && f.number != *s.flight_number) return false;
    return true;
  }

  std::vector<const Flight*> candidates(const State& s, std::optional<Kind> ignore = std::nullopt) const {
    std::vector<const Flight*> out;
    for (const auto& f : flights_) {
      if (matches(f, s, ignore)) out.push_back(&f);
    }
    return out;
  }

  // --- verbalization -------------------------------------------------------

  std::string time_phrase(std::int64_t hhmm) {
    int h = static_cast<int>(hhmm / 100);
    int m = static_cast<int>(hhmm % 100);
    if (hhmm == 1200 && coin(0.5)) return "noon";
    std::string suffix = h >= 12 ? "pm" : "am";
    int h12 = h % 12 == 0 ? 12 : h % 12;
    std::string base = std::to_string(h12);
    if (m != 0) {
      char mm[8];
      std::snprintf(mm, sizeof(mm), ":%02d", m);
      base += mm;
    }
    return coin(0.7) ? base + suffix : base + " " + suffix;
  }

  std::string number_phrase(std::int64_t n) {
    if (coin(0.3)) {
      std::string digits = std::to_string(n);
      std::string out;
      for (char c : digits) {
        if (!out.empty()) out += ' ';
        out += kDigitWords[static_cast<std::size_t>(c - '0')];
      }
      return out;
    }
    return std::to_string(n);
  }

  static std::string airline_phrase(const std::string& code) {
    for (const auto& a : airlines()) {
      if (code == a.code) return lower(a.name);
    }
    return {};
  }

  // Returns a date phrase and the date it denotes relative to doc_.
  std::pair<std::string, Date> date_phrase_for_weekday(unsigned weekday) {
    Date monday = add_days(doc_, -static_cast<int>((weekday_index(doc_) + 6) % 7));
    int offset = static_cast<int>((weekday + 6) % 7);
    Date naive = add_days(monday, offset);
    std::string name = lower(kWeekdays[weekday]);
    int choice = uniform_int(0, 2);
    if (choice == 0) {
      Date next = add_days(naive, 7);
      if (std::chrono::sys_days{next} < std::chrono::sys_days{doc_}) next = add_days(next, 7);
      return {"next " + name, next};
    }
    Date d = naive;
    if (std::chrono::sys_days{d} < std::chrono::sys_days{doc_}) d = add_days(d, 7);
    if (choice == 1) return {"on " + name, d};
    // An explicit month/day naming the same date.
    unsigned day = static_cast<unsigned>(d.day());
    std::string month = kMonths[static_cast<unsigned>(d.month()) - 1];
    std::string day_text;
    switch (uniform_int(0, 2)) {
      case 0: day_text = std::to_string(day); break;
      case 1: day_text = std::to_string(day) + (day % 10 == 1 && day != 11   ? "st"
                                                : day % 10 == 2 && day != 12 ? "nd"
                                                : day % 10 == 3 && day != 13 ? "rd"
                                                                             : "th");
        break;
      default: day_text = kOrdinalWords[day - 1]; break;
    }
    return {"on " + month + " " + day_text, d};
  }

  std::pair<std::string, Date> date_phrase(const std::vector<const Flight*>& pool) {
    if (coin(0.15)) {
      Date tomorrow = add_days(doc_, 1);
      bool ok = pool.empty() || std::any_of(pool.begin(), pool.end(), [&](const Flight* f) {
                  return days_code_weekdays(f->days).count(kWeekdays[weekday_index(tomorrow)]) > 0;
                });
      if (ok) return {"tomorrow", tomorrow};
    }
    unsigned weekday;
    if (pool.empty()) {
      weekday = static_cast<unsigned>(uniform_int(0, 6));
    } else {
      auto days = days_code_weekdays(pick(pool)->days);
      std::vector<std::string> v(days.begin(), days.end());
      const std::string& name = pick(v);
      weekday = static_cast<unsigned>(std::find(kWeekdays.begin(), kWeekdays.end(), name) - kWeekdays.begin());
    }
    return date_phrase_for_weekday(weekday);
  }

  // --- SQL rendering --------------------------------------------------------

  static std::string city_conjunct(const char* column, const std::string& city) {
    return std::string("( flight.") + column +
           " IN ( SELECT airport_service.airport_code FROM airport_service WHERE airport_service.city_code IN "
           "( SELECT city.city_code FROM city WHERE city.city_name = '" +
           city + "' ) ) )";
  }

  static std::string conjunct(const State& s, Kind k) {
    switch (k) {
      case Kind::From: return city_conjunct("from_airport", s.from_city);
      case Kind::To: return city_conjunct("to_airport", s.to_city);
      case Kind::Date:
        return "( flight.flight_days IN ( SELECT days.days_code FROM days WHERE days.day_name IN ( SELECT "
               "date_day.day_name FROM date_day WHERE date_day.year = " +
               std::to_string(static_cast<int>(s.date->year())) +
               " AND date_day.month_number = " + std::to_string(static_cast<unsigned>(s.date->month())) +
               " AND date_day.day_number = " + std::to_string(static_cast<unsigned>(s.date->day())) + " ) ) )";
      case Kind::Airline: return "( flight.airline_code = '" + *s.airline + "' )";
      case Kind::DepartAfter: return "( flight.departure_time > " + std::to_string(*s.depart_after) + " )";
      case Kind::DepartBefore: return "( flight.departure_time < " + std::to_string(*s.depart_before) + " )";
      case Kind::ArriveAt: return "( flight.arrival_time = " + std::to_string(*s.arrive_at) + " )";
      case Kind::FlightNumber: return "( flight.flight_number = " + std::to_string(*s.flight_number) + " )";
    }
    return {};
  }

  static std::string render(const State& s) {
    std::string proj;
    switch (s.target) {
      case Target::FlightId: proj = "DISTINCT flight.flight_id FROM flight"; break;
      case Target::DepartureTime: proj = "DISTINCT flight.departure_time FROM flight"; break;
      case Target::ArrivalTime: proj = "DISTINCT flight.arrival_time FROM flight"; break;
      case Target::AirlineCode: proj = "DISTINCT flight.airline_code FROM flight"; break;
      case Target::Earliest: proj = "MIN ( flight.departure_time ) FROM flight"; break;
    }
    std::string where;
    for (std::size_t i = 0; i < s.order.size(); ++i) {
      if (i) where += " AND ";
      where += conjunct(s, s.order[i]);
    }
    return "( SELECT " + proj + " WHERE " + where + " ) ;";
  }

  // --- phenomena ------------------------------------------------------------

  // Sets constraint `k` on `s` to a value that keeps the result non-empty
  // when possible and returns the utterance fragment naming it.
  std::string assign(State& s, Kind k, bool elliptical) {
    auto pool = candidates(s, k);
    switch (k) {
      case Kind::Date: {
        auto [phrase, date] = date_phrase(pool);
        s.date = date;
        return phrase;
      }
      case Kind::Airline: {
        std::vector<std::string> options;
        for (const Flight* f : pool) {
          if (!s.airline || f->airline != *s.airline) options.push_back(f->airline);
        }
        if (options.empty()) {
          for (const auto& a : airlines()) {
            if (!s.airline || *s.airline != a.code) options.emplace_back(a.code);
          }
        }
        s.airline = pick(options);
        std::string name = airline_phrase(*s.airline);
        if (!elliptical) return "on " + name + (coin(0.5) ? " airlines" : "");
        switch (uniform_int(0, 3)) {
          case 0: return "on " + name + " airlines";
          case 1: return "only " + name + " flights";
          case 2: return "which ones are on " + name;
          default: return "show me " + name + " flights";
        }
      }
      case Kind::DepartAfter: {
        std::int64_t t = pool.empty() ? 100 * uniform_int(6, 18) : (pick(pool)->departure / 100 - 1) * 100;
        t = std::clamp<std::int64_t>(t, 500, 2100);
        if (s.depart_before && t >= *s.depart_before) t = std::max<std::int64_t>(500, *s.depart_before - 300);
        s.depart_after = t;
        std::string p = time_phrase(t);
        if (!elliptical) return "after " + p;
        return pick(std::vector<std::string>{"which ones leave after " + p, "after " + p, "departing after " + p});
      }
      case Kind::DepartBefore: {
        std::int64_t t = pool.empty() ? 100 * uniform_int(8, 22) : (pick(pool)->departure / 100 + 1) * 100;
        t = std::clamp<std::int64_t>(t, 700, 2300);
        if (s.depart_after && t <= *s.depart_after) t = std::min<std::int64_t>(2300, *s.depart_after + 300);
        s.depart_before = t;
        std::string p = time_phrase(t);
        if (!elliptical) return "before " + p;
        return pick(std::vector<std::string>{"which ones leave before " + p, "before " + p, "departing before " + p});
      }
      case Kind::ArriveAt: {
        std::int64_t t = pool.empty() ? 100 * uniform_int(8, 22) : pick(pool)->arrival;
        s.arrive_at = t;
        std::string p = time_phrase(t);
        if (!elliptical) return "arriving at " + p;
        return pick(std::vector<std::string>{"which ones arrive at " + p, "arriving at " + p});
      }
      case Kind::FlightNumber: {
        std::int64_t n = pool.empty() ? uniform_int(100, 2999) : pick(pool)->number;
        s.flight_number = n;
        std::string p = number_phrase(n);
        if (!elliptical) return "flight " + p;
        return pick(std::vector<std::string>{"what about flight " + p, "show me flight " + p});
      }
      case Kind::From:
      case Kind::To: {
        std::string& slot = k == Kind::From ? s.from_city : s.to_city;
        const std::string& other = k == Kind::From ? s.to_city : s.from_city;
        std::vector<std::string> options;
        for (const auto& c : cities()) {
          if (c.name != slot && c.name != other) options.emplace_back(c.name);
        }
        slot = pick(options);
        std::string name = to_lower(slot);
        if (k == Kind::From) return pick(std::vector<std::string>{"what about from " + name, "leaving from " + name + " instead"});
        return pick(std::vector<std::string>{"what about to " + name, "how about going to " + name + " instead"});
      }
    }
    return {};
  }

  std::string describe_all(const State& s) {
    std::string text = "from " + to_lower(s.from_city) + " to " + to_lower(s.to_city);
    for (Kind k : s.order) {
      switch (k) {
        case Kind::Date: {
          // Re-verbalize the stored date as an explicit month/day.
          unsigned day = static_cast<unsigned>(s.date->day());
          text += " on " + std::string(kMonths[static_cast<unsigned>(s.date->month()) - 1]) + " " + std::to_string(day);
          break;
        }
        case Kind::Airline: text += " on " + airline_phrase(*s.airline); break;
        case Kind::DepartAfter: text += " after " + time_phrase(*s.depart_after); break;
        case Kind::DepartBefore: text += " before " + time_phrase(*s.depart_before); break;
        case Kind::ArriveAt: text += " arriving at " + time_phrase(*s.arrive_at); break;
        case Kind::FlightNumber: text += " flight " + std::to_string(*s.flight_number); break;
        default: break;
      }
    }
    return text;
  }

  std::vector<Kind> addable(const State& s) const {
    std::vector<Kind> out;
    for (Kind k : {Kind::Date, Kind::Airline, Kind::DepartAfter, Kind::DepartBefore, Kind::ArriveAt, Kind::FlightNumber}) {
      if (!s.has(k)) out.push_back(k);
    }
    return out;
  }

  std::string fresh_request(State& s, const std::string& from, const std::string& to) {
    s = State{};
    s.from_city = from;
    s.to_city = to;
    s.order = {Kind::From, Kind::To};
    std::string text = pick(std::vector<std::string>{"show me flights", "i want to fly", "list flights",
                                                     "what flights go"}) +
                       " from " + to_lower(from) + " to " + to_lower(to);
    int extras = uniform_int(0, 2) == 0 ? 1 : 0;
    for (int e = 0; e < extras; ++e) {
      Kind k = pick(std::vector<Kind>{Kind::Date, Kind::Airline, Kind::DepartAfter});
      text += " " + assign(s, k, false);
      s.order.push_back(k);
    }
    return text;
  }

  Phenomenon sample_phenomenon() {
    std::discrete_distribution<int> dist(spec_.phenomenon_weights.begin(), spec_.phenomenon_weights.end());
    return static_cast<Phenomenon>(dist(rng_));
  }

  int sample_turns() {
    std::poisson_distribution<int> dist(std::max(0.0, spec_.turn_length.mean - 1.0));
    return std::clamp(1 + dist(rng_), 1, spec_.turn_length.max);
  }

  std::string target_change(State& s) {
    std::vector<Target> options;
    for (Target t : {Target::FlightId, Target::DepartureTime, Target::ArrivalTime, Target::AirlineCode, Target::Earliest}) {
      if (t != s.target) options.push_back(t);
    }
    s.target = pick(options);
    switch (s.target) {
      case Target::FlightId: return pick(std::vector<std::string>{"show me the flights", "list those flights"});
      case Target::DepartureTime: return pick(std::vector<std::string>{"what are their departure times", "when do they leave"});
      case Target::ArrivalTime: return pick(std::vector<std::string>{"what time do they arrive", "what are the arrival times"});
      case Target::AirlineCode: return pick(std::vector<std::string>{"which airlines are these", "what airlines fly those"});
      case Target::Earliest: return pick(std::vector<std::string>{"when does the earliest one leave", "what is the earliest departure"});
    }
    return {};
  }

  void generate_interaction(Interaction& interaction, std::vector<Phenomenon>& phenomena, const std::string& from,
                            const std::string& to) {
    doc_ = interaction.document_date;
    int n = sample_turns();
    State s;
    for (int i = 1; i <= n; ++i) {
      std::string text;
      Phenomenon p = i == 1 ? Phenomenon::FocusChange : sample_phenomenon();
      if (p == Phenomenon::ConstraintAdd && addable(s).empty()) p = Phenomenon::ConstraintReplace;
      switch (p) {
        case Phenomenon::FocusChange: {
          if (i == 1) {
            text = fresh_request(s, from, to);
          } else {
            auto [f, t] = city_pair();
            text = fresh_request(s, f, t);
          }
          break;
        }
        case Phenomenon::ConstraintAdd: {
          Kind k = pick(addable(s));
          text = assign(s, k, true);
          s.order.push_back(k);
          break;
        }
        case Phenomenon::ConstraintReplace: {
          Kind k = pick(s.order);
          if (k == Kind::From || k == Kind::To) {
            text = assign(s, k, true);
            break;
          }
          const State before = s;
          std::string phrase;
          for (int attempt = 0; attempt < 20; ++attempt) {
            s = before;
            phrase = assign(s, k, false);
            if (conjunct(s, k) != conjunct(before, k)) break;
          }
          if (conjunct(s, k) == conjunct(before, k)) {
            s = before;
            p = Phenomenon::TargetChange;
            text = target_change(s);
          } else {
            text = pick(std::vector<std::string>{"what about " + phrase, "how about " + phrase + " instead"});
          }
          break;
        }
        case Phenomenon::TargetChange:
          text = target_change(s);
          break;
        case Phenomenon::ExplicitReference: {
          auto options = addable(s);
          std::string extra;
          if (!options.empty()) {
            Kind k = pick(options);
            extra = " " + assign(s, k, false);
            s.order.push_back(k);
          }
          s.target = Target::FlightId;
          // describe_all covers the constraints including the new one; drop
          // the duplicated fragment.
          text = "show me flights " + describe_all(s);
          (void)extra;
          break;
        }
      }
      Turn turn;
      turn.utterance = make_utterance(text);
      turn.query = make_query({render(s)});
      interaction.turns.push_back(std::move(turn));
      phenomena.push_back(p);
    }
  }
};

}  // namespace

const char* phenomenon_name(Phenomenon p) {
  switch (p) {
    case Phenomenon::ConstraintAdd: return "constraint-add";
    case Phenomenon::ConstraintReplace: return "constraint-replace";
    case Phenomenon::TargetChange: return "target-change";
    case Phenomenon::FocusChange: return "focus-change";
    case Phenomenon::ExplicitReference: return "explicit-reference";
  }
  return "?";
}

void CorpusSpec::validate() const {
  if (n_interactions < 0) throw DataError("n_interactions must be non-negative");
  if (!(turn_length.mean >= 1.0) || turn_length.max < 1) throw DataError("turn length distribution must be positive");
  if (!(interactions_per_scenario >= 1.0)) throw DataError("interactions_per_scenario must be at least 1");
  double total = 0.0;
  for (double w : phenomenon_weights) {
    if (w < 0.0) throw DataError("phenomenon weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("phenomenon weights must sum to 1");
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& doc) {
  CorpusSpec spec;
  for (const auto& [key, value] : doc.items()) {
    if (key == "n_interactions") {
      spec.n_interactions = value.get<int>();
    } else if (key == "mean_turns") {
      spec.turn_length.mean = value.get<double>();
    } else if (key == "max_turns") {
      spec.turn_length.max = value.get<int>();
    } else if (key == "interactions_per_scenario") {
      spec.interactions_per_scenario = value.get<double>();
    } else if (key == "seed") {
      spec.seed = value.get<std::uint64_t>();
    } else if (key == "phenomenon_weights") {
      spec.phenomenon_weights.fill(0.0);
      for (const auto& [name, w] : value.items()) {
        bool found = false;
        for (std::size_t p = 0; p < kPhenomenonCount; ++p) {
          if (name == phenomenon_name(static_cast<Phenomenon>(p))) {
            spec.phenomenon_weights[p] = w.get<double>();
            found = true;
          }
        }
        if (!found) throw DataError("unknown phenomenon '" + name + "'");
      }
    } else {
      throw DataError("unknown corpus spec key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

Database build_flight_database(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedf1a9ULL);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Database db;

  Table city{"city", {{"city_code", ColumnType::Text}, {"city_name", ColumnType::Text}, {"state_code", ColumnType::Text}}, {}};
  Table service{"airport_service", {{"city_code", ColumnType::Text}, {"airport_code", ColumnType::Text}}, {}};
  for (const auto& c : cities()) {
    city.rows.push_back({std::string(c.code), std::string(c.name), std::string(c.code).substr(1, 2)});
    for (const char* ap : c.airports) service.rows.push_back({std::string(c.code), std::string(ap)});
  }

  Table airline{"airline", {{"airline_code", ColumnType::Text}, {"airline_name", ColumnType::Text}}, {}};
  for (const auto& a : airlines()) airline.rows.push_back({std::string(a.code), std::string(a.name)});

  Table days{"days", {{"days_code", ColumnType::Text}, {"day_name", ColumnType::Text}}, {}};
  for (const char* d : kWeekdays) days.rows.push_back({std::string(d), std::string(d)});
  for (const char* code : {"DAILY", "WEEKDAYS", "WEEKEND"}) {
    for (const auto& d : days_code_weekdays(code)) days.rows.push_back({std::string(code), d});
  }

  Table date_day{"date_day",
                 {{"year", ColumnType::Int}, {"month_number", ColumnType::Int}, {"day_number", ColumnType::Int},
                  {"day_name", ColumnType::Text}},
                 {}};
  for (Date d{std::chrono::year{1993}, std::chrono::month{1}, std::chrono::day{1}};
       d.year() < std::chrono::year{1995}; d = add_days(d, 1)) {
    date_day.rows.push_back({static_cast<std::int64_t>(static_cast<int>(d.year())),
                             static_cast<std::int64_t>(static_cast<unsigned>(d.month())),
                             static_cast<std::int64_t>(static_cast<unsigned>(d.day())),
                             std::string(kWeekdays[weekday_index(d)])});
  }

  Table flight{"flight",
               {{"flight_id", ColumnType::Int},
                {"airline_code", ColumnType::Text},
                {"flight_number", ColumnType::Int},
                {"from_airport", ColumnType::Text},
                {"to_airport", ColumnType::Text},
                {"departure_time", ColumnType::Int},
                {"arrival_time", ColumnType::Int},
                {"flight_days", ColumnType::Text}},
               {}};
  std::set<std::int64_t> used_numbers;
  std::int64_t next_id = 100001;
  const auto& cs = cities();
  const std::vector<std::string> day_codes = {"DAILY", "DAILY", "DAILY", "WEEKDAYS", "WEEKEND", "MONDAY",
                                              "TUESDAY", "WEDNESDAY", "THURSDAY", "FRIDAY", "SATURDAY", "SUNDAY"};
  for (const auto& from : cs) {
    for (const auto& to : cs) {
      if (&from == &to) continue;
      int n = uniform(4, 8);
      for (int k = 0; k < n; ++k) {
        const auto& al = airlines()[static_cast<std::size_t>(uniform(0, static_cast<int>(airlines().size()) - 1))];
        std::int64_t number;
        do {
          number = uniform(100, 2999);
        } while (!used_numbers.insert(number).second);
        std::int64_t dep = 100 * uniform(5, 21) + 30 * uniform(0, 1);
        int duration = 60 * uniform(1, 5) + 30 * uniform(0, 1);
        std::int64_t dep_min = (dep / 100) * 60 + dep % 100;
        std::int64_t arr_min = std::min<std::int64_t>(dep_min + duration, 23 * 60 + 30);
        std::int64_t arr = (arr_min / 60) * 100 + arr_min % 60;
        flight.rows.push_back({next_id++, std::string(al.code), number,
                               std::string(from.airports[static_cast<std::size_t>(uniform(0, static_cast<int>(from.airports.size()) - 1))]),
                               std::string(to.airports[static_cast<std::size_t>(uniform(0, static_cast<int>(to.airports.size()) - 1))]),
                               dep, arr, day_codes[static_cast<std::size_t>(uniform(0, static_cast<int>(day_codes.size()) - 1))]});
      }
    }
  }

  for (auto* t : {&city, &service, &airline, &days, &date_day, &flight}) db.tables.emplace(t->name, std::move(*t));
  db.entity_columns = {{"city", "city_name", "CITY", ""}, {"airline", "airline_code", "AIRLINE", "airline_name"}};
  return db;
}

SyntheticCorpus generate_synthetic_corpus(const CorpusSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

}  // namespace ctxsql::corpus
