#pragma once

#include <set>
#include <string>
#include <vector>

#include "ctxsql/sqlkit/sql.hpp"

namespace ctxsql::sqlkit {

// A copyable span of a previous query. Turn and token indices are 1-based:
// tokens == query_b[l..r] (inclusive).
struct Segment {
  int a = 0;  // first query containing the segment
  int b = 0;  // query the span is taken from
  std::size_t l = 0;
  std::size_t r = 0;
  std::vector<std::string> tokens;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const Segment&) const = default;
};

struct SegmentSet {
  int turn = 0;  // i: the set is S_{i-1}, used while generating query i
  std::vector<Segment> segments;

  bool empty() const { return segments.empty(); }
  std::size_t size() const { return segments.size(); }
};

// 1-based reference surface form.
std::string segment_reference(std::size_t k);
// Returns the 1-based index of a SEGMENT#k token, or 0.
std::size_t segment_reference_index(std::string_view token);

// Spans of the parse of `query` that are extractable as segments, in
// pre-order (start ascending, longer first). 0-based half-open spans.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  auto operator<=>(const Span&) const = default;
};
std::vector<Span> extractable_spans(const SqlNode& tree);

// Builds S_{b} from query `b` (1-based turn index of `source_query`). The
// `a` index of each segment is the earliest turn whose segment set already
// contained an identical token sequence (prior_sets are S_1 .. S_{b-1}
// keyed by the turns of their source queries), else b. Returns an empty set
// when the query does not parse.
SegmentSet extract_segments(const std::vector<std::string>& source_query, int b,
                            const std::vector<SegmentSet>& prior_sets);

// Replaces segments (longest first) occurring in `gold` by SEGMENT#k
// references, skipping segments that contain any of `protected_tokens`
// (entities mentioned in the current utterance). Replaced regions are not
// matched again.
std::vector<std::string> align_gold_with_segments(const std::vector<std::string>& gold, const SegmentSet& segments,
                                                  const std::set<std::string>& protected_tokens);

// Inverse of alignment: replaces each SEGMENT#k by the segment's tokens.
std::vector<std::string> expand_segment_references(const std::vector<std::string>& aligned,
                                                   const SegmentSet& segments);

}  // namespace ctxsql::sqlkit
