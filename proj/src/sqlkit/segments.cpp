#include "ctxsql/sqlkit/segments.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>

namespace ctxsql::sqlkit {

namespace {

bool has_min_max(const SqlNode& select) {
  const SqlNode& proj = select.children.front();
  for (const auto& item : proj.children) {
    if (item.kind == NodeKind::Aggregate && (item.value == "MIN" || item.value == "MAX")) return true;
  }
  return false;
}

class SpanCollector {
 public:
  std::vector<Span> spans;

  void visit_root(const SqlNode& root) {
    if (root.children.size() > 1) {
      const SqlNode& proj = root.children.front();
      spans.push_back({proj.begin, proj.end});
    }
    visit_select(root);
  }

 private:
  void visit_select(const SqlNode& select) {
    if (has_min_max(select)) spans.push_back({select.begin, select.end});
    if (select.children.size() < 2) return;
    const SqlNode& body = select.children[1].children.front();
    if (body.kind == NodeKind::AndList) {
      // Children of the top conjunction become distinct segments; the list itself does not.
      for (const auto& child : body.children) visit_condition(child);
    } else {
      visit_condition(body);
    }
  }

  void visit_condition(const SqlNode& node) {
    spans.push_back({node.begin, node.end});
    switch (node.kind) {
      case NodeKind::AndList:
      case NodeKind::OrList:
        for (const auto& child : node.children) visit_condition(child);
        break;
      case NodeKind::InSubquery:
      case NodeKind::Condition: {
        const SqlNode& rhs = node.children.back();
        if (rhs.kind == NodeKind::Select) {
          spans.push_back({rhs.begin, rhs.end});
          visit_select(rhs);
        }
        break;
      }
      default:
        break;
    }
  }
};

}  // namespace

std::string segment_reference(std::size_t k) { return "SEGMENT#" + std::to_string(k); }

std::size_t segment_reference_index(std::string_view token) {
  if (!is_segment_reference(token)) return 0;
  std::size_t k = 0;
  std::from_chars(token.data() + 8, token.data() + token.size(), k);
  return k;
}

std::vector<Span> extractable_spans(const SqlNode& tree) {
  SpanCollector collector;
  collector.visit_root(tree);
  auto spans = std::move(collector.spans);
  std::sort(spans.begin(), spans.end(), [](const Span& x, const Span& y) {
    return x.begin != y.begin ? x.begin < y.begin : x.end > y.end;
  });
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  return spans;
}

SegmentSet extract_segments(const std::vector<std::string>& source_query, int b,
                            const std::vector<SegmentSet>& prior_sets) {
  SegmentSet set;
  set.turn = b + 1;
  SqlNode tree;
  try {
    tree = parse_sql(source_query);
  } catch (const SqlParseError&) {
    return set;
  }
  for (const auto& span : extractable_spans(tree)) {
    std::vector<std::string> tokens(source_query.begin() + static_cast<std::ptrdiff_t>(span.begin),
                                    source_query.begin() + static_cast<std::ptrdiff_t>(span.end));
    bool duplicate = std::any_of(set.segments.begin(), set.segments.end(),
                                 [&](const Segment& s) { return s.tokens == tokens; });
    if (duplicate) continue;
    Segment seg;
    seg.b = b;
    seg.a = b;
    for (const auto& prior : prior_sets) {
      for (const auto& p : prior.segments) {
        if (p.tokens == tokens) seg.a = std::min(seg.a, p.a);
      }
    }
    seg.l = span.begin + 1;
    seg.r = span.end;
    seg.tokens = std::move(tokens);
    set.segments.push_back(std::move(seg));
  }
  return set;
}

std::vector<std::string> align_gold_with_segments(const std::vector<std::string>& gold, const SegmentSet& segments,
                                                  const std::set<std::string>& protected_tokens) {
  std::vector<std::string> aligned = gold;
  std::vector<bool> opaque(gold.size(), false);

  std::vector<std::size_t> order(segments.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return segments.segments[x].length() > segments.segments[y].length();
  });

  for (std::size_t k : order) {
    const auto& seg = segments.segments[k].tokens;
    if (seg.empty()) continue;
    bool mentions_entity = std::any_of(seg.begin(), seg.end(),
                                       [&](const std::string& t) { return protected_tokens.count(t) > 0; });
    if (mentions_entity) continue;

    std::vector<std::string> next;
    std::vector<bool> next_opaque;
    std::size_t i = 0;
    while (i < aligned.size()) {
      bool match = i + seg.size() <= aligned.size();
      for (std::size_t j = 0; match && j < seg.size(); ++j) {
        match = !opaque[i + j] && aligned[i + j] == seg[j];
      }
      if (match) {
        next.push_back(segment_reference(k + 1));
        next_opaque.push_back(true);
        i += seg.size();
      } else {
        next.push_back(aligned[i]);
        next_opaque.push_back(opaque[i]);
        ++i;
      }
    }
    aligned = std::move(next);
    opaque = std::move(next_opaque);
  }
  return aligned;
}

std::vector<std::string> expand_segment_references(const std::vector<std::string>& aligned,
                                                   const SegmentSet& segments) {
  std::vector<std::string> out;
  for (const auto& t : aligned) {
    std::size_t k = segment_reference_index(t);
    if (k >= 1 && k <= segments.size()) {
      const auto& seg = segments.segments[k - 1].tokens;
      out.insert(out.end(), seg.begin(), seg.end());
    } else {
      out.push_back(t);
    }
  }
  return out;
}

}  // namespace ctxsql::sqlkit
