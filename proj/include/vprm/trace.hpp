// Structured reasoning-trace text format: a <think> block holding numbered
// "Step k: name" / "Answer: label" sections followed by an <answer> block
// holding a single "risk: high | low | moderate" line.
//
// Parsing is two-tier. format_ok is the strict template flag: one think
// block then one answer block, contiguous step numbering from 1, exactly one
// Answer line per step, exactly one recognized risk line in the answer
// block, nothing but whitespace outside the blocks. ok is the lenient flag:
// at least one step pair and a recognized risk token could be recovered from
// anywhere in the text. Step names outside the domain schema are retained
// verbatim; verification scores them later.
#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vprm/common.hpp"
#include "vprm/schema.hpp"

namespace vprm {

struct TraceStep {
  std::string name;       // step identifier as emitted (trimmed, not normalized)
  std::string label;      // step label as emitted (trimmed, not normalized)
  std::string rationale;  // free text between the Step and Answer lines; may be empty

  bool operator==(const TraceStep&) const = default;
};

struct ReasoningTrace {
  DomainId domain = DomainId::A;
  std::vector<TraceStep> steps;
  RiskLabel risk = RiskLabel::Moderate;

  bool operator==(const ReasoningTrace&) const = default;
};

struct Diagnostic {
  int line = 0;  // 1-based line in the original text; 0 when not line-specific
  std::string message;
};

struct ParseReport {
  bool ok = false;         // lenient: a trace could be recovered
  bool format_ok = false;  // strict: the template was matched exactly
  std::optional<ReasoningTrace> trace;
  std::vector<Diagnostic> diagnostics;
};

// format reward is binary: 1 iff the strict template matched
inline int format_reward(const ParseReport& report) { return report.format_ok ? 1 : 0; }

namespace detail {

struct TagSpan {
  std::size_t content_begin = 0;  // first char after the open tag
  std::size_t content_end = 0;    // first char of the close tag
  std::size_t open_pos = 0;
  bool closed = false;
};

inline std::string to_lower_copy(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<TagSpan> find_tag_spans(const std::string& lower, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::vector<TagSpan> spans;
  std::size_t pos = 0;
  while ((pos = lower.find(open, pos)) != std::string::npos) {
    TagSpan span;
    span.open_pos = pos;
    span.content_begin = pos + open.size();
    const std::size_t close_pos = lower.find(close, span.content_begin);
    if (close_pos == std::string::npos) {
      span.content_end = lower.size();
      span.closed = false;
      spans.push_back(span);
      break;
    }
    span.content_end = close_pos;
    span.closed = true;
    spans.push_back(span);
    pos = close_pos + close.size();
  }
  return spans;
}

inline int line_of(const std::string& text, std::size_t pos) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

// Matches "step <number> : <rest>" case-insensitively; returns false otherwise.
inline bool match_step_line(std::string_view line, int& number, std::string& rest) {
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  };
  skip_ws();
  static constexpr std::string_view kw = "step";
  for (char c : kw) {
    if (i >= line.size() || std::tolower(static_cast<unsigned char>(line[i])) != c) return false;
    ++i;
  }
  if (i >= line.size() || !std::isspace(static_cast<unsigned char>(line[i]))) return false;
  skip_ws();
  std::size_t digits_begin = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == digits_begin) return false;
  number = std::stoi(std::string(line.substr(digits_begin, i - digits_begin)));
  skip_ws();
  if (i >= line.size() || line[i] != ':') return false;
  ++i;
  rest = trim(line.substr(i));
  return true;
}

// Matches "<keyword> : <rest>" case-insensitively ("answer:" / "risk:" lines).
inline bool match_kw_line(std::string_view line, std::string_view kw, std::string& rest) {
  std::size_t i = 0;
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  for (char c : kw) {
    if (i >= line.size() || std::tolower(static_cast<unsigned char>(line[i])) != c) return false;
    ++i;
  }
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  if (i >= line.size() || line[i] != ':') return false;
  ++i;
  rest = trim(line.substr(i));
  return true;
}

struct LineView {
  std::string_view text;
  int number;  // 1-based in the original document
};

inline std::vector<LineView> split_lines(std::string_view region, int first_line) {
  std::vector<LineView> lines;
  std::size_t start = 0;
  int number = first_line;
  while (start <= region.size()) {
    std::size_t nl = region.find('\n', start);
    std::size_t end = (nl == std::string_view::npos) ? region.size() : nl;
    std::string_view line = region.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({line, number});
    if (nl == std::string_view::npos) break;
    start = nl + 1;
    ++number;
  }
  return lines;
}

struct ParsedStep {
  int number = 0;
  TraceStep step;
  int answer_lines = 0;
  bool has_answer = false;
  int line = 0;
};

// Walks the step region: a Step line opens a section, lines until its Answer
// line form the rationale, content after the Answer (before the next Step)
// is ignored.
inline std::vector<ParsedStep> parse_steps(std::string_view region, int first_line,
                                           std::vector<Diagnostic>& diags) {
  std::vector<ParsedStep> steps;
  ParsedStep* current = nullptr;
  std::vector<std::string> rationale_lines;
  auto flush_rationale = [&] {
    if (current == nullptr) return;
    std::string joined;
    for (std::size_t i = 0; i < rationale_lines.size(); ++i) {
      if (i > 0) joined.push_back('\n');
      joined += rationale_lines[i];
    }
    current->step.rationale = joined;
    rationale_lines.clear();
  };

  for (const LineView& lv : split_lines(region, first_line)) {
    int number = 0;
    std::string rest;
    if (match_step_line(lv.text, number, rest)) {
      if (current != nullptr && !current->has_answer) {
        diags.push_back({current->line, "step " + std::to_string(current->number) +
                                            " has no Answer line and was dropped"});
        steps.pop_back();
      }
      rationale_lines.clear();
      steps.push_back({});
      current = &steps.back();
      current->number = number;
      current->line = lv.number;
      current->step.name = rest;
      if (normalize_ident(rest).empty()) {
        diags.push_back({lv.number, "step " + std::to_string(number) + " has an empty name"});
      }
      continue;
    }
    if (match_kw_line(lv.text, "answer", rest)) {
      if (current == nullptr) {
        diags.push_back({lv.number, "Answer line outside any step section"});
        continue;
      }
      ++current->answer_lines;
      if (current->answer_lines == 1) {
        flush_rationale();
        current->step.label = rest;
        current->has_answer = true;
        if (normalize_ident(rest).empty()) {
          diags.push_back({lv.number, "step " + std::to_string(current->number) +
                                          " has an empty Answer"});
        }
      } else {
        diags.push_back({lv.number, "step " + std::to_string(current->number) +
                                        " has multiple Answer lines"});
      }
      continue;
    }
    if (current != nullptr && !current->has_answer) {
      rationale_lines.emplace_back(lv.text);
    }
  }
  if (current != nullptr && !current->has_answer) {
    diags.push_back({current->line, "step " + std::to_string(current->number) +
                                        " has no Answer line and was dropped"});
    steps.pop_back();
  }
  return steps;
}

}  // namespace detail

inline ParseReport parse_trace(const std::string& text, DomainId domain) {
  using namespace detail;
  ParseReport report;
  auto& diags = report.diagnostics;
  bool strict = true;
  auto violate = [&](int line, const std::string& msg) {
    strict = false;
    diags.push_back({line, msg});
  };

  const std::string lower = to_lower_copy(text);
  const auto think_spans = find_tag_spans(lower, "think");
  const auto answer_spans = find_tag_spans(lower, "answer");

  if (think_spans.empty()) violate(0, "no <think> block found");
  if (think_spans.size() > 1) violate(line_of(text, think_spans[1].open_pos), "multiple <think> blocks");
  if (answer_spans.empty()) violate(0, "no <answer> block found");
  if (answer_spans.size() > 1) violate(line_of(text, answer_spans[1].open_pos), "duplicate <answer> blocks");
  for (const auto& s : think_spans) {
    if (!s.closed) violate(line_of(text, s.open_pos), "unterminated <think> block");
  }
  for (const auto& s : answer_spans) {
    if (!s.closed) violate(line_of(text, s.open_pos), "unterminated <answer> block");
  }
  if (!think_spans.empty() && !answer_spans.empty() &&
      answer_spans.front().open_pos < think_spans.front().content_end) {
    violate(line_of(text, answer_spans.front().open_pos), "<answer> block must follow the <think> block");
  }

  // strictness: only whitespace may appear outside the tagged blocks
  if (think_spans.size() == 1 && answer_spans.size() == 1 && think_spans[0].closed &&
      answer_spans[0].closed) {
    const std::string close_think = "</think>";
    const std::string close_answer = "</answer>";
    const std::size_t think_end = think_spans[0].content_end + close_think.size();
    const std::size_t answer_end = answer_spans[0].content_end + close_answer.size();
    const std::string_view before(text.data(), think_spans[0].open_pos);
    if (!is_blank(before)) violate(1, "content before the <think> block");
    if (answer_spans[0].open_pos >= think_end) {
      const std::string_view between(text.data() + think_end, answer_spans[0].open_pos - think_end);
      if (!is_blank(between)) {
        violate(line_of(text, think_end), "content between the <think> and <answer> blocks");
      }
    }
    if (answer_end <= text.size()) {
      const std::string_view after(text.data() + answer_end, text.size() - answer_end);
      if (!is_blank(after)) violate(line_of(text, answer_end), "content after the <answer> block");
    }
  }

  // step extraction: the think block when present, otherwise the whole text
  std::string_view step_region;
  int step_region_line = 1;
  if (!think_spans.empty()) {
    const auto& s = think_spans.front();
    step_region = std::string_view(text).substr(s.content_begin, s.content_end - s.content_begin);
    step_region_line = line_of(text, s.content_begin);
  } else {
    step_region = text;
  }
  const std::size_t diags_before = diags.size();
  std::vector<ParsedStep> parsed = parse_steps(step_region, step_region_line, diags);
  // every step-walker diagnostic (dropped step, duplicate Answer, empty
  // name/label) is a template violation
  if (diags.size() > diags_before) strict = false;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i].number != static_cast<int>(i) + 1) {
      violate(parsed[i].line, "step numbering breaks at '" + std::to_string(parsed[i].number) +
                                  "' (expected " + std::to_string(i + 1) + ")");
      break;
    }
  }
  if (parsed.empty()) violate(0, "no step/Answer pairs found");

  // risk extraction: recognized risk lines inside answer blocks take
  // precedence; the lenient path falls back to the whole text
  std::optional<RiskLabel> risk;
  int risk_lines_in_answer = 0;
  for (const auto& span : answer_spans) {
    const std::string_view region =
        std::string_view(text).substr(span.content_begin, span.content_end - span.content_begin);
    for (const LineView& lv : split_lines(region, line_of(text, span.content_begin))) {
      std::string rest;
      if (match_kw_line(lv.text, "risk", rest)) {
        ++risk_lines_in_answer;
        if (auto r = try_risk_from_string(rest)) {
          risk = *r;  // last recognized wins
        } else {
          violate(lv.number, "unrecognized risk token '" + rest + "'");
        }
      } else if (!is_blank(lv.text)) {
        violate(lv.number, "unexpected content in <answer> block");
      }
    }
  }
  if (risk_lines_in_answer != 1) strict = false;
  if (!risk.has_value()) {
    for (const LineView& lv : split_lines(text, 1)) {
      std::string rest;
      if (match_kw_line(lv.text, "risk", rest)) {
        if (auto r = try_risk_from_string(rest)) {
          risk = *r;
          strict = false;  // risk recovered outside a well-formed answer block
        } else if (answer_spans.empty()) {
          violate(lv.number, "unrecognized risk token '" + rest + "'");
        }
      }
    }
  }
  if (!risk.has_value() && diags.empty()) {
    violate(0, "no risk token found");
  }

  // lenient acceptance: at least one step pair plus a recognized risk
  std::vector<TraceStep> steps;
  for (auto& p : parsed) {
    if (p.has_answer && !normalize_ident(p.step.name).empty() &&
        !normalize_ident(p.step.label).empty()) {
      steps.push_back(std::move(p.step));
    } else {
      strict = false;
    }
  }
  if (!risk.has_value()) {
    report.ok = false;
    report.format_ok = false;
    if (std::none_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
          return d.message.find("risk") != std::string::npos;
        })) {
      diags.push_back({0, "no risk token found"});
    }
    return report;
  }
  if (steps.empty()) {
    report.ok = false;
    report.format_ok = false;
    return report;
  }
  report.ok = true;
  report.format_ok = strict;
  ReasoningTrace trace;
  trace.domain = domain;
  trace.steps = std::move(steps);
  trace.risk = *risk;
  report.trace = std::move(trace);
  return report;
}

// Canonical template emitter; parse_trace(render_trace(t)) reproduces t with
// format_ok, provided no rationale line itself starts a template keyword.
inline std::string render_trace(const ReasoningTrace& trace) {
  std::string out = "<think>\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const TraceStep& s = trace.steps[i];
    out += "Step " + std::to_string(i + 1) + ": " + s.name + "\n";
    if (!s.rationale.empty()) {
      out += s.rationale;
      out += "\n";
    }
    out += "Answer: " + s.label + "\n";
    if (i + 1 < trace.steps.size()) out += "\n";
  }
  out += "</think>\n<answer>\nrisk: " + risk_to_string(trace.risk) + "\n</answer>\n";
  return out;
}

}  // namespace vprm
