#include "avr/format_guard.hpp"

#include <algorithm>
#include <json.hpp>

#include "avr/errors.hpp"

namespace avr {

namespace {

struct GlobalChecks {
  bool bit_depth = true;
  bool color_space = true;
  bool metadata = true;
  bool all() const { return bit_depth && color_space && metadata; }
};

GlobalChecks global_checks(const FormatSpec& cand, const FormatSpec& ref) {
  return {cand.bit_depth == ref.bit_depth, cand.color_space == ref.color_space,
          cand.metadata == ref.metadata};
}

std::vector<FormatPredicate> failing_predicates(const GlobalChecks& g, bool representable) {
  std::vector<FormatPredicate> out;
  if (!g.bit_depth) out.push_back(FormatPredicate::bit_depth);
  if (!g.color_space) out.push_back(FormatPredicate::color_space);
  if (!g.metadata) out.push_back(FormatPredicate::metadata);
  if (!representable) out.push_back(FormatPredicate::representable);
  return out;
}

FormatMask build_mask(const ImageFrame& cand, const FormatSpec& ref, bool* representable) {
  FormatMask m{cand.width(), cand.height(),
               std::vector<std::uint8_t>(static_cast<std::size_t>(cand.width()) * cand.height())};
  const GlobalChecks g = global_checks(cand.format(), ref);
  const std::uint16_t maxv = ref.max_value();
  const int ch = cand.channels();
  bool all_repr = true;
  for (int y = 0; y < cand.height(); ++y) {
    const auto row = cand.row(y);
    for (int x = 0; x < cand.width(); ++x) {
      const std::uint16_t* px = row.data() + static_cast<std::size_t>(x) * ch;
      const bool repr = std::all_of(px, px + ch, [maxv](std::uint16_t v) { return v <= maxv; });
      all_repr = all_repr && repr;
      m.bits[static_cast<std::size_t>(y) * m.width + x] = (g.all() && repr) ? 1 : 0;
    }
  }
  if (representable) *representable = all_repr;
  return m;
}

}  // namespace

double FormatMask::ones_fraction() const {
  if (bits.empty()) return 1.0;
  const auto ones = std::count(bits.begin(), bits.end(), std::uint8_t{1});
  return static_cast<double>(ones) / static_cast<double>(bits.size());
}

bool FormatMask::all_ones() const {
  return std::all_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b == 1; });
}

std::string to_string(FormatPredicate p) {
  switch (p) {
    case FormatPredicate::bit_depth:
      return "bit_depth";
    case FormatPredicate::color_space:
      return "color_space";
    case FormatPredicate::metadata:
      return "metadata";
    case FormatPredicate::representable:
      return "representable";
  }
  return "unknown";
}

FormatMask compute_format_mask(const ImageFrame& candidate, const ImageFrame& reference) {
  if (candidate.size() != reference.size() || candidate.channels() != reference.channels()) {
    throw DomainError("format mask needs frames of identical shape");
  }
  return build_mask(candidate, reference.format(), nullptr);
}

FormatMask compute_format_mask(const ImageFrame& candidate, const FormatSpec& reference,
                               int reference_channels) {
  if (candidate.channels() != reference_channels) {
    throw DomainError("format mask needs frames of identical shape");
  }
  return build_mask(candidate, reference, nullptr);
}

ImageFrame iterative_correct(const ImageFrame& candidate, const ImageFrame& reference,
                             const FormatMask& mask) {
  if (candidate.size() != reference.size() || candidate.channels() != reference.channels() ||
      mask.width != candidate.width() || mask.height != candidate.height()) {
    throw DomainError("correction needs frames and mask of identical shape");
  }
  ImageFrame out(reference.width(), reference.height(), reference.channels(), reference.format());
  const int ch = reference.channels();
  for (int y = 0; y < out.height(); ++y) {
    const auto c_row = candidate.row(y);
    const auto r_row = reference.row(y);
    auto o_row = out.row(y);
    for (int x = 0; x < out.width(); ++x) {
      const auto& src = mask.at(x, y) ? c_row : r_row;
      const std::size_t off = static_cast<std::size_t>(x) * ch;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(off), ch,
                  o_row.begin() + static_cast<std::ptrdiff_t>(off));
    }
  }
  return out;
}

GuardResult apply_guard(const ImageFrame& candidate, const ImageFrame& reference) {
  if (candidate.size() != reference.size() || candidate.channels() != reference.channels()) {
    throw DomainError("format guard needs frames of identical shape");
  }
  GuardResult result{candidate, {}};
  bool representable = true;
  FormatMask mask = build_mask(candidate, reference.format(), &representable);
  result.report.ones_fraction = mask.ones_fraction();
  result.report.failing =
      failing_predicates(global_checks(candidate.format(), reference.format()), representable);
  while (!mask.all_ones() && result.report.iterations < kMaxGuardIterations) {
    result.frame = iterative_correct(result.frame, reference, mask);
    ++result.report.iterations;
    result.report.corrected = true;
    mask = build_mask(result.frame, reference.format(), nullptr);
  }
  result.report.final_ones_fraction = mask.ones_fraction();
  return result;
}

GuardReport verify_frame(const ImageFrame& frame, const ImageFrame& reference) {
  return apply_guard(frame, reference).report;
}

GuardReport verify_format(const ImageFrame& frame, const FormatSpec& reference,
                          int reference_channels) {
  bool representable = true;
  if (frame.channels() != reference_channels) {
    throw DomainError("frame channel count disagrees with the reference format");
  }
  const FormatMask mask = build_mask(frame, reference, &representable);
  GuardReport r;
  r.ones_fraction = mask.ones_fraction();
  r.final_ones_fraction = r.ones_fraction;
  r.failing = failing_predicates(global_checks(frame.format(), reference), representable);
  return r;
}

std::string report_to_json(const GuardReport& r) {
  nlohmann::json j;
  j["ones_fraction"] = r.ones_fraction;
  j["failing"] = nlohmann::json::array();
  for (auto p : r.failing) j["failing"].push_back(to_string(p));
  j["corrected"] = r.corrected;
  j["iterations"] = r.iterations;
  j["final_ones_fraction"] = r.final_ones_fraction;
  return j.dump();
}

}  // namespace avr
