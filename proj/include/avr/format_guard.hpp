#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avr/image.hpp"

namespace avr {

/// H x W binary matrix, row-major.
struct FormatMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  double ones_fraction() const;
  bool all_ones() const;
};

/// Global predicates of the mask, in evaluation order.
enum class FormatPredicate { bit_depth, color_space, metadata, representable };
std::string to_string(FormatPredicate p);

/// Entry (i, j) is 1 iff the candidate's bit depth, colour space and
/// metadata match the reference and every channel of pixel (i, j) fits the
/// reference bit depth. Throws DomainError on a spatial size mismatch.
FormatMask compute_format_mask(const ImageFrame& candidate, const ImageFrame& reference);

/// Same mask against a bare reference format (used when only a manifest's
/// declared format is available).
FormatMask compute_format_mask(const ImageFrame& candidate, const FormatSpec& reference,
                               int reference_channels);

/// One correction step: I' = I (.) M + I_ref (.) (1 - M). The result carries
/// the reference's format descriptor.
ImageFrame iterative_correct(const ImageFrame& candidate, const ImageFrame& reference,
                             const FormatMask& mask);

struct GuardReport {
  double ones_fraction = 1.0;            // mask before any correction
  std::vector<FormatPredicate> failing;  // predicates that failed anywhere
  bool corrected = false;
  int iterations = 0;
  double final_ones_fraction = 1.0;
};

struct GuardResult {
  ImageFrame frame;
  GuardReport report;
};

inline constexpr int kMaxGuardIterations = 4;

/// Mask, then correct until the recomputed mask is all ones (at most
/// kMaxGuardIterations rounds).
GuardResult apply_guard(const ImageFrame& candidate, const ImageFrame& reference);

GuardReport verify_frame(const ImageFrame& frame, const ImageFrame& reference);

/// Predicate-only check against a declared format.
GuardReport verify_format(const ImageFrame& frame, const FormatSpec& reference,
                          int reference_channels);

std::string report_to_json(const GuardReport& r);

}  // namespace avr
