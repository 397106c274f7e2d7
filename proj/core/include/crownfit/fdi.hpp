#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace crownfit {

enum class Jaw { Upper, Lower };
enum class Side { Left, Right, Center };

const char* to_string(Jaw jaw);
const char* to_string(Side side);
Jaw jaw_from_string(const std::string& s);
Side side_from_string(const std::string& s);

/// Topological scan category used to route template selection.
enum class ScanClass { FullUpper, FullLower, PartialLeft, PartialRight, PartialCenter };

inline constexpr ScanClass kAllScanClasses[] = {ScanClass::FullUpper, ScanClass::FullLower, ScanClass::PartialLeft,
                                                ScanClass::PartialRight, ScanClass::PartialCenter};

const char* to_string(ScanClass c);
ScanClass scan_class_from_string(const std::string& s);
inline bool is_full(ScanClass c) { return c == ScanClass::FullUpper || c == ScanClass::FullLower; }
/// Side of a partial class (throws for full classes).
Side partial_side(ScanClass c);

/// FDI two-digit tooth code: quadrant 1-4 (1 upper right, 2 upper left,
/// 3 lower left, 4 lower right), position 1-8 from the midline.
namespace fdi {

bool is_valid(int code);
/// Throws Argument for codes outside 11-18, 21-28, 31-38, 41-48.
void require_valid(int code);

inline int quadrant(int code) { return code / 10; }
inline int position(int code) { return code % 10; }
Jaw jaw(int code);
/// Patient side; Left for quadrants 2 and 3.
Side side(int code);
int make(Jaw jaw, Side side, int position);

/// Label class 1-16 within a jaw: right side = position, left side = 8 + position.
std::uint8_t tooth_class(int code);
int from_class(Jaw jaw, std::uint8_t cls);
/// Side of a label class (1-8 right, 9-16 left).
Side class_side(std::uint8_t cls);
int class_position(std::uint8_t cls);

/// Signed arch ordering key: right side -position, left side +position, so
/// sorting by key walks the arch from the right distal end to the left one.
int arch_key(int code);
int class_arch_key(std::uint8_t cls);

/// Premolars and molars (position >= 4).
bool is_posterior(int code);

/// Next tooth toward the midline; position 1 crosses to the other quadrant.
int mesial_neighbor(int code);
/// Next tooth away from the midline; nullopt past position 8.
std::optional<int> distal_neighbor(int code);

}  // namespace fdi

}  // namespace crownfit
