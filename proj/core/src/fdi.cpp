#include "crownfit/fdi.hpp"

#include "crownfit/error.hpp"

namespace crownfit {

const char* to_string(Jaw jaw) { return jaw == Jaw::Upper ? "Upper" : "Lower"; }

const char* to_string(Side side) {
    switch (side) {
        case Side::Left: return "Left";
        case Side::Right: return "Right";
        case Side::Center: return "Center";
    }
    return "?";
}

Jaw jaw_from_string(const std::string& s) {
    if (s == "Upper" || s == "upper") return Jaw::Upper;
    if (s == "Lower" || s == "lower") return Jaw::Lower;
    throw Error(ErrorKind::Argument, "unknown jaw '" + s + "'");
}

Side side_from_string(const std::string& s) {
    if (s == "Left" || s == "left") return Side::Left;
    if (s == "Right" || s == "right") return Side::Right;
    if (s == "Center" || s == "center") return Side::Center;
    throw Error(ErrorKind::Argument, "unknown side '" + s + "'");
}

const char* to_string(ScanClass c) {
    switch (c) {
        case ScanClass::FullUpper: return "FullUpper";
        case ScanClass::FullLower: return "FullLower";
        case ScanClass::PartialLeft: return "PartialLeft";
        case ScanClass::PartialRight: return "PartialRight";
        case ScanClass::PartialCenter: return "PartialCenter";
    }
    return "?";
}

ScanClass scan_class_from_string(const std::string& s) {
    for (auto c : kAllScanClasses)
        if (s == to_string(c)) return c;
    throw Error(ErrorKind::Argument, "unknown scan class '" + s + "'");
}

Side partial_side(ScanClass c) {
    switch (c) {
        case ScanClass::PartialLeft: return Side::Left;
        case ScanClass::PartialRight: return Side::Right;
        case ScanClass::PartialCenter: return Side::Center;
        default: throw Error(ErrorKind::Argument, "partial_side: full-arch class has no side");
    }
}

namespace fdi {

bool is_valid(int code) {
    const int q = code / 10, p = code % 10;
    return code >= 11 && code <= 48 && q >= 1 && q <= 4 && p >= 1 && p <= 8;
}

void require_valid(int code) {
    if (!is_valid(code)) throw Error(ErrorKind::Argument, "invalid FDI tooth code " + std::to_string(code));
}

Jaw jaw(int code) {
    require_valid(code);
    return quadrant(code) <= 2 ? Jaw::Upper : Jaw::Lower;
}

Side side(int code) {
    require_valid(code);
    const int q = quadrant(code);
    return (q == 2 || q == 3) ? Side::Left : Side::Right;
}

int make(Jaw j, Side s, int pos) {
    if (s == Side::Center) throw Error(ErrorKind::Argument, "fdi::make needs Left or Right");
    int q = 0;
    if (j == Jaw::Upper) q = s == Side::Right ? 1 : 2;
    else q = s == Side::Left ? 3 : 4;
    const int code = q * 10 + pos;
    require_valid(code);
    return code;
}

std::uint8_t tooth_class(int code) {
    const Side s = side(code);
    return static_cast<std::uint8_t>(s == Side::Right ? position(code) : 8 + position(code));
}

int from_class(Jaw j, std::uint8_t cls) {
    if (cls < 1 || cls > 16) throw Error(ErrorKind::Argument, "tooth class must be 1..16");
    return make(j, class_side(cls), class_position(cls));
}

Side class_side(std::uint8_t cls) { return cls <= 8 ? Side::Right : Side::Left; }
int class_position(std::uint8_t cls) { return cls <= 8 ? cls : cls - 8; }

int arch_key(int code) { return side(code) == Side::Right ? -position(code) : position(code); }
int class_arch_key(std::uint8_t cls) { return class_side(cls) == Side::Right ? -class_position(cls) : class_position(cls); }

bool is_posterior(int code) {
    require_valid(code);
    return position(code) >= 4;
}

int mesial_neighbor(int code) {
    require_valid(code);
    if (position(code) > 1) return code - 1;
    static constexpr int kAcross[5] = {0, 21, 11, 41, 31};
    return kAcross[quadrant(code)];
}

std::optional<int> distal_neighbor(int code) {
    require_valid(code);
    if (position(code) >= 8) return std::nullopt;
    return code + 1;
}

}  // namespace fdi

}  // namespace crownfit
