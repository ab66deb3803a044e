#include "kolmo/field.hpp"

namespace kolmo {

SpaceTimeField constant_field(double c, double t_lo, double t_hi) {
    SpaceTimeField f;
    f.value = [c](double, const Vector&) { return c; };
    f.t_lo = t_lo;
    f.t_hi = t_hi;
    f.sup_norm = std::abs(c);
    return f;
}

SpaceTimeField gaussian_bump(double amplitude, const Vector& center, const Vector& widths, double t_lo,
                             double t_hi) {
    if (center.size() != widths.size()) throw ShapeError("bump centre and widths differ in size");
    if ((widths.array() <= 0.0).any()) throw DomainError("bump widths must be positive");
    SpaceTimeField f;
    f.value = [amplitude, center, widths](double, const Vector& y) {
        return amplitude * std::exp(-0.5 * (y - center).cwiseQuotient(widths).squaredNorm());
    };
    f.t_lo = t_lo;
    f.t_hi = t_hi;
    f.center = center;
    f.spread = widths;
    f.sup_norm = std::abs(amplitude);
    return f;
}

SpaceTimeField smooth_bump(double amplitude, const Vector& center, const Vector& widths, double t_lo,
                           double t_hi) {
    SpaceTimeField f = gaussian_bump(amplitude, center, widths, t_lo, t_hi);
    auto spatial = f.value;
    const double len = t_hi - t_lo;
    f.value = [spatial, t_lo, len](double t, const Vector& y) {
        const double w = std::sin(kPi * (t - t_lo) / len);
        return w * w * spatial(t, y);
    };
    return f;
}

}  // namespace kolmo
