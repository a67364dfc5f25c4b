#include "safenav/reference.hpp"

#include <cmath>

namespace safenav {

namespace {

struct Sampler {
  double t;

  ReferencePoint operator()(const Figure8& f) const {
    const double w = 2.0 * kPi / f.lap_time;
    const double c1 = std::cos(w * t), s1 = std::sin(w * t);
    const double c2 = std::cos(2.0 * w * t), s2 = std::sin(2.0 * w * t);
    ReferencePoint p;
    p.position = {f.center.x + f.ax * c1, f.center.y + f.ay * s2};
    p.velocity = {-f.ax * w * s1, 2.0 * f.ay * w * c2};
    p.acceleration = {-f.ax * w * w * c1, -4.0 * f.ay * w * w * s2};
    return p;
  }

  ReferencePoint operator()(const Circle& c) const {
    const double a = c.phase + c.rate * t;
    const double ca = std::cos(a), sa = std::sin(a);
    ReferencePoint p;
    p.position = {c.center.x + c.radius * ca, c.center.y + c.radius * sa};
    p.velocity = {-c.radius * c.rate * sa, c.radius * c.rate * ca};
    p.acceleration = {-c.radius * c.rate * c.rate * ca, -c.radius * c.rate * c.rate * sa};
    return p;
  }

  ReferencePoint operator()(const Line& l) const {
    ReferencePoint p;
    p.position = {l.start.x + l.velocity.x * t, l.start.y + l.velocity.y * t};
    p.velocity = l.velocity;
    return p;
  }

  ReferencePoint operator()(const Hold& h) const {
    ReferencePoint p;
    p.position = h.position;
    return p;
  }
};

}  // namespace

ReferencePoint sample(const ReferencePath& path, double t) { return std::visit(Sampler{t}, path); }

std::vector<ReferencePoint> sample_horizon(const ReferencePath& path, double t0, double dt, int n) {
  std::vector<ReferencePoint> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) out.push_back(sample(path, t0 + k * dt));
  return out;
}

}  // namespace safenav
