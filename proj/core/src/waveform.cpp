#include "dissect/waveform.hpp"

#include <cmath>
#include <numbers>

namespace dissect {

Waveform Waveform::constant(double value) {
  Waveform w;
  w.kind = WaveKind::Constant;
  w.offset = value;
  return w;
}

Waveform Waveform::sine(double offset, double amplitude, double frequency, double phase) {
  return Waveform{WaveKind::Sine, amplitude, frequency, offset, phase};
}

Waveform Waveform::cosine(double offset, double amplitude, double frequency, double phase) {
  return Waveform{WaveKind::Cosine, amplitude, frequency, offset, phase};
}

double Waveform::value(double t) const {
  const double omega = 2.0 * std::numbers::pi * frequency;
  switch (kind) {
    case WaveKind::Sine:
      return offset + amplitude * std::sin(omega * t + phase);
    case WaveKind::Cosine:
      return offset + amplitude * std::cos(omega * t + phase);
    case WaveKind::Constant:
      break;
  }
  return offset;
}

double Waveform::derivative(double t) const {
  const double omega = 2.0 * std::numbers::pi * frequency;
  switch (kind) {
    case WaveKind::Sine:
      return amplitude * omega * std::cos(omega * t + phase);
    case WaveKind::Cosine:
      return -amplitude * omega * std::sin(omega * t + phase);
    case WaveKind::Constant:
      break;
  }
  return 0.0;
}

std::string to_string(WaveKind kind) {
  switch (kind) {
    case WaveKind::Sine:
      return "SIN";
    case WaveKind::Cosine:
      return "COS";
    case WaveKind::Constant:
      break;
  }
  return "DC";
}

}  // namespace dissect
