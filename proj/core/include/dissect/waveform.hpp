#pragma once

#include <string>

namespace dissect {

enum class WaveKind { Sine, Cosine, Constant };

/// Independent source waveform. Sine/cosine evaluate
/// `offset + amplitude * sin|cos(2*pi*frequency*t + phase)`; a constant
/// waveform is just `offset`.
struct Waveform {
  WaveKind kind = WaveKind::Constant;
  double amplitude = 0.0;
  double frequency = 0.0;
  double offset = 0.0;
  double phase = 0.0;

  static Waveform constant(double value);
  static Waveform sine(double offset, double amplitude, double frequency, double phase = 0.0);
  static Waveform cosine(double offset, double amplitude, double frequency, double phase = 0.0);

  double value(double t) const;
  double derivative(double t) const;

  bool operator==(const Waveform&) const = default;
};

std::string to_string(WaveKind kind);

}  // namespace dissect
