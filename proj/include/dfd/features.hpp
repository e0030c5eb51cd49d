#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfd/events.hpp"
#include "dfd/tensor.hpp"

namespace dfd {

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 2048;
  int hop = 256;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  void validate() const;
};

/// PCM 16-bit mono little-endian WAV at 16 kHz; samples divided by 32768.
/// Anything else (stereo, other rates, other encodings) is rejected.
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);

/// w[n] = 0.54 - 0.46 cos(2 pi n / (N-1))
std::vector<double> hamming_window(int n);

/// Magnitude spectrogram [frames, n_fft/2+1]. Frames are centered every `hop`
/// samples with reflect padding; frame count = floor(len/hop) + 1.
Tensor stft_magnitudes(const std::vector<double>& samples, int n_fft, int hop,
                       const std::vector<double>& window);

struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;                  // n_fft/2 + 1
  std::vector<double> weights;     // row-major [n_mels][n_bins]
  std::vector<double> center_hz;   // triangle peaks
};

/// Triangular filters on the Slaney mel scale, area-normalized.
MelFilterbank make_mel_filterbank(const MelConfig& cfg);

/// Log mel spectrogram of the clip: log(mel_power + log_floor), shaped
/// [1, 1, frames, n_mels].
Tensor logmel(const AudioClip& clip, const MelConfig& cfg);

/// Binary grid dump: u32 frames, u32 bins, then little-endian 32-bit reals
/// row-major. Shared by feature dumps and score grids.
void write_grid(const std::string& path, const Tensor& grid);
Tensor read_grid(const std::string& path);

// ---- synthetic clips ----

/// Ten fixed toy classes; class k occupies its own frequency band.
const std::vector<std::string>& toy_class_names();
double toy_class_center_hz(int class_id);

struct EventSpec {
  int class_id = 0;
  double onset = 0.0;
  double offset = 0.0;
};

struct SynthOptions {
  double duration = 10.0;    // seconds
  double frame_dur = 0.064;  // strong-label frame duration (4 * hop / sr)
  bool monophonic = false;   // reject overlapping events when set
};

struct SynthResult {
  AudioClip clip;
  EventList events;
  Tensor labels;  // [label_frames, n_classes], 0/1 at the output frame rate
};

/// Label frames available for a clip: STFT frames truncated to a multiple of
/// four, divided by the total time pooling factor.
int label_frames_for(double duration_s, int sample_rate = 16000, int hop = 256);

/// Each event is a windowed tone (even classes) or a band-limited noise burst
/// (odd classes) at its class frequency band. Deterministic per seed.
SynthResult synth_clip(std::uint64_t seed, const std::vector<EventSpec>& events,
                       const SynthOptions& opts = {},
                       const std::string& clip_id = "clip");

}  // namespace dfd
