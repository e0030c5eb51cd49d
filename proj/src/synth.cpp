#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dfd/features.hpp"
#include "dfd/rng.hpp"

namespace dfd {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kNoiseComponents = 40;
constexpr double kRampSeconds = 0.02;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double ramp_envelope(double t, double onset, double offset) {
  const double ramp = std::min(kRampSeconds, (offset - onset) / 2.0);
  if (t < onset || t > offset) return 0.0;
  if (t < onset + ramp) return 0.5 * (1.0 - std::cos(kPi * (t - onset) / ramp));
  if (t > offset - ramp) return 0.5 * (1.0 - std::cos(kPi * (offset - t) / ramp));
  return 1.0;
}

}  // namespace

const std::vector<std::string>& toy_class_names() {
  static const std::vector<std::string> names = {"alarm", "bark",  "bell", "chirp",
                                                 "click", "horn",  "hum",  "knock",
                                                 "ring",  "whistle"};
  return names;
}

double toy_class_center_hz(int class_id) {
  require(class_id >= 0 && class_id < static_cast<int>(toy_class_names().size()),
          "class id out of range");
  // geometric ladder from 250 Hz to 6 kHz across the ten classes
  return 250.0 * std::pow(24.0, static_cast<double>(class_id) / 9.0);
}

int label_frames_for(double duration_s, int sample_rate, int hop) {
  require(duration_s > 0.0, "duration must be positive");
  const long long samples = std::llround(duration_s * sample_rate);
  const long long stft_frames = samples / hop + 1;
  const long long usable = stft_frames - stft_frames % 4;
  require(usable >= 4, "clip too short for one output frame");
  return static_cast<int>(usable / 4);
}

SynthResult synth_clip(std::uint64_t seed, const std::vector<EventSpec>& events,
                       const SynthOptions& opts, const std::string& clip_id) {
  require(opts.duration > 0.0, "duration must be positive");
  require(opts.frame_dur > 0.0, "frame duration must be positive");
  const int n_classes = static_cast<int>(toy_class_names().size());
  for (const EventSpec& ev : events) {
    require(ev.class_id >= 0 && ev.class_id < n_classes, "class id out of range");
    require(ev.onset >= 0.0 && ev.offset > ev.onset && ev.offset <= opts.duration,
            "event outside the clip");
  }
  if (opts.monophonic) {
    for (std::size_t i = 0; i < events.size(); ++i)
      for (std::size_t j = i + 1; j < events.size(); ++j) {
        const double lo = std::max(events[i].onset, events[j].onset);
        const double hi = std::min(events[i].offset, events[j].offset);
        require(lo >= hi, "overlapping events in a monophonic clip");
      }
  }

  const int sr = 16000;
  const long long n = std::llround(opts.duration * sr);
  SynthResult result;
  result.clip.sample_rate = sr;
  result.clip.samples.assign(static_cast<std::size_t>(n), 0.0);

  Rng rng(seed);
  for (const EventSpec& ev : events) {
    const double center = toy_class_center_hz(ev.class_id);
    const double amp = rng.uniform(0.25, 0.5);
    const long long first = std::max<long long>(0, std::llround(ev.onset * sr));
    const long long last = std::min<long long>(n, std::llround(ev.offset * sr));
    if (ev.class_id % 2 == 0) {
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (long long i = first; i < last; ++i) {
        const double t = static_cast<double>(i) / sr;
        result.clip.samples[i] +=
            amp * std::sin(2.0 * kPi * center * t + phase) *
            ramp_envelope(t, ev.onset, ev.offset);
      }
    } else {
      // band-limited noise: fixed bundle of random sinusoids inside the band
      std::vector<double> freqs(kNoiseComponents), phases(kNoiseComponents);
      for (int c = 0; c < kNoiseComponents; ++c) {
        freqs[c] = rng.uniform(0.85 * center, 1.15 * center);
        phases[c] = rng.uniform(0.0, 2.0 * kPi);
      }
      const double comp_amp = amp / std::sqrt(static_cast<double>(kNoiseComponents));
      for (long long i = first; i < last; ++i) {
        const double t = static_cast<double>(i) / sr;
        double v = 0.0;
        for (int c = 0; c < kNoiseComponents; ++c)
          v += std::sin(2.0 * kPi * freqs[c] * t + phases[c]);
        result.clip.samples[i] += comp_amp * v * ramp_envelope(t, ev.onset, ev.offset);
      }
    }
  }
  for (double& v : result.clip.samples) v = std::clamp(v, -1.0, 1.0);

  const int label_frames = label_frames_for(opts.duration, sr, 256);
  result.labels = Tensor::zeros({label_frames, n_classes});
  for (const EventSpec& ev : events) {
    for (int f = 0; f < label_frames; ++f) {
      const double fs = f * opts.frame_dur;
      const double fe = (f + 1) * opts.frame_dur;
      if (fs < ev.offset && fe > ev.onset) result.labels.at(f, ev.class_id) = 1.0;
    }
    result.events.push_back(
        Event{clip_id, toy_class_names()[ev.class_id], ev.onset, ev.offset});
  }
  return result;
}

}  // namespace dfd
