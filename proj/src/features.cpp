#include "dfd/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfd {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

[[noreturn]] void io_fail(const std::string& msg) { throw std::runtime_error(msg); }

// ---- little-endian primitives ----

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) io_fail("unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) io_fail("unexpected end of file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

// Mirror an index into [0, n) without repeating the edge sample.
long long reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  i = std::llabs(i) % period;
  return i < n ? i : period - i;
}

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) {
  if (hz < 1000.0) return hz * 3.0 / 200.0;
  return 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

double mel_to_hz(double mel) {
  if (mel < 15.0) return mel * 200.0 / 3.0;
  return 1000.0 * std::exp(std::log(6.4) * (mel - 15.0) / 27.0);
}

}  // namespace

void MelConfig::validate() const {
  require(sample_rate > 0, "sample rate must be positive");
  require(n_fft >= 2 && (n_fft & (n_fft - 1)) == 0, "n_fft must be a power of two");
  require(hop > 0, "hop must be positive");
  require(n_mels >= 1 && n_mels <= n_fft / 2 + 1, "n_mels must be <= n_fft/2 + 1");
  require(fmin >= 0.0 && fmax > fmin, "mel band edges must satisfy 0 <= fmin < fmax");
  require(fmax <= sample_rate / 2.0, "fmax above Nyquist");
  require(log_floor > 0.0, "log floor must be positive");
}

// ---- WAV ----

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) io_fail("cannot open wav file: " + path);
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) io_fail("not a RIFF file: " + path);
  get_u32(is);  // riff size
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0) io_fail("not a WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> payload;
  while (is.read(tag, 4)) {
    const std::uint32_t chunk_size = get_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) io_fail("malformed fmt chunk");
      format = get_u16(is);
      channels = get_u16(is);
      rate = get_u32(is);
      get_u32(is);  // byte rate
      get_u16(is);  // block align
      bits = get_u16(is);
      is.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(chunk_size);
      is.read(payload.data(), chunk_size);
      if (!is) io_fail("truncated data chunk");
      break;
    } else {
      is.ignore(chunk_size + (chunk_size & 1));
    }
  }
  if (!have_fmt) io_fail("missing fmt chunk");
  if (format != 1 || bits != 16) io_fail("only PCM 16-bit wav is supported");
  if (channels != 1) io_fail("only mono wav is supported");
  if (rate != 16000) io_fail("only 16 kHz wav is supported (no resampling)");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(payload.size() / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        static_cast<unsigned char>(payload[2 * i]) |
        (static_cast<unsigned char>(payload[2 * i + 1]) << 8));
    clip.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) io_fail("cannot write wav file: " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  put_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(os, static_cast<std::uint32_t>(clip.sample_rate * 2));
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (double v : clip.samples) {
    long s = std::lround(v * 32768.0);
    s = std::clamp(s, -32768L, 32767L);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
  }
  if (!os) io_fail("short write: " + path);
}

// ---- STFT / mel ----

std::vector<double> hamming_window(int n) {
  require(n >= 2, "window length must be >= 2");
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

Tensor stft_magnitudes(const std::vector<double>& samples, int n_fft, int hop,
                       const std::vector<double>& window) {
  require(!samples.empty(), "empty signal");
  require(hop > 0, "hop must be positive");
  require(n_fft >= 2 && (n_fft & (n_fft - 1)) == 0, "n_fft must be a power of two");
  require(static_cast<int>(window.size()) == n_fft, "window length must equal n_fft");
  const long long len = static_cast<long long>(samples.size());
  const int frames = static_cast<int>(len / hop) + 1;
  const int bins = n_fft / 2 + 1;
  Tensor out(Shape{frames, bins});
  std::vector<std::complex<double>> buf(n_fft);
  for (int fr = 0; fr < frames; ++fr) {
    const long long start = static_cast<long long>(fr) * hop - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      const long long idx = reflect_index(start + i, len);
      buf[i] = std::complex<double>(samples[idx] * window[i], 0.0);
    }
    fft_inplace(buf);
    for (int k = 0; k < bins; ++k) out.at(fr, k) = std::abs(buf[k]);
  }
  return out;
}

MelFilterbank make_mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int bins = cfg.n_fft / 2 + 1;
  MelFilterbank fb;
  fb.n_mels = cfg.n_mels;
  fb.n_bins = bins;
  fb.weights.assign(static_cast<std::size_t>(cfg.n_mels) * bins, 0.0);
  fb.center_hz.resize(cfg.n_mels);

  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  for (int m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    fb.center_hz[m] = f1;
    const double norm = 2.0 / (f2 - f0);  // area normalization
    for (int k = 0; k < bins; ++k) {
      const double fk = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (fk >= f0 && fk <= f1 && f1 > f0)
        w = (fk - f0) / (f1 - f0);
      else if (fk > f1 && fk <= f2 && f2 > f1)
        w = (f2 - fk) / (f2 - f1);
      fb.weights[static_cast<std::size_t>(m) * bins + k] = w * norm;
    }
  }
  return fb;
}

Tensor logmel(const AudioClip& clip, const MelConfig& cfg) {
  cfg.validate();
  require(clip.sample_rate == cfg.sample_rate, "clip sample rate mismatch");
  const std::vector<double> window = hamming_window(cfg.n_fft);
  Tensor mags = stft_magnitudes(clip.samples, cfg.n_fft, cfg.hop, window);
  const MelFilterbank fb = make_mel_filterbank(cfg);
  const int frames = mags.dim(0), bins = mags.dim(1);
  Tensor out(Shape{1, 1, frames, cfg.n_mels});
  for (int fr = 0; fr < frames; ++fr)
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      const double* w = fb.weights.data() + static_cast<std::size_t>(m) * bins;
      for (int k = 0; k < bins; ++k) {
        const double mag = mags.at(fr, k);
        acc += w[k] * mag * mag;
      }
      out.at(0, 0, fr, m) = std::log(acc + cfg.log_floor);
    }
  return out;
}

// ---- grid dump ----

void write_grid(const std::string& path, const Tensor& grid) {
  require(grid.rank() == 2, "grid dump expects a [frames, bins] tensor");
  std::ofstream os(path, std::ios::binary);
  if (!os) io_fail("cannot write grid file: " + path);
  put_u32(os, static_cast<std::uint32_t>(grid.dim(0)));
  put_u32(os, static_cast<std::uint32_t>(grid.dim(1)));
  for (double v : grid.data()) put_f32(os, static_cast<float>(v));
  if (!os) io_fail("short write: " + path);
}

Tensor read_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) io_fail("cannot open grid file: " + path);
  const int frames = static_cast<int>(get_u32(is));
  const int bins = static_cast<int>(get_u32(is));
  if (frames <= 0 || bins <= 0) io_fail("corrupt grid header: " + path);
  Tensor out(Shape{frames, bins});
  for (double& v : out.data()) v = static_cast<double>(get_f32(is));
  return out;
}

// ---- events TSV ----

void write_events_tsv(const std::string& path, const EventList& events) {
  std::ofstream os(path);
  if (!os) io_fail("cannot write event list: " + path);
  os << "filename\tonset\toffset\tevent_label\n";
  char buf[64];
  for (const Event& e : events) {
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f", e.onset, e.offset);
    os << e.clip_id << '\t' << buf << '\t' << e.label << '\n';
  }
  if (!os) io_fail("short write: " + path);
}

EventList read_events_tsv(const std::string& path) {
  std::ifstream is(path);
  if (!is) io_fail("cannot open event list: " + path);
  std::string line;
  if (!std::getline(is, line)) io_fail("empty event list: " + path);
  EventList events;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Event e;
    std::string onset_s, offset_s;
    if (!std::getline(ss, e.clip_id, '\t') || !std::getline(ss, onset_s, '\t') ||
        !std::getline(ss, offset_s, '\t') || !std::getline(ss, e.label))
      io_fail("malformed event list line " + std::to_string(line_no) + " in " + path);
    try {
      e.onset = std::stod(onset_s);
      e.offset = std::stod(offset_s);
    } catch (const std::exception&) {
      io_fail("bad number on event list line " + std::to_string(line_no) + " in " + path);
    }
    if (e.offset <= e.onset)
      io_fail("event ends before it starts on line " + std::to_string(line_no));
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace dfd
