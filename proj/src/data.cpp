#include "snngrad/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "snngrad/errors.hpp"
#include "snngrad/random.hpp"

namespace snn {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kMagicImages = 0x00000803;
constexpr std::uint32_t kMagicLabels = 0x00000801;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() < 4) throw ParseError(name + ": file too short for an IDX header");
  IdxArray out;
  out.magic = be32(bytes.data());
  if (out.magic != kMagicImages && out.magic != kMagicLabels) {
    throw ParseError(name + ": bad IDX magic " + hex32(out.magic) + " (expected 0x00000803 or 0x00000801)");
  }
  const std::size_t ndims = out.magic & 0xff;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) throw ParseError(name + ": truncated IDX header");
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    out.dims.push_back(be32(bytes.data() + 4 + 4 * d));
    total *= out.dims.back();
  }
  if (bytes.size() - header < total) {
    throw ParseError(name + ": truncated IDX payload, expected " + std::to_string(total) + " bytes, found " +
                     std::to_string(bytes.size() - header));
  }
  if (bytes.size() - header > total) {
    throw ParseError(name + ": " + std::to_string(bytes.size() - header - total) + " trailing bytes after IDX payload");
  }
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

IdxArray load_idx(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_idx(bytes, path.string());
}

MnistImages load_mnist_images(const fs::path& path) {
  IdxArray a = load_idx(path);
  if (a.magic != kMagicImages) throw ParseError(path.string() + ": expected an image file (magic 0x00000803)");
  MnistImages img;
  img.rows = a.dims[1];
  img.cols = a.dims[2];
  img.pixels = std::move(a.data);
  return img;
}

std::vector<std::uint8_t> load_mnist_labels(const fs::path& path) {
  IdxArray a = load_idx(path);
  if (a.magic != kMagicLabels) throw ParseError(path.string() + ": expected a label file (magic 0x00000801)");
  for (std::uint8_t l : a.data) {
    if (l > 9) throw ParseError(path.string() + ": label " + std::to_string(l) + " out of range 0..9");
  }
  return std::move(a.data);
}

SpikeMatrix latency_encode(std::span<const std::uint8_t> image, std::size_t t_in, std::size_t horizon) {
  if (t_in == 0 || t_in > horizon) throw ConfigError("encoding window must lie in [1, horizon]");
  SpikeMatrix raster(horizon, image.size());
  for (std::size_t k = 0; k < image.size(); ++k) {
    const std::size_t p = image[k];
    if (p == 0) continue;
    // floor((1 - p/255) (t_in - 1)) in exact integer arithmetic
    const std::size_t t = (255 - p) * (t_in - 1) / 255;
    raster(t, k) = 1;
  }
  return raster;
}

EventStream decode_aer(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() % 5 != 0) {
    throw ParseError(name + ": " + std::to_string(bytes.size() % 5) + " trailing bytes form a partial event");
  }
  EventStream events;
  events.reserve(bytes.size() / 5);
  for (std::size_t k = 0; k < bytes.size(); k += 5) {
    const std::uint8_t* p = bytes.data() + k;
    Event e;
    e.x = p[0];
    e.y = p[1];
    e.polarity = p[2] >> 7;
    e.timestamp_us = (std::uint32_t{p[2] & 0x7fu} << 16) | (std::uint32_t{p[3]} << 8) | p[4];
    if (e.x >= kNmnistSide || e.y >= kNmnistSide) {
      throw ParseError(name + ": event " + std::to_string(k / 5) + " at (" + std::to_string(e.x) + ", " +
                       std::to_string(e.y) + ") is outside the 34x34 sensor");
    }
    events.push_back(e);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.timestamp_us < b.timestamp_us; });
  return events;
}

EventStream load_nmnist_sample(const fs::path& path) {
  const auto bytes = read_file(path);
  return decode_aer(bytes, path.string());
}

std::vector<std::uint8_t> encode_aer(const EventStream& events) {
  std::vector<std::uint8_t> out;
  out.reserve(events.size() * 5);
  for (const Event& e : events) {
    if (e.x >= kNmnistSide || e.y >= kNmnistSide || e.polarity > 1 || e.timestamp_us >= (1u << 23)) {
      throw ConfigError("event does not fit the AER layout");
    }
    out.push_back(e.x);
    out.push_back(e.y);
    out.push_back(static_cast<std::uint8_t>((e.polarity << 7) | (e.timestamp_us >> 16)));
    out.push_back(static_cast<std::uint8_t>(e.timestamp_us >> 8));
    out.push_back(static_cast<std::uint8_t>(e.timestamp_us));
  }
  return out;
}

void write_aer(const fs::path& path, const EventStream& events) {
  const auto bytes = encode_aer(events);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::size_t event_channel(const Event& e) {
  return e.polarity * kNmnistSide * kNmnistSide + e.y * kNmnistSide + e.x;
}

SpikeMatrix bin_events(const EventStream& events, std::size_t horizon) {
  if (horizon == 0) throw ConfigError("horizon must be at least one step");
  SpikeMatrix raster(horizon, kNmnistInputs);
  for (const Event& e : events) {
    const std::size_t bin = std::min<std::size_t>(e.timestamp_us / 1000, horizon - 1);
    raster(bin, event_channel(e)) = 1;
  }
  return raster;
}

EventStream synthesize_events(const SpikeMatrix& raster) {
  if (raster.cols() != kNmnistInputs) throw ConfigError("raster must have 2 * 34 * 34 channels");
  EventStream events;
  const std::size_t plane = kNmnistSide * kNmnistSide;
  for (std::size_t t = 0; t < raster.rows(); ++t) {
    for (std::size_t c = 0; c < raster.cols(); ++c) {
      if (!raster(t, c)) continue;
      const std::size_t pos = c % plane;
      events.push_back(Event{static_cast<std::uint8_t>(pos % kNmnistSide), static_cast<std::uint8_t>(pos / kNmnistSide),
                             static_cast<std::uint8_t>(c / plane), static_cast<std::uint32_t>(1000 * t)});
    }
  }
  return events;
}

SpikeMatrix random_spiketrain(std::uint64_t seed, std::size_t n_neurons, std::size_t spikes_per_neuron,
                              std::size_t horizon) {
  if (spikes_per_neuron > horizon) throw ConfigError("more spikes per neuron than time steps");
  Rng rng(mix_seed(seed, 0x7a1));
  SpikeMatrix raster(horizon, n_neurons);
  std::vector<std::size_t> steps(horizon);
  for (std::size_t n = 0; n < n_neurons; ++n) {
    for (std::size_t t = 0; t < horizon; ++t) steps[t] = t;
    // partial Fisher-Yates: the first k slots become a uniform k-subset
    for (std::size_t k = 0; k < spikes_per_neuron; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(horizon - k));
      std::swap(steps[k], steps[pick]);
      raster(steps[k], n) = 1;
    }
  }
  return raster;
}

std::vector<LabeledSample> load_mnist_samples(const fs::path& dir, bool train, std::size_t first,
                                              std::size_t count, std::size_t t_in, std::size_t horizon) {
  const std::string prefix = train ? "train" : "t10k";
  const MnistImages images = load_mnist_images(dir / (prefix + "-images-idx3-ubyte"));
  const auto labels = load_mnist_labels(dir / (prefix + "-labels-idx1-ubyte"));
  if (labels.size() != images.count()) {
    throw ParseError(dir.string() + ": " + std::to_string(images.count()) + " images but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (first + count > labels.size()) {
    throw ConfigError("requested MNIST samples [" + std::to_string(first) + ", " + std::to_string(first + count) +
                      ") exceed the " + std::to_string(labels.size()) + " available");
  }
  std::vector<LabeledSample> out;
  out.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) {
    out.push_back({latency_encode(images.image(i), t_in, horizon), labels[i]});
  }
  return out;
}

std::vector<LabeledSample> load_nmnist_samples(const fs::path& dir, std::size_t count, std::size_t horizon) {
  if (!fs::is_directory(dir)) throw ConfigError("N-MNIST directory not found: " + dir.string());
  std::vector<std::pair<fs::path, std::size_t>> files;
  for (std::size_t label = 0; label < 10; ++label) {
    const fs::path sub = dir / std::to_string(label);
    if (!fs::is_directory(sub)) continue;
    for (const auto& entry : fs::directory_iterator(sub)) {
      if (entry.is_regular_file() && entry.path().extension() == ".bin") files.emplace_back(entry.path(), label);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no .bin event files under " + dir.string());
  // Interleave the classes so that any prefix is balanced.
  std::vector<std::vector<std::pair<fs::path, std::size_t>>> by_label(10);
  for (auto& f : files) by_label[f.second].push_back(std::move(f));
  std::vector<LabeledSample> out;
  for (std::size_t round = 0; out.size() < count; ++round) {
    bool any = false;
    for (std::size_t label = 0; label < 10 && out.size() < count; ++label) {
      if (round >= by_label[label].size()) continue;
      any = true;
      out.push_back({bin_events(load_nmnist_sample(by_label[label][round].first), horizon), label});
    }
    if (!any) break;
  }
  return out;
}

EventStream synthesize_saccade_events(std::span<const std::uint8_t> image, std::uint64_t seed) {
  if (image.size() != 28 * 28) throw ConfigError("expected a 28x28 image");
  Rng rng(mix_seed(seed, 0x5acc));
  constexpr int kSide = static_cast<int>(kNmnistSide);
  constexpr double kThreshold = 0.15;
  constexpr int kSweepMs = 100;
  // Sensor displacement (pixels) at the end of each sweep.
  const double path[4][2] = {{0.0, 0.0}, {3.0, 3.0}, {6.0, 0.0}, {0.0, 0.0}};

  auto sample = [&](double x, double y) {
    // Digit placed at offset 3 inside the 34x34 field, bilinear resampling.
    const double u = x - 3.0;
    const double v = y - 3.0;
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    const double fx = u - x0;
    const double fy = v - y0;
    auto px = [&](int xi, int yi) {
      if (xi < 0 || yi < 0 || xi >= 28 || yi >= 28) return 0.0;
      return image[static_cast<std::size_t>(yi * 28 + xi)] / 255.0;
    };
    return (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) + (1 - fx) * fy * px(x0, y0 + 1) +
           fx * fy * px(x0 + 1, y0 + 1);
  };

  std::vector<double> ref(kSide * kSide);
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) ref[static_cast<std::size_t>(y * kSide + x)] = sample(x, y);
  }
  EventStream events;
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (int ms = 1; ms <= kSweepMs; ++ms) {
      const double f = static_cast<double>(ms) / kSweepMs;
      const double dx = path[sweep][0] + f * (path[sweep + 1][0] - path[sweep][0]);
      const double dy = path[sweep][1] + f * (path[sweep + 1][1] - path[sweep][1]);
      const std::uint32_t t_ms = static_cast<std::uint32_t>(sweep * kSweepMs + ms - 1);
      for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
          const double now = sample(x - dx, y - dy);
          double& r = ref[static_cast<std::size_t>(y * kSide + x)];
          while (std::abs(now - r) >= kThreshold) {
            const bool on = now > r;
            r += on ? kThreshold : -kThreshold;
            events.push_back(Event{static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y),
                                   static_cast<std::uint8_t>(on ? 1 : 0),
                                   t_ms * 1000 + static_cast<std::uint32_t>(rng.below(1000))});
          }
        }
      }
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.timestamp_us < b.timestamp_us; });
  return events;
}

std::size_t synthesize_nmnist_tree(const fs::path& mnist_dir, const fs::path& out_dir, std::size_t count,
                                   std::uint64_t seed, bool test_set) {
  const auto images = load_mnist_images(mnist_dir / (test_set ? "t10k-images-idx3-ubyte" : "train-images-idx3-ubyte"));
  const auto labels = load_mnist_labels(mnist_dir / (test_set ? "t10k-labels-idx1-ubyte" : "train-labels-idx1-ubyte"));
  const std::size_t n = std::min(count, images.count());
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path sub = out_dir / std::to_string(labels[i]);
    fs::create_directories(sub);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.bin", i);
    write_aer(sub / name, synthesize_saccade_events(images.image(i), mix_seed(seed, i)));
  }
  return n;
}

}  // namespace snn
