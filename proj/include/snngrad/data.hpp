#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snngrad/matrix.hpp"

namespace snn {

// Raw unsigned-byte IDX array.
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

// Parses an IDX file with magic 0x00000803 (3-D images) or 0x00000801
// (labels). Throws ParseError on a bad magic, short header or truncated
// payload.
IdxArray load_idx(const std::filesystem::path& path);
IdxArray parse_idx(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");

struct MnistImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols

  std::size_t count() const { return rows * cols == 0 ? 0 : pixels.size() / (rows * cols); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * rows * cols, rows * cols};
  }
};

MnistImages load_mnist_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_mnist_labels(const std::filesystem::path& path);

// One spike per nonzero pixel at floor((1 - p/255) (t_in - 1)); zero pixels
// stay silent. The raster has `horizon` rows (horizon >= t_in).
SpikeMatrix latency_encode(std::span<const std::uint8_t> image, std::size_t t_in, std::size_t horizon);
inline SpikeMatrix latency_encode(std::span<const std::uint8_t> image, std::size_t t_in) {
  return latency_encode(image, t_in, t_in);
}

inline constexpr std::size_t kNmnistSide = 34;
inline constexpr std::size_t kNmnistInputs = 2 * kNmnistSide * kNmnistSide;

struct Event {
  std::uint8_t x = 0;
  std::uint8_t y = 0;
  std::uint8_t polarity = 0;
  std::uint32_t timestamp_us = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

using EventStream = std::vector<Event>;

// 5 bytes per event: x, y, then polarity in the top bit followed by a 23-bit
// big-endian microsecond timestamp. Events are returned in timestamp order.
EventStream decode_aer(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");
EventStream load_nmnist_sample(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_aer(const EventStream& events);
void write_aer(const std::filesystem::path& path, const EventStream& events);

// Input index of an event: polarity * 34 * 34 + y * 34 + x.
std::size_t event_channel(const Event& e);

// 1 ms bins, clamped to the last bin; repeated events saturate to one spike.
SpikeMatrix bin_events(const EventStream& events, std::size_t horizon = 300);

// One event per set bit, timestamp 1000 * bin, in time order.
EventStream synthesize_events(const SpikeMatrix& raster);

// Per neuron, `spikes_per_neuron` distinct steps drawn uniformly from [0, T).
SpikeMatrix random_spiketrain(std::uint64_t seed, std::size_t n_neurons, std::size_t spikes_per_neuron,
                              std::size_t horizon);

struct LabeledSample {
  SpikeMatrix input;
  std::size_t label = 0;
};

// Latency-coded MNIST samples [first, first + count) of an IDX pair.
std::vector<LabeledSample> load_mnist_samples(const std::filesystem::path& dir, bool train,
                                              std::size_t first, std::size_t count, std::size_t t_in,
                                              std::size_t horizon);

// Samples from an N-MNIST style tree <dir>/<label>/<name>.bin, visited in
// sorted path order, at most `count` of them.
std::vector<LabeledSample> load_nmnist_samples(const std::filesystem::path& dir, std::size_t count,
                                               std::size_t horizon);

// Event recording of an MNIST digit resampled onto the 34x34 sensor grid
// during three short sensor sweeps; ON events where brightness rises, OFF
// where it falls. Used to produce N-MNIST format fixtures when the real
// recordings are not available.
EventStream synthesize_saccade_events(std::span<const std::uint8_t> image, std::uint64_t seed);

// Writes <out_dir>/<label>/<index>.bin for the first `count` MNIST digits of
// the train (or t10k) set. Returns the number of files written.
std::size_t synthesize_nmnist_tree(const std::filesystem::path& mnist_dir, const std::filesystem::path& out_dir,
                                   std::size_t count, std::uint64_t seed, bool test_set = false);

}  // namespace snn
