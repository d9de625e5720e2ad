#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "snngrad/data.hpp"
#include "snngrad/errors.hpp"
#include "snngrad/random.hpp"

using namespace snn;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SNNGRAD_FIXTURE_DIR;

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path mnist_dir() {
  if (const char* env = std::getenv("SNNGRAD_MNIST_DIR")) return env;
  for (const char* d : {"/root/data/mnist", "data/mnist", "../data/mnist"}) {
    if (fs::exists(fs::path(d) / "train-images-idx3-ubyte")) return d;
  }
  return {};
}

std::size_t count_ones(const SpikeMatrix& m) {
  std::size_t n = 0;
  for (auto s : m.flat()) n += s;
  return n;
}

}  // namespace

TEST_CASE("AER golden bytes") {
  const auto one = load_nmnist_sample(kFixtures / "aer_one_event.bin");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Event{5, 10, 1, 100});

  // Stored out of time order; the loader sorts by timestamp.
  const auto three = load_nmnist_sample(kFixtures / "aer_three_events.bin");
  REQUIRE(three.size() == 3);
  CHECK(three[0] == Event{5, 10, 1, 100});
  CHECK(three[1] == Event{0, 33, 1, 0x012345});
  CHECK(three[2] == Event{33, 0, 0, 0x7FFFFF});

  CHECK(load_nmnist_sample(kFixtures / "aer_empty.bin").empty());
  CHECK_THROWS_AS(load_nmnist_sample(kFixtures / "aer_partial.bin"), ParseError);
  CHECK_THROWS_AS(load_nmnist_sample(kFixtures / "aer_bad_coord.bin"), ParseError);
  CHECK_THROWS_AS(load_nmnist_sample(kFixtures / "does_not_exist.bin"), ParseError);

  // Re-encoding the sorted stream gives the sorted byte layout.
  CHECK(encode_aer(one) == read_bytes(kFixtures / "aer_one_event.bin"));
}

TEST_CASE("AER partial-event message") {
  const std::vector<std::uint8_t> seven{0x05, 0x0A, 0x80, 0x00, 0x64, 0x01, 0x02};
  try {
    decode_aer(seven, "x.bin");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("partial event") != std::string::npos);
  }
}

TEST_CASE("event binning") {
  SpikeMatrix r = bin_events({Event{3, 4, 0, 0}});
  CHECK(r.rows() == 300);
  CHECK(r.cols() == kNmnistInputs);
  CHECK(count_ones(r) == 1);
  CHECK(r(0, 4 * 34 + 3) == 1);

  r = bin_events({Event{3, 4, 1, 100}, Event{3, 4, 1, 900}});
  CHECK(count_ones(r) == 1);
  CHECK(r(0, 34 * 34 + 4 * 34 + 3) == 1);

  r = bin_events({Event{0, 0, 0, 350000}});
  CHECK(r(299, 0) == 1);
  CHECK(count_ones(r) == 1);

  r = bin_events({Event{0, 0, 0, 1999}, Event{0, 0, 0, 2000}});
  CHECK(r(1, 0) == 1);
  CHECK(r(2, 0) == 1);

  CHECK(event_channel(Event{33, 33, 1, 0}) == kNmnistInputs - 1);
}

TEST_CASE("bin/synthesize round trip on random streams") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng.below(300);
    const double rate = rng.uniform() * 0.01;
    SpikeMatrix raster(T, kNmnistInputs);
    for (auto& s : raster.flat()) s = rng.uniform() < rate ? 1 : 0;
    const EventStream events = synthesize_events(raster);
    REQUIRE(events.size() == count_ones(raster));
    CHECK(bin_events(events, T) == raster);
    CHECK(decode_aer(encode_aer(events)) == events);
  }
}

TEST_CASE("IDX parsing") {
  const auto img = load_mnist_images(kFixtures / "idx_images_2x2x3.idx");
  CHECK(img.count() == 2);
  CHECK(img.rows == 2);
  CHECK(img.cols == 3);
  CHECK(img.image(1)[0] == 255);
  CHECK(img.image(1)[5] == 250);
  const auto labels = load_mnist_labels(kFixtures / "idx_labels_2.idx");
  CHECK(labels == std::vector<std::uint8_t>{7, 3});

  try {
    load_idx(kFixtures / "idx_bad_magic.idx");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("0x00000000") != std::string::npos);
  }
  CHECK_THROWS_AS(load_idx(kFixtures / "idx_truncated.idx"), ParseError);
  CHECK_THROWS_AS(load_mnist_images(kFixtures / "idx_labels_2.idx"), ParseError);
  CHECK_THROWS_AS(parse_idx(std::vector<std::uint8_t>{0, 0}), ParseError);

  auto bytes = read_bytes(kFixtures / "idx_labels_2.idx");
  bytes.push_back(0);
  CHECK_THROWS_AS(parse_idx(bytes), ParseError);
}

TEST_CASE("official MNIST files") {
  const fs::path dir = mnist_dir();
  if (dir.empty()) {
    MESSAGE("MNIST not found; set SNNGRAD_MNIST_DIR to run this check");
    return;
  }
  const auto images = load_mnist_images(dir / "train-images-idx3-ubyte");
  CHECK(images.count() == 60000);
  CHECK(images.rows == 28);
  CHECK(images.cols == 28);
  const auto labels = load_mnist_labels(dir / "train-labels-idx1-ubyte");
  CHECK(labels.size() == 60000);
  std::vector<std::size_t> per_class(10, 0);
  for (auto l : labels) ++per_class.at(l);
  for (auto c : per_class) CHECK(c > 5000);
  CHECK(load_mnist_images(dir / "t10k-images-idx3-ubyte").count() == 10000);

  const auto samples = load_mnist_samples(dir, true, 0, 3, 100, 100);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].label == labels[0]);
  std::size_t nonzero = 0;
  for (auto p : images.image(0)) nonzero += p > 0;
  CHECK(count_ones(samples[0].input) == nonzero);
}

TEST_CASE("latency encoding") {
  std::vector<std::uint8_t> img(784, 0);
  img[0] = 255;
  img[1] = 128;
  img[2] = 1;
  img[3] = 0;
  const SpikeMatrix s = latency_encode(img, 100);
  CHECK(s.rows() == 100);
  CHECK(s.cols() == 784);
  CHECK(s(0, 0) == 1);
  CHECK(s(49, 1) == 1);
  CHECK(s(98, 2) == 1);  // floor(254 * 99 / 255) = 98
  CHECK(count_ones(s) == 3);

  // Shorter window inside a longer horizon.
  const SpikeMatrix w = latency_encode(img, 50, 100);
  CHECK(w.rows() == 100);
  CHECK(w(24, 1) == 1);  // floor(127 * 49 / 255) = 24
  CHECK_THROWS_AS(latency_encode(img, 101, 100), ConfigError);

  // Monotone: brighter never spikes later.
  std::vector<std::uint8_t> ramp(256);
  for (int p = 0; p < 256; ++p) ramp[p] = static_cast<std::uint8_t>(p);
  for (std::size_t t_in : {1u, 2u, 7u, 100u, 300u}) {
    const SpikeMatrix r = latency_encode(ramp, t_in);
    long prev = -1;
    for (int p = 255; p >= 1; --p) {
      long t = -1;
      for (std::size_t k = 0; k < r.rows(); ++k) {
        if (r(k, p)) t = static_cast<long>(k);
      }
      REQUIRE(t >= 0);
      CHECK(t >= prev);
      CHECK(t == static_cast<long>(std::floor((1.0 - p / 255.0) * static_cast<double>(t_in - 1) + 1e-9)));
      prev = t;
    }
  }
}

TEST_CASE("random spike trains") {
  const SpikeMatrix none = random_spiketrain(1, 5, 0, 20);
  CHECK(count_ones(none) == 0);
  const SpikeMatrix all = random_spiketrain(1, 5, 20, 20);
  CHECK(count_ones(all) == 100);
  CHECK(random_spiketrain(9, 10, 3, 100) == random_spiketrain(9, 10, 3, 100));
  CHECK_FALSE(random_spiketrain(9, 10, 3, 100) == random_spiketrain(10, 10, 3, 100));
  CHECK_THROWS_AS(random_spiketrain(1, 1, 21, 20), ConfigError);

  const SpikeMatrix s = random_spiketrain(3, 50, 3, 100);
  for (std::size_t n = 0; n < 50; ++n) {
    std::size_t c = 0;
    for (std::size_t t = 0; t < 100; ++t) c += s(t, n);
    CHECK(c == 3);
  }

  // Roughly uniform over time: every quarter gets its share.
  const SpikeMatrix big = random_spiketrain(4, 4000, 1, 100);
  for (std::size_t q = 0; q < 4; ++q) {
    std::size_t c = 0;
    for (std::size_t t = 25 * q; t < 25 * (q + 1); ++t) {
      for (std::size_t n = 0; n < 4000; ++n) c += big(t, n);
    }
    CHECK(c > 900);
    CHECK(c < 1100);
  }
}

TEST_CASE("synthetic saccade recordings") {
  std::vector<std::uint8_t> img(784, 0);
  for (std::size_t r = 8; r < 20; ++r) {
    for (std::size_t c = 12; c < 16; ++c) img[r * 28 + c] = 255;
  }
  const EventStream ev = synthesize_saccade_events(img, 5);
  REQUIRE(!ev.empty());
  std::size_t on = 0, off = 0;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    CHECK(ev[k].x < 34);
    CHECK(ev[k].y < 34);
    CHECK(ev[k].timestamp_us < 300000);
    if (k > 0) CHECK(ev[k - 1].timestamp_us <= ev[k].timestamp_us);
    (ev[k].polarity ? on : off) += 1;
  }
  CHECK(on > 0);
  CHECK(off > 0);
  CHECK(decode_aer(encode_aer(ev)) == ev);
  CHECK(synthesize_saccade_events(img, 5) == ev);
  CHECK(synthesize_saccade_events(std::vector<std::uint8_t>(784, 0), 5).empty());
}
