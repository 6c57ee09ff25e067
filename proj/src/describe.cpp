#include "tae/describe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'A', 'E', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "feature files are written in host order and must be little-endian");

std::vector<PatchRef> grid_refs(const Image& image, const std::string& id, const SamplingConfig& c) {
  std::vector<PatchRef> refs;
  const int ox = ((image.width - c.patch_size) % c.grid_stride) / 2;
  const int oy = ((image.height - c.patch_size) % c.grid_stride) / 2;
  for (int y = oy; y + c.patch_size <= image.height; y += c.grid_stride) {
    for (int x = ox; x + c.patch_size <= image.width; x += c.grid_stride) {
      if (static_cast<int>(refs.size()) == c.max_count) return refs;
      refs.push_back({id, static_cast<double>(x + c.patch_size / 2),
                      static_cast<double>(y + c.patch_size / 2), c.patch_size});
    }
  }
  return refs;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

std::string_view to_string(SamplingStrategy s) {
  return s == SamplingStrategy::keypoint ? "keypoint" : "grid";
}

SamplingStrategy sampling_strategy_from_string(std::string_view s) {
  if (s == "keypoint") return SamplingStrategy::keypoint;
  if (s == "grid") return SamplingStrategy::grid;
  throw InvalidConfiguration("unknown sampling strategy: " + std::string(s));
}

void SamplingConfig::validate() const {
  if (max_count < 1) throw InvalidConfiguration("max_count must be positive");
  if (patch_size < 1) throw InvalidConfiguration("patch_size must be positive");
  if (grid_stride < 1) throw InvalidConfiguration("grid_stride must be positive");
  if (min_keypoints < 0) throw InvalidConfiguration("min_keypoints must be non-negative");
}

json to_json(const SamplingConfig& c) {
  return {{"strategy", to_string(c.strategy)}, {"max_count", c.max_count},
          {"patch_size", c.patch_size},        {"grid_stride", c.grid_stride},
          {"min_keypoints", c.min_keypoints},  {"grid_fallback", c.grid_fallback}};
}

SamplingConfig sampling_config_from_json(const json& j) {
  SamplingConfig c;
  if (j.contains("strategy")) c.strategy = sampling_strategy_from_string(j.at("strategy").get<std::string>());
  c.max_count = j.value("max_count", c.max_count);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.grid_stride = j.value("grid_stride", c.grid_stride);
  c.min_keypoints = j.value("min_keypoints", c.min_keypoints);
  c.grid_fallback = j.value("grid_fallback", c.grid_fallback);
  c.validate();
  return c;
}

std::vector<PatchRef> sample_test_patches(const Image& image, const std::string& image_id,
                                          const SamplingConfig& config) {
  config.validate();
  if (image.width < config.patch_size || image.height < config.patch_size) {
    throw TooSmallImage("image " + image_id + " is smaller than one patch");
  }
  if (config.strategy == SamplingStrategy::grid) return grid_refs(image, image_id, config);

  DetectorConfig det = config.detector;
  det.patch_size = config.patch_size;
  // Ask for enough keypoints to judge the fallback independently of the cap.
  auto kps = detect_keypoints(image, std::max(config.max_count, config.min_keypoints), det);
  if (config.grid_fallback && static_cast<int>(kps.size()) < config.min_keypoints) {
    return grid_refs(image, image_id, config);
  }
  if (static_cast<int>(kps.size()) > config.max_count) kps.resize(static_cast<std::size_t>(config.max_count));
  std::vector<PatchRef> refs;
  refs.reserve(kps.size());
  for (const auto& k : kps) refs.push_back({image_id, k.x, k.y, config.patch_size});
  return refs;
}

FeatureSet describe_image(EmbeddingNetwork& net, const Image& image, const std::string& image_id,
                          const SamplingConfig& config) {
  if (config.patch_size != net.config().input_size) {
    throw InvalidConfiguration("patch size differs from the network input size");
  }
  FeatureSet fs;
  fs.image_id = image_id;
  fs.patches = sample_test_patches(image, image_id, config);
  fs.dim = net.config().embedding_dim;
  std::vector<Image> crops;
  crops.reserve(fs.patches.size());
  for (const auto& r : fs.patches) crops.push_back(crop_patch(image, r.x, r.y, r.size));
  std::vector<std::span<const std::uint8_t>> views;
  for (const auto& c : crops) views.push_back(c.pixels);
  if (views.empty()) return fs;
  fs.embeddings = net.embed(patches_to_tensor(views, config.patch_size)).data;
  return fs;
}

std::vector<float> raw_pixel_descriptor(std::span<const std::uint8_t> patch, int patch_size, int side) {
  if (side < 1 || patch_size % side != 0) throw InvalidConfiguration("side must divide the patch size");
  if (patch.size() != static_cast<std::size_t>(patch_size) * patch_size * 3) {
    throw ShapeError("patch buffer has the wrong size");
  }
  const int cell = patch_size / side;
  std::vector<double> v(static_cast<std::size_t>(side) * side, 0.0);
  for (int y = 0; y < patch_size; ++y) {
    for (int x = 0; x < patch_size; ++x) {
      const std::uint8_t* px = &patch[(static_cast<std::size_t>(y) * patch_size + x) * 3];
      const double luma = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
      v[static_cast<std::size_t>(y / cell) * side + x / cell] += luma;
    }
  }
  double mean = 0;
  for (double e : v) mean += e;
  mean /= static_cast<double>(v.size());
  double norm = 0;
  for (double& e : v) {
    e -= mean;
    norm += e * e;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(v.size());
  if (norm < 1e-12) {
    std::fill(out.begin(), out.end(), static_cast<float>(1.0 / std::sqrt(static_cast<double>(v.size()))));
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  }
  return out;
}

FeatureSet describe_image_raw(const Image& image, const std::string& image_id,
                              const SamplingConfig& config, int side) {
  FeatureSet fs;
  fs.image_id = image_id;
  fs.patches = sample_test_patches(image, image_id, config);
  fs.dim = side * side;
  for (const auto& r : fs.patches) {
    const Image crop = crop_patch(image, r.x, r.y, r.size);
    const auto d = raw_pixel_descriptor(crop.pixels, config.patch_size, side);
    fs.embeddings.insert(fs.embeddings.end(), d.begin(), d.end());
  }
  return fs;
}

void save_features(const FeatureSet& fs, const std::filesystem::path& path) {
  if (fs.embeddings.size() != fs.patches.size() * static_cast<std::size_t>(fs.dim)) {
    throw ShapeError("feature set rows do not match its patch count");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(fs.image_id.size()));
  out.write(fs.image_id.data(), static_cast<std::streamsize>(fs.image_id.size()));
  put(out, static_cast<std::uint64_t>(fs.patches.size()));
  put(out, static_cast<std::uint32_t>(fs.dim));
  for (const auto& r : fs.patches) {
    put(out, r.x);
    put(out, r.y);
    put(out, static_cast<std::uint32_t>(r.size));
  }
  out.write(reinterpret_cast<const char*>(fs.embeddings.data()),
            static_cast<std::streamsize>(fs.embeddings.size() * sizeof(float)));
  if (!out) throw FileError("failed writing " + path.string());
}

FeatureSet load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  char magic[4];
  std::uint32_t version = 0, id_len = 0, dim = 0;
  std::uint64_t count = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(path.string() + ": not a feature file", 0);
  }
  if (!get(in, version) || version != kVersion) throw ParseError(path.string() + ": unsupported version", 0);
  if (!get(in, id_len) || id_len > (1u << 20)) throw ParseError(path.string() + ": bad image id", 0);
  FeatureSet fs;
  fs.image_id.resize(id_len);
  if (!in.read(fs.image_id.data(), id_len) || !get(in, count) || !get(in, dim) || dim == 0) {
    throw ParseError(path.string() + ": truncated header", 0);
  }
  fs.dim = static_cast<int>(dim);
  // Check the payload length before allocating so a corrupt count cannot
  // request gigabytes.
  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto available = static_cast<std::uint64_t>(in.tellg() - header_end);
  in.seekg(header_end);
  constexpr std::uint64_t kRefBytes = 8 + 8 + 4;
  const std::uint64_t row_bytes = static_cast<std::uint64_t>(dim) * sizeof(float);
  if (count > available / kRefBytes) {
    const auto at = static_cast<std::size_t>(available / kRefBytes);
    throw ParseError(path.string() + ": truncated patch list at record " + std::to_string(at), at);
  }
  const std::uint64_t payload = available - count * kRefBytes;
  if (payload < count * row_bytes) {
    const auto at = static_cast<std::size_t>(payload / row_bytes);
    throw ParseError(path.string() + ": truncated embedding row at record " + std::to_string(at), at);
  }
  if (payload != count * row_bytes) throw ParseError(path.string() + ": trailing bytes", static_cast<std::size_t>(count));
  fs.patches.resize(count);
  for (auto& r : fs.patches) {
    std::uint32_t size = 0;
    get(in, r.x);
    get(in, r.y);
    get(in, size);
    r.image_id = fs.image_id;
    r.size = static_cast<int>(size);
  }
  fs.embeddings.resize(count * dim);
  in.read(reinterpret_cast<char*>(fs.embeddings.data()), static_cast<std::streamsize>(count * row_bytes));
  if (!in) throw ParseError(path.string() + ": read failed", 0);
  return fs;
}

}  // namespace tae
