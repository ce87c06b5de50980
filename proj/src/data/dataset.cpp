#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>

#include "tmhfs/data.hpp"
#include "tmhfs/random.hpp"

namespace tmhfs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const fs::path& path, std::uintmax_t offset, const std::string& what) {
  throw DataError(path.string() + ": byte " + std::to_string(offset) + ": " + what);
}

struct Header {
  std::size_t h, w;
};

Header parse_header(const fs::path& path, const unsigned char* b, std::uintmax_t file_size) {
  if (file_size < kImageHeaderBytes) {
    fail(path, file_size, "truncated header (" + std::to_string(file_size) + " of 9 bytes)");
  }
  if (!std::equal(b, b + 4, "IMG1")) fail(path, 0, "bad magic (expected IMG1)");
  const std::size_t h = b[4] | (b[5] << 8);
  const std::size_t w = b[6] | (b[7] << 8);
  if (h == 0 || w == 0) fail(path, 4, "zero image dimension");
  if (b[8] != 3) fail(path, 8, "expected 3 channels, got " + std::to_string(b[8]));
  const std::uintmax_t want = kImageHeaderBytes + h * w * 3;
  if (file_size != want) {
    fail(path, std::min(file_size, want),
         "expected " + std::to_string(want) + " bytes for " + std::to_string(h) + "x" + std::to_string(w) +
             ", file has " + std::to_string(file_size));
  }
  return {h, w};
}

std::uintmax_t size_of(const fs::path& path) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw DataError(path.string() + ": byte 0: cannot stat (" + ec.message() + ")");
  return size;
}

}  // namespace

void write_image(const fs::path& path, const Image& image) {
  if (image.h == 0 || image.w == 0 || image.h > 0xFFFF || image.w > 0xFFFF ||
      image.pixels.size() != image.h * image.w * 3) {
    throw std::invalid_argument("write_image: invalid image " + std::to_string(image.h) + "x" +
                                std::to_string(image.w));
  }
  std::vector<unsigned char> bytes(kImageHeaderBytes + image.pixels.size());
  std::copy_n("IMG1", 4, bytes.begin());
  bytes[4] = image.h & 0xFF;
  bytes[5] = (image.h >> 8) & 0xFF;
  bytes[6] = image.w & 0xFF;
  bytes[7] = (image.w >> 8) & 0xFF;
  bytes[8] = 3;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    bytes[kImageHeaderBytes + i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": byte 0: cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(path.string() + ": byte 0: write failed");
}

Image read_image(const fs::path& path) {
  const auto size = size_of(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": byte 0: cannot open");
  std::vector<unsigned char> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (static_cast<std::uintmax_t>(in.gcount()) != size) fail(path, in.gcount(), "short read");
  const auto hdr = parse_header(path, bytes.data(), size);
  Image img(hdr.h, hdr.w);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(bytes[kImageHeaderBytes + i]) / 255.0f;
  }
  return img;
}

Dataset Dataset::load(const fs::path& root) {
  const fs::path meta_path = root / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw DataError(meta_path.string() + ": byte 0: cannot open");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(meta_path, e.byte, e.what());
  }
  Dataset ds;
  ds.root_ = root;
  try {
    ds.name_ = meta.at("name").get<std::string>();
    const auto& classes = meta.at("classes");
    if (!classes.is_array() || classes.empty()) throw DataError(meta_path.string() + ": empty class list");
    std::set<std::size_t> seen;
    for (const auto& c : classes) {
      ClassRecord rec;
      rec.label = c.at("label").get<std::size_t>();
      rec.name = c.at("class_name").get<std::string>();
      if (!seen.insert(rec.label).second) {
        throw DataError(meta_path.string() + ": duplicate label " + std::to_string(rec.label));
      }
      for (const auto& s : c.at("samples")) rec.samples.push_back({root / s.get<std::string>(), 0, 0, 0});
      if (rec.samples.empty()) {
        throw DataError(meta_path.string() + ": class " + std::to_string(rec.label) + " has no samples");
      }
      ds.classes_.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  std::sort(ds.classes_.begin(), ds.classes_.end(),
            [](const ClassRecord& a, const ClassRecord& b) { return a.label < b.label; });
  for (std::size_t i = 0; i < ds.classes_.size(); ++i) {
    if (ds.classes_[i].label != i) {
      throw DataError(meta_path.string() + ": labels must be contiguous from 0; missing " + std::to_string(i));
    }
  }
  std::uint64_t next_id = 0;
  for (auto& rec : ds.classes_) {
    for (auto& s : rec.samples) {
      const auto size = size_of(s.path);
      unsigned char hdr[kImageHeaderBytes] = {};
      std::ifstream f(s.path, std::ios::binary);
      if (!f) fail(s.path, 0, "cannot open");
      f.read(reinterpret_cast<char*>(hdr), kImageHeaderBytes);
      const auto parsed = parse_header(s.path, hdr, size);
      s.h = parsed.h;
      s.w = parsed.w;
      s.id = next_id++;
    }
  }
  return ds;
}

std::size_t Dataset::sample_count() const {
  std::size_t n = 0;
  for (const auto& c : classes_) n += c.samples.size();
  return n;
}

Image Dataset::image(std::size_t label, std::size_t index) const {
  if (label >= classes_.size() || index >= classes_[label].samples.size()) {
    throw std::out_of_range("dataset " + name_ + ": no sample " + std::to_string(index) + " in class " +
                            std::to_string(label));
  }
  return read_image(classes_[label].samples[index].path);
}

EpisodePlan plan_episode(const Dataset& ds, std::size_t way, std::size_t shot, std::size_t query,
                         std::uint64_t seed) {
  if (way == 0 || shot == 0) throw std::invalid_argument("episode needs way >= 1 and shot >= 1");
  if (ds.class_count() < way) {
    throw std::invalid_argument("dataset " + ds.name() + " has " + std::to_string(ds.class_count()) +
                                " classes, episode needs " + std::to_string(way));
  }
  Rng rng(seed);
  std::vector<std::size_t> labels(ds.class_count());
  std::iota(labels.begin(), labels.end(), 0);
  EpisodePlan plan;
  for (std::size_t c = 0; c < way; ++c) {
    std::swap(labels[c], labels[c + rng.index(labels.size() - c)]);
    plan.class_map.push_back(labels[c]);
  }
  for (std::size_t local = 0; local < way; ++local) {
    const auto& rec = ds.classes()[plan.class_map[local]];
    const std::size_t need = shot + query;
    if (rec.samples.size() < need) {
      throw std::invalid_argument("dataset " + ds.name() + " class " + std::to_string(rec.label) + " has " +
                                  std::to_string(rec.samples.size()) + " samples, episode needs " +
                                  std::to_string(need));
    }
    std::vector<std::size_t> idx(rec.samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < need; ++i) {
      std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      SampleRef ref{rec.label, idx[i], local, rec.samples[idx[i]].id};
      (i < shot ? plan.support : plan.query).push_back(ref);
    }
  }
  return plan;
}

Episode materialize(const Dataset& ds, const EpisodePlan& plan) {
  Episode ep;
  ep.class_map = plan.class_map;
  auto load = [&ds](const std::vector<SampleRef>& refs, std::vector<Sample>& out) {
    for (const auto& r : refs) out.push_back({ds.image(r.global_label, r.index), r.local_label, r.global_label, r.sample_id});
  };
  load(plan.support, ep.support);
  load(plan.query, ep.query);
  return ep;
}

Episode sample_episode(const Dataset& ds, std::size_t way, std::size_t shot, std::size_t query, std::uint64_t seed) {
  return materialize(ds, plan_episode(ds, way, shot, query, seed));
}

}  // namespace tmhfs
