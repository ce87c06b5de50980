#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "temp_dir.hpp"
#include "tmhfs/data.hpp"

namespace fs = std::filesystem;
using tmhfs::Dataset;
using tmhfs::SyntheticSpec;

using fixtures::TempDir;

namespace {

SyntheticSpec small_spec(double shift = 0.0) {
  SyntheticSpec s;
  s.classes = 4;
  s.samples_per_class = 6;
  s.hw = 16;
  s.domain_shift = shift;
  s.seed = 42;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("image file round trip") {
  TempDir dir("img");
  tmhfs::Image img(3, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i % 256) / 255.0f;
  tmhfs::write_image(dir.path / "a.img", img);
  CHECK(fs::file_size(dir.path / "a.img") == 9 + 45);
  auto back = tmhfs::read_image(dir.path / "a.img");
  CHECK(back.h == 3);
  CHECK(back.w == 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
}

TEST_CASE("generated dataset loads with declared counts") {
  TempDir dir("gen");
  auto ds = tmhfs::gen_synthetic(small_spec(), dir.path);
  CHECK(ds.class_count() == 4);
  CHECK(ds.sample_count() == 24);
  auto again = Dataset::load(dir.path);
  CHECK(again.name() == "synthetic");
  std::set<std::uint64_t> ids;
  for (const auto& c : again.classes())
    for (const auto& s : c.samples) ids.insert(s.id);
  CHECK(ids.size() == 24);
  auto img = again.image(2, 3);
  CHECK(img.h == 16);
  for (float v : img.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("generation is deterministic and zero shift matches across domains") {
  TempDir a("det_a"), b("det_b"), t("det_t");
  tmhfs::gen_synthetic(small_spec(), a.path);
  tmhfs::gen_synthetic(small_spec(), b.path);
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path);
    CHECK(slurp(entry.path()) == slurp(b.path / rel));
  }
  auto target_spec = small_spec(0.0);
  target_spec.name = "target";
  auto target = tmhfs::gen_synthetic(target_spec, t.path);
  auto source = Dataset::load(a.path);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 6; ++i) CHECK(source.image(c, i) == target.image(c, i));
}

TEST_CASE("shift and offset change the pixels") {
  auto base = small_spec();
  auto shifted = small_spec(0.8);
  auto other = small_spec();
  other.class_offset = 10;
  auto a = tmhfs::render_synthetic(base, 0, 0);
  CHECK_FALSE(a == tmhfs::render_synthetic(shifted, 0, 0));
  CHECK_FALSE(a == tmhfs::render_synthetic(other, 0, 0));
  CHECK(a == tmhfs::render_synthetic(base, 0, 0));
}

TEST_CASE("invalid generator specs") {
  TempDir dir("bad");
  auto s = small_spec(1.5);
  CHECK_THROWS_AS(tmhfs::gen_synthetic(s, dir.path), std::invalid_argument);
  s = small_spec();
  s.classes = 1;
  CHECK_THROWS_AS(tmhfs::gen_synthetic(s, dir.path), std::invalid_argument);
}

TEST_CASE("load errors name the file and offset") {
  TempDir dir("err");
  tmhfs::gen_synthetic(small_spec(), dir.path);
  const auto victim = dir.path / "class_001" / "00002.img";
  fs::resize_file(victim, 100);
  try {
    Dataset::load(dir.path);
    FAIL("expected DataError");
  } catch (const tmhfs::DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("00002.img") != std::string::npos);
    CHECK(msg.find("byte 100") != std::string::npos);
  }
  {
    std::ofstream out(victim, std::ios::binary | std::ios::trunc);
    out << "JPEG0000000";
  }
  CHECK_THROWS_WITH_AS(Dataset::load(dir.path), doctest::Contains("magic"), tmhfs::DataError);
  fs::remove(victim);
  CHECK_THROWS_WITH_AS(Dataset::load(dir.path), doctest::Contains("00002.img"), tmhfs::DataError);
}

TEST_CASE("meta validation") {
  TempDir dir("meta");
  auto write_meta = [&](const std::string& text) {
    std::ofstream out(dir.path / "meta.json", std::ios::trunc);
    out << text;
  };
  write_meta(R"({"name": "x", "classes": []})");
  CHECK_THROWS_WITH_AS(Dataset::load(dir.path), doctest::Contains("empty class list"), tmhfs::DataError);
  tmhfs::write_image(dir.path / "a.img", tmhfs::Image(2, 2));
  write_meta(R"({"name": "x", "classes": [{"label": 0, "class_name": "a", "samples": ["a.img"]},
                                            {"label": 2, "class_name": "b", "samples": ["a.img"]}]})");
  CHECK_THROWS_WITH_AS(Dataset::load(dir.path), doctest::Contains("contiguous"), tmhfs::DataError);
  write_meta(R"({"name": "x", "classes": [{"label": 0, "class_name": "a", "samples": []}]})");
  CHECK_THROWS_WITH_AS(Dataset::load(dir.path), doctest::Contains("no samples"), tmhfs::DataError);
  write_meta(R"({"name": "x", "classes": [)");
  CHECK_THROWS_AS(Dataset::load(dir.path), tmhfs::DataError);
  fs::remove(dir.path / "meta.json");
  CHECK_THROWS_WITH_AS(Dataset::load(dir.path), doctest::Contains("meta.json"), tmhfs::DataError);
}

TEST_CASE("episode sampling") {
  TempDir dir("ep");
  auto spec = small_spec();
  spec.classes = 6;
  spec.samples_per_class = 20;
  auto ds = tmhfs::gen_synthetic(spec, dir.path);
  auto ep = tmhfs::sample_episode(ds, 5, 5, 15, 7);
  CHECK(ep.support.size() == 25);
  CHECK(ep.query.size() == 75);
  CHECK(std::set<std::size_t>(ep.class_map.begin(), ep.class_map.end()).size() == 5);
  std::map<std::size_t, int> shots, queries;
  std::set<std::uint64_t> support_ids;
  for (const auto& s : ep.support) {
    ++shots[s.local_label];
    support_ids.insert(s.sample_id);
    CHECK(ep.class_map[s.local_label] == s.global_label);
  }
  for (const auto& q : ep.query) {
    ++queries[q.local_label];
    CHECK(support_ids.count(q.sample_id) == 0);
  }
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(shots[c] == 5);
    CHECK(queries[c] == 15);
  }
  auto again = tmhfs::sample_episode(ds, 5, 5, 15, 7);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(again.support[i].sample_id == ep.support[i].sample_id);
    CHECK(again.support[i].image == ep.support[i].image);
  }
  CHECK_THROWS_WITH_AS(tmhfs::sample_episode(ds, 7, 1, 1, 0), doctest::Contains("6 classes"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(tmhfs::sample_episode(ds, 2, 10, 11, 0), doctest::Contains("needs 21"),
                       std::invalid_argument);
}

TEST_CASE("class frequency over many episodes") {
  TempDir dir("freq");
  auto spec = small_spec();
  spec.classes = 20;
  spec.samples_per_class = 4;
  spec.hw = 8;
  auto ds = tmhfs::gen_synthetic(spec, dir.path);
  std::vector<int> hits(20, 0);
  for (std::uint64_t e = 0; e < 10000; ++e) {
    auto plan = tmhfs::plan_episode(ds, 5, 1, 1, e);
    std::set<std::uint64_t> ids;
    for (const auto& s : plan.support) ids.insert(s.sample_id);
    for (const auto& q : plan.query) CHECK(ids.count(q.sample_id) == 0);
    for (auto c : plan.class_map) ++hits[c];
  }
  for (int h : hits) CHECK(std::abs(h / 10000.0 - 0.25) <= 0.02);
}
