#include <doctest.h>

#include "melstream/dataset.hpp"
#include "melstream/error.hpp"

using namespace melstream;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("dataset csv parsing") {
  const auto ds = parse_dataset("track_id,audio_path,labels\na,x/a.wav,rock\nb,/abs/b.wav,jazz\n", "/data", "d");
  REQUIRE(ds.entries.size() == 2);
  CHECK(ds.label_mode == LabelMode::Single);
  CHECK(ds.entries[0].audio_path == std::filesystem::path("/data/x/a.wav"));
  CHECK(ds.entries[1].audio_path == std::filesystem::path("/abs/b.wav"));
  CHECK(ds.single_labels() == std::map<std::string, std::string>{{"a", "rock"}, {"b", "jazz"}});

  const auto multi = parse_dataset("track_id,audio_path,labels\na,a.wav,rock;pop\n", "/d");
  CHECK(multi.label_mode == LabelMode::Multi);
  CHECK(multi.entries[0].labels == std::vector<std::string>{"rock", "pop"});
  CHECK(code_of([&] { multi.single_labels(); }) == ErrorCode::InvalidDataset);

  CHECK(code_of([] { parse_dataset("id,path\na,b\n", "/"); }) == ErrorCode::InvalidDataset);
  CHECK(code_of([] { parse_dataset("track_id,audio_path,labels\na,a.wav,\n", "/"); }) == ErrorCode::InvalidDataset);
  CHECK(code_of([] { parse_dataset("track_id,audio_path,labels\na,a.wav,x\na,b.wav,y\n", "/"); }) ==
        ErrorCode::InvalidDataset);
}

TEST_CASE("dataset and labels round-trip") {
  const auto ds = parse_dataset("track_id,audio_path,labels\na,/m/a.wav,rock;pop\nb,/m/b.wav,jazz\n", "/");
  const auto again = parse_dataset(write_dataset(ds), "/");
  REQUIRE(again.entries.size() == 2);
  CHECK(again.entries[0].labels == ds.entries[0].labels);
  CHECK(again.entries[1].audio_path == ds.entries[1].audio_path);

  const std::map<std::string, std::string> labels{{"t1", "a"}, {"t2", "b"}};
  CHECK(parse_labels(write_labels(labels)) == labels);
}
