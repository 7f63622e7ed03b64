#pragma once

#include <cstdlib>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <string>
#include <vector>

#include "serendip/corpus.hpp"

namespace testutil {

// scratch directory removed on destruction
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("serendip_test_" + std::to_string(::rand()) + "_" +
            std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline serendip::Item make_item(const std::string& id, std::vector<double> vec,
                                double traffic = 1.0,
                                const std::string& title = "title") {
  serendip::Item item;
  item.item_id = id;
  item.title = title;
  item.topic_vector = std::move(vec);
  item.traffic_weight = traffic;
  item.frame_captions = {"f0 " + id, "f1 " + id, "f2 " + id, "f3 " + id};
  item.thumbnail_caption = "thumb " + id;
  return item;
}

inline void write_lines(const std::string& path,
                        const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace testutil
