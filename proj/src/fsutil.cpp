#include "adafuse/fsutil.hpp"

#include <unistd.h>

#include <string>

namespace adafuse {

namespace fs = std::filesystem;

namespace {

fs::path staging_name(const fs::path& target) {
  fs::path t = target;
  if (t.filename().empty()) t = t.parent_path();
  return t.parent_path() / ("." + t.filename().string() + ".tmp-" + std::to_string(::getpid()));
}

}  // namespace

StagedDir::StagedDir(fs::path target) : target_(std::move(target)), staging_(staging_name(target_)) {
  if (!target_.parent_path().empty()) fs::create_directories(target_.parent_path());
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

StagedDir::~StagedDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagedDir::commit() {
  fs::remove_all(target_);
  fs::rename(staging_, target_);
  committed_ = true;
}

StagedFile::StagedFile(fs::path target) : target_(std::move(target)), staging_(staging_name(target_)) {
  if (!target_.parent_path().empty()) fs::create_directories(target_.parent_path());
}

StagedFile::~StagedFile() {
  if (!committed_) {
    std::error_code ec;
    fs::remove(staging_, ec);
  }
}

void StagedFile::commit() {
  fs::rename(staging_, target_);
  committed_ = true;
}

}  // namespace adafuse
