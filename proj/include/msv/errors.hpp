#pragma once

#include <stdexcept>
#include <string>

namespace msv {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MSV_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(what) {}     \
  }

MSV_DEFINE_ERROR(InvalidArgument);
MSV_DEFINE_ERROR(NonPositiveDepth);
MSV_DEFINE_ERROR(NoConvergence);
MSV_DEFINE_ERROR(InvalidPose);
MSV_DEFINE_ERROR(TargetBehindCamera);
MSV_DEFINE_ERROR(EmptyScene);
MSV_DEFINE_ERROR(AmbiguousGrid);
MSV_DEFINE_ERROR(DegenerateConfiguration);
MSV_DEFINE_ERROR(InsufficientViews);
MSV_DEFINE_ERROR(IllConditioned);
MSV_DEFINE_ERROR(DivergedRefinement);
MSV_DEFINE_ERROR(NoSharedViews);
MSV_DEFINE_ERROR(DimensionMismatch);
MSV_DEFINE_ERROR(AllBadPoints);
MSV_DEFINE_ERROR(IoError);

#undef MSV_DEFINE_ERROR

/// Raised when a blob count does not match the grid; the view is rejected.
class WrongBlobCount : public Error {
 public:
  WrongBlobCount(std::size_t found, std::size_t expected)
      : Error("found " + std::to_string(found) + " blobs, expected " + std::to_string(expected)),
        found_(found),
        expected_(expected) {}

  std::size_t found() const { return found_; }
  std::size_t expected() const { return expected_; }

 private:
  std::size_t found_;
  std::size_t expected_;
};

}  // namespace msv
