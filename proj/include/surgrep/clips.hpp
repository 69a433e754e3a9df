#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "surgrep/dataset.hpp"

namespace surgrep {

inline constexpr std::size_t kClipSize = 32;
inline constexpr std::size_t kClipStride = 16;

/// A run of `size` consecutive frames of one video starting at `start_frame`.
struct ClipWindow {
  std::string video_id;
  std::size_t start_frame = 0;
  std::size_t size = kClipSize;

  std::size_t end_frame() const { return start_frame + size; }  // exclusive
  std::vector<std::size_t> frame_indices() const;

  friend bool operator==(const ClipWindow&, const ClipWindow&) = default;
};

/// Number of full windows that fit in `frames` frames.
std::size_t clip_count(std::size_t frames, std::size_t size = kClipSize,
                       std::size_t stride = kClipStride);

/// Windows ordered by start frame. Trailing frames that do not fill a window
/// are dropped.
std::vector<ClipWindow> window_video(const VideoRecord& record, std::size_t size = kClipSize,
                                     std::size_t stride = kClipStride);

/// One line per clip: {"video_id", "start_frame", "size"}.
void write_clip_manifest(std::ostream& out, const std::vector<ClipWindow>& clips);
std::vector<ClipWindow> read_clip_manifest(std::istream& in);

}  // namespace surgrep
