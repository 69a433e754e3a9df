#include "surgrep/clips.hpp"

#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"
#include "surgrep/io.hpp"

namespace surgrep {

std::vector<std::size_t> ClipWindow::frame_indices() const {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = start_frame + i;
  return idx;
}

std::size_t clip_count(std::size_t frames, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0 || stride > size) {
    throw PreconditionError("window size must be positive and 0 < stride <= size");
  }
  return frames < size ? 0 : (frames - size) / stride + 1;
}

std::vector<ClipWindow> window_video(const VideoRecord& record, std::size_t size,
                                     std::size_t stride) {
  const auto n = clip_count(record.frames.size(), size, stride);
  std::vector<ClipWindow> clips;
  clips.reserve(n);
  for (std::size_t k = 0; k < n; ++k) clips.push_back({record.video_id, k * stride, size});
  return clips;
}

void write_clip_manifest(std::ostream& out, const std::vector<ClipWindow>& clips) {
  for (const auto& c : clips) {
    out << nlohmann::json{{"video_id", c.video_id}, {"start_frame", c.start_frame}, {"size", c.size}}
               .dump()
        << '\n';
  }
}

std::vector<ClipWindow> read_clip_manifest(std::istream& in) {
  std::vector<ClipWindow> clips;
  io::for_each_record(in, [&](const nlohmann::json& j, std::size_t line) {
    ClipWindow c{j.at("video_id").get<std::string>(), j.at("start_frame").get<std::size_t>(),
                 j.at("size").get<std::size_t>()};
    if (c.size == 0) throw ParseError("clip size must be positive", line);
    clips.push_back(std::move(c));
  });
  return clips;
}

}  // namespace surgrep
