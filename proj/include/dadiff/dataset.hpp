#pragma once

#include <string>
#include <vector>

#include "dadiff/image.hpp"
#include "dadiff/tensor.hpp"
#include "dadiff/types.hpp"

namespace dadiff {

/// Parse a sequence directory: img/ with zero-padded numbered images, a
/// groundtruth.txt of "x,y,w,h" lines, and an optional attributes.txt of
/// comma-separated tags. Unknown tags are kept and reported by the caller;
/// malformed lines raise with their line number.
TrackSequence load_sequence(const std::string& dir_path);

/// Sorted sequence subdirectories of a dataset root.
std::vector<std::string> list_sequence_dirs(const std::string& root);

/// Load all frames of a sequence into memory.
std::vector<Image> load_frames(const TrackSequence& seq);

/// Write/read prediction box files: one "x,y,w,h" line of integers per frame.
void save_boxes(const std::string& path, const std::vector<BoundingBox>& boxes);
std::vector<BoundingBox> load_boxes(const std::string& path);

/// Feature dump: one structured-text header line
///   DADIFF_FEATURES v1 count=N channels=C height=H width=W labels=a,b,...
/// followed by a flat little-endian float32 payload. Round-trips exactly
/// at float32 precision.
void dump_features(const std::vector<FeatureMap>& maps,
                   const std::vector<std::string>& labels, const std::string& path);

struct FeatureDump {
    std::vector<FeatureMap> maps;
    std::vector<std::string> labels;
};

FeatureDump load_features(const std::string& path);

} // namespace dadiff
