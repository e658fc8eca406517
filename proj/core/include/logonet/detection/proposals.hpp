#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "logonet/data/manifest.hpp"
#include "logonet/detection/segmentation.hpp"

namespace logonet {

enum class ProposalSource { kWholeImage, kSelectiveSearch, kGroundTruth };
std::string_view to_string(ProposalSource source);

struct RegionProposal {
  BBox rect;  // class_id unused (-1)
  ProposalSource source = ProposalSource::kSelectiveSearch;
  int hierarchy_level = 0;
};

// The single proposal covering the whole image.
std::vector<RegionProposal> whole_image_proposal(int64_t width, int64_t height);
std::vector<RegionProposal> whole_image_proposal(const Tensor& image);

struct SimilarityWeights {
  double color = 1.0;
  double texture = 1.0;
  double size = 1.0;
  double fill = 1.0;
};

struct SelectiveSearchOptions {
  SegmentationOptions segmentation;
  SimilarityWeights weights;
};

struct SelectiveSearchResult {
  std::vector<RegionProposal> proposals;
  int initial_segments = 0;
  int merges = 0;
};

// Hierarchical grouping: starting from a graph-based over-segmentation, the
// most similar adjacent pair is merged until one region remains. Every
// region's bounding rectangle is emitted, initial regions at level 0 and the
// region created by merge t at level t; duplicates keep their highest level.
// The last proposal is the full image.
SelectiveSearchResult selective_search_detailed(const Tensor& image,
                                                const SelectiveSearchOptions& options = {});
std::vector<RegionProposal> selective_search(const Tensor& image,
                                             const SelectiveSearchOptions& options = {});

}  // namespace logonet
