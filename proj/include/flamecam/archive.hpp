#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flamecam/graph.hpp"

namespace flamecam {

/// FLMCAM01 container:
///   bytes 0..7    magic "FLMCAM01"
///   bytes 8..15   header length N, uint64 little-endian
///   next N bytes  UTF-8 JSON header
///   remainder     concatenated little-endian tensor payloads
/// Each tensor in the header records dtype, shape, optional quant params,
/// and its (offset, nbytes) relative to the start of the payload area.
inline constexpr char kArchiveMagic[8] = {'F', 'L', 'M', 'C', 'A', 'M', '0', '1'};

std::vector<uint8_t> encode_model_archive(const ModelGraph& graph);
ModelGraph decode_model_archive(const std::vector<uint8_t>& bytes);

void write_model_archive(const ModelGraph& graph, const std::string& path);
ModelGraph read_model_archive(const std::string& path);

}  // namespace flamecam
