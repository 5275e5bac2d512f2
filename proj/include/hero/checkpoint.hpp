/**
 * \file checkpoint.hpp
 * \brief Binary model checkpoints.
 *
 * Layout (little-endian): "HERM", u32 version, u32 byte length of a UTF-8 JSON
 * architecture descriptor, the descriptor, then the parameter vector as f32,
 * then the batch-norm running statistics as f32. The descriptor records both
 * vector lengths.
 */
#pragma once

#include <cstdint>
#include <filesystem>

#include "hero/network.hpp"

namespace hero {

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const FeatureModel& model);

/** \brief Throws ParseError on a malformed or inconsistent file */
FeatureModel load_checkpoint(const std::filesystem::path& path);

}  // namespace hero
