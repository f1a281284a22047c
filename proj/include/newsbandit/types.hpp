#pragma once

#include <cstdint>

namespace nb {

// Dense indices; external string ids are mapped by the World loader.
using ItemId = std::uint32_t;
using UserId = std::uint32_t;
using TopicId = std::uint32_t;
using ArmId = std::uint32_t;  // an item in stage two, a topic in stage one

}  // namespace nb
