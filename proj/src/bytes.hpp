#pragma once

#include <bit>
#include <cstdint>
#include <type_traits>
#include <vector>

namespace adaug::bytes {

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                   std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;

template <typename T>
void put_le(std::vector<char>& out, T value) {
    const Bits<T> bits = std::bit_cast<Bits<T>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char*& p) {
    Bits<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<Bits<T>>(static_cast<Bits<T>>(p[i]) << (8 * i));
    p += sizeof(T);
    return std::bit_cast<T>(bits);
}

}  // namespace adaug::bytes
