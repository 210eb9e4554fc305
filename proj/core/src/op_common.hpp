#pragma once

#include <stdexcept>
#include <string>

#include "cfstereo/tensor.hpp"

namespace cfstereo {
namespace detail {

template <typename T>
inline void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename T>
inline void check_rank(const char* op, const Tensor<T>& t, int rank) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    ", got shape " + shape_str(t.shape()));
}

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace detail
}  // namespace cfstereo
