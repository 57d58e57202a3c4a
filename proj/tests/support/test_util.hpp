#pragma once

#include <doctest.h>

#include "trae/error.hpp"

#define CHECK_THROWS_KIND(expr, expected_kind)                            \
    do {                                                                  \
        bool thrown_ = false;                                             \
        try {                                                             \
            (void)(expr);                                                 \
        } catch (const trae::Error& e_) {                                 \
            thrown_ = true;                                               \
            CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());       \
        }                                                                 \
        CHECK_MESSAGE(thrown_, "expected " #expected_kind " from " #expr); \
    } while (0)
