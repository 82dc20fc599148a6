// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_TESTS_COMMON_HPP
#define SPLATSEG_TESTS_COMMON_HPP

#include "splatseg/error.hpp"

#include <doctest.h>

/// Asserts that expr raises a splatseg::Error of the given kind.
#define CHECK_THROWS_AS_KIND(expr, kindv)                                                     \
    do {                                                                                      \
        bool caughtKind_ = false;                                                             \
        try {                                                                                 \
            (void)(expr);                                                                     \
        } catch (const splatseg::Error& e_) {                                                 \
            caughtKind_ = true;                                                               \
            CHECK_MESSAGE(e_.kind() == (kindv), "wrong error kind, message: " << e_.what());  \
        }                                                                                     \
        CHECK_MESSAGE(caughtKind_, "expected an error of kind " #kindv);                      \
    } while (0)

#endif // SPLATSEG_TESTS_COMMON_HPP
