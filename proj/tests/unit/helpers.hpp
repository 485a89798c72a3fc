#pragma once

#include <gtest/gtest.h>

#include "ssmae/error.hpp"

// Runs `stmt` and checks it throws ssmae::Error with the given category.
#define EXPECT_ERRC(stmt, errc)                                                      \
  do {                                                                               \
    try {                                                                            \
      stmt;                                                                          \
      ADD_FAILURE() << "no exception from " #stmt;                                   \
    } catch (const ssmae::Error& e) {                                                \
      EXPECT_EQ(e.code(), errc) << e.what();                                         \
    }                                                                                \
  } while (0)
