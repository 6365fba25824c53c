// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#include "boxgan/cli.hpp"

int main(int argc, char** argv) { return boxgan::cli::run(argc, argv); }
