// Copyright 2026 The cdngp Authors
// SPDX-License-Identifier: Apache-2.0

#include "cdngp/cli.hpp"

int main(int argc, char** argv) { return cdngp::run_cli(argc, argv); }
