// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_core, m)
{
    m.doc() = "splatseg core bindings";
    m.attr("__version__") = "0.1.0";
}
