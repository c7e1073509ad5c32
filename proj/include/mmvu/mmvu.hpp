#pragma once

#include "mmvu/adapter.hpp"
#include "mmvu/analytics.hpp"
#include "mmvu/attention_dump.hpp"
#include "mmvu/benchmark.hpp"
#include "mmvu/config.hpp"
#include "mmvu/datagen.hpp"
#include "mmvu/error.hpp"
#include "mmvu/eval.hpp"
#include "mmvu/image.hpp"
#include "mmvu/metrics.hpp"
#include "mmvu/outcome.hpp"
#include "mmvu/report.hpp"
#include "mmvu/var.hpp"

namespace mmvu {
inline constexpr std::string_view kVersion = "0.1.0";
}  // namespace mmvu
