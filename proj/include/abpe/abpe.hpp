#pragma once

#include <abpe/bpe.hpp>
#include <abpe/codec.hpp>
#include <abpe/corpus_io.hpp>
#include <abpe/discretizer.hpp>
#include <abpe/error.hpp>
#include <abpe/metrics.hpp>
#include <abpe/rescore.hpp>
#include <abpe/slm.hpp>
#include <abpe/version.hpp>
