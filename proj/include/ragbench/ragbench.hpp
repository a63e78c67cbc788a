#pragma once

#include "ragbench/chunking.hpp"
#include "ragbench/corpus.hpp"
#include "ragbench/embedding.hpp"
#include "ragbench/error.hpp"
#include "ragbench/evaluation.hpp"
#include "ragbench/generation.hpp"
#include "ragbench/retrieval.hpp"
#include "ragbench/runner.hpp"
#include "ragbench/text.hpp"
#include "ragbench/vector_index.hpp"
