#pragma once

#include "frugal/errors.hpp"
#include "frugal/hashing.hpp"
#include "frugal/corpus.hpp"
#include "frugal/tokenizer.hpp"
#include "frugal/transport.hpp"
#include "frugal/embeddings.hpp"
#include "frugal/llm_client.hpp"
#include "frugal/scorer_client.hpp"
#include "frugal/stubs.hpp"
#include "frugal/compressor.hpp"
#include "frugal/prompt.hpp"
#include "frugal/optimizer.hpp"
#include "frugal/metrics.hpp"
#include "frugal/harness.hpp"
#include "frugal/synthetic.hpp"
